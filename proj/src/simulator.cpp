#include "fedsentinel/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <utility>

#include "fedsentinel/rng.hpp"

namespace fedsentinel {

namespace {

// Runs fn(0..n-1) across up to `threads` workers. Every index writes only
// its own output slots, so results never depend on the thread count.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    const int workers = std::max(1, std::min(threads, n));
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            try {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!error) error = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void check_stream(const std::ofstream& out, const std::string& path) {
    if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace

void SimulationConfig::validate() const {
    if (n_clients < 2) throw std::invalid_argument("simulation: need at least 2 clients");
    if (malicious_fraction < 0.0 || malicious_fraction > 1.0)
        throw std::invalid_argument("simulation: malicious_fraction must be in [0,1]");
    if (rounds < 1) throw std::invalid_argument("simulation: rounds must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("simulation: eval_every must be >= 1");
    if (threads < 0) throw std::invalid_argument("simulation: threads must be nonnegative");
    attack.validate();
    partition.validate();
    train.validate();
    model.validate();
    confidence.validate();
    detection.validate();
    if (defense == Defense::trimmean) {
        const int trim = int(std::floor(trim_beta * double(n_clients)));
        if (trim_beta < 0.0 || 2 * trim >= n_clients)
            throw std::invalid_argument("simulation: trim_beta trims away all clients");
    }
    if (data_spec.empty()) throw std::invalid_argument("simulation: data_spec is empty");
}

SimulationConfig SimulationConfig::resolved() const {
    SimulationConfig r = *this;
    r.partition.n_clients = n_clients;
    r.partition.seed = seed;
    r.train.seed = mix_seed(seed, 0x7e41);
    r.confidence.num_classes = model.num_classes();
    return r;
}

std::set<int> select_malicious(int n, double fraction, std::uint64_t seed) {
    if (n < 0) throw std::invalid_argument("select_malicious: negative client count");
    if (fraction < 0.0 || fraction > 1.0)
        throw std::invalid_argument("select_malicious: fraction must be in [0,1]");
    const int k = int(std::lround(fraction * double(n)));
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(mix_seed(seed, 0x3a1d));
    rng.shuffle(ids);
    return std::set<int>(ids.begin(), ids.begin() + k);
}

std::vector<RoundMetrics> run(const SimulationConfig& config, const Dataset& train_set,
                              const Dataset& test_set) {
    const SimulationConfig cfg = config.resolved();
    cfg.validate();
    train_set.validate();
    test_set.validate();
    if (train_set.num_classes != cfg.model.num_classes() ||
        test_set.num_classes != cfg.model.num_classes())
        throw std::invalid_argument("simulation: dataset class count does not match the model");
    if (train_set.features.cols != std::size_t(cfg.model.input_dim()))
        throw std::invalid_argument("simulation: dataset dimension does not match the model");
    if (test_set.size() == 0) throw std::invalid_argument("simulation: test set is empty");

    const int n = cfg.n_clients;
    const auto part_indices = partition_dirichlet(train_set, cfg.partition);
    std::vector<Dataset> parts;
    parts.reserve(n);
    for (const auto& idx : part_indices) parts.push_back(subset(train_set, idx));

    const std::set<int> truth = select_malicious(n, cfg.malicious_fraction, cfg.seed);
    if (cfg.attack.kind == AttackKind::label_shuffle)
        for (int id : truth)
            parts[id] = shuffle_labels(parts[id], mix_seed(cfg.seed, 0x9000 + std::uint64_t(id)));

    std::set<int> all_ids;
    for (int i = 0; i < n; ++i) all_ids.insert(i);

    ParamVector global = init_params(cfg.model, mix_seed(cfg.seed, 0x91c0));
    double last_acc = evaluate(global, test_set);

    std::vector<RoundMetrics> metrics;
    metrics.reserve(cfg.rounds);
    for (int round = 1; round <= cfg.rounds; ++round) {
        // Step 2: local training from the broadcast global model.
        std::vector<ParamVector> updates(n);
        parallel_for(n, cfg.threads, [&](int i) {
            TrainConfig tc = cfg.train;
            tc.seed = mix_seed(mix_seed(cfg.train.seed, std::uint64_t(round)), std::uint64_t(i));
            updates[i] = train_local(global, parts[i], tc);
        });

        // Step 3: model poisoning, then each client measures its confidence
        // on its local training data with the parameters it submits.
        std::map<int, ParamVector> submitted;
        for (int i = 0; i < n; ++i) submitted.emplace(i, std::move(updates[i]));
        submitted = apply_attack(submitted, truth, cfg.attack);

        std::vector<double> sigma(n, 0.0);
        parallel_for(n, cfg.threads, [&](int i) {
            const auto losses =
                per_sample_loss(submitted.at(i), parts[i].features, parts[i].labels);
            sigma[i] = client_confidence(losses, cfg.confidence);
        });
        std::map<int, double> raw;
        for (int i = 0; i < n; ++i) raw.emplace(i, sigma[i]);

        std::vector<ClientReport> reports;
        reports.reserve(n);
        for (int i = 0; i < n; ++i)
            reports.push_back(
                ClientReport{i, std::move(submitted.at(i)), sigma[i], parts[i].size()});

        // Steps 4-5: detection (confidence defense only) and aggregation.
        RoundMetrics rm;
        rm.round = round;
        const ScoreSet scores = normalize_scores(raw);
        for (int i = 0; i < n; ++i)
            rm.clients.push_back(ClientTrace{i, raw.at(i), scores.normalized.at(i), false});

        if (cfg.defense == Defense::confidence) {
            const DetectionOutcome outcome = classify_clients(scores, cfg.detection);
            const DetectionMetrics dm = detection_metrics(outcome.malicious, truth, all_ids);
            rm.tpr = dm.tpr;
            rm.fpr = dm.fpr;
            rm.honest_count = int(outcome.honest.size());
            rm.degenerate = outcome.degenerate;
            rm.mu_lower = outcome.mu_lower;
            rm.mu_upper = outcome.mu_upper;
            for (ClientTrace& tr : rm.clients)
                tr.flagged = outcome.malicious.count(tr.client_id) > 0;

            if (outcome.degenerate) {
                // Guard fired: no meaningful separation, aggregate everyone
                // exactly as FedAvg would.
                global = fedavg(reports);
            } else if (outcome.honest.empty()) {
                std::cerr << "warning: round " << round
                          << ": no honest clients detected; keeping previous global model\n";
            } else if (cfg.reweight) {
                auto [theta, w] =
                    reweighted_aggregate(reports, outcome, scores, cfg.single_length_weighting);
                global = std::move(theta);
                rm.weights = std::move(w);
            } else {
                global = honest_mean(reports, outcome);
            }
        } else {
            rm.tpr = 0.0;  // sentinel: no detection ran
            rm.fpr = 0.0;
            rm.honest_count = n;
            global = cfg.defense == Defense::fedavg ? fedavg(reports)
                                                    : trimmed_mean(reports, cfg.trim_beta);
        }

        if (round % cfg.eval_every == 0 || round == cfg.rounds)
            last_acc = evaluate(global, test_set);
        rm.accuracy = last_acc;
        metrics.push_back(std::move(rm));
    }
    return metrics;
}

std::vector<RoundMetrics> run(const SimulationConfig& config) {
    const SimulationConfig cfg = config.resolved();
    cfg.validate();
    const auto [train_set, test_set] =
        load_data_spec(cfg.data_spec, cfg.seed, cfg.subsample_train, cfg.subsample_test);
    return run(config, train_set, test_set);
}

void write_report(const std::vector<RoundMetrics>& metrics, const SimulationConfig& config,
                  const std::string& out_dir) {
    const SimulationConfig cfg = config.resolved();
    std::filesystem::create_directories(out_dir);
    const std::string metrics_path = out_dir + "/metrics.csv";
    const std::string scores_path = out_dir + "/scores.csv";
    const std::string json_path = out_dir + "/run.json";

    {
        std::ofstream out(metrics_path);
        check_stream(out, metrics_path);
        out << "round,accuracy,tpr,fpr,honest_count\n";
        for (const RoundMetrics& rm : metrics)
            out << rm.round << ',' << fmt("%.6f", rm.accuracy) << ',' << fmt("%.6f", rm.tpr)
                << ',' << fmt("%.6f", rm.fpr) << ',' << rm.honest_count << '\n';
        out.flush();
        check_stream(out, metrics_path);
    }
    {
        std::ofstream out(scores_path);
        check_stream(out, scores_path);
        out << "round,client_id,sigma_raw,sigma_norm,flagged\n";
        for (const RoundMetrics& rm : metrics)
            for (const ClientTrace& tr : rm.clients)
                out << rm.round << ',' << tr.client_id << ',' << fmt("%.12g", tr.sigma_raw)
                    << ',' << fmt("%.12g", tr.sigma_norm) << ',' << (tr.flagged ? 1 : 0) << '\n';
        out.flush();
        check_stream(out, scores_path);
    }
    if (cfg.dump_weights) {
        const std::string weights_path = out_dir + "/weights.csv";
        std::ofstream out(weights_path);
        check_stream(out, weights_path);
        out << "round,client_id,w_orig,r_norm,w_final\n";
        for (const RoundMetrics& rm : metrics)
            for (const auto& [id, wo] : rm.weights.w_orig)
                out << rm.round << ',' << id << ',' << fmt("%.12g", wo) << ','
                    << fmt("%.12g", rm.weights.r_norm.at(id)) << ','
                    << fmt("%.12g", rm.weights.w_final.at(id)) << '\n';
        out.flush();
        check_stream(out, weights_path);
    }
    {
        nlohmann::json j;
        j["config"] = cfg;
        nlohmann::json rounds = nlohmann::json::array();
        for (const RoundMetrics& rm : metrics) {
            nlohmann::json r{{"round", rm.round},
                             {"accuracy", rm.accuracy},
                             {"tpr", rm.tpr},
                             {"fpr", rm.fpr},
                             {"honest_count", rm.honest_count},
                             {"degenerate", rm.degenerate},
                             {"mu_lower", rm.mu_lower},
                             {"mu_upper", rm.mu_upper}};
            nlohmann::json clients = nlohmann::json::array();
            for (const ClientTrace& tr : rm.clients)
                clients.push_back({{"client_id", tr.client_id},
                                   {"sigma_raw", tr.sigma_raw},
                                   {"sigma_norm", tr.sigma_norm},
                                   {"flagged", tr.flagged}});
            r["clients"] = std::move(clients);
            rounds.push_back(std::move(r));
        }
        j["rounds"] = std::move(rounds);
        std::ofstream out(json_path);
        check_stream(out, json_path);
        out << j.dump(2) << '\n';
        out.flush();
        check_stream(out, json_path);
    }
}

std::string to_string(Defense d) {
    switch (d) {
        case Defense::fedavg: return "fedavg";
        case Defense::trimmean: return "trimmean";
        case Defense::confidence: return "confidence";
    }
    throw std::logic_error("unknown defense enum value");
}

std::string to_string(AttackKind k) {
    switch (k) {
        case AttackKind::none: return "none";
        case AttackKind::label_shuffle: return "ls";
        case AttackKind::lie: return "lie";
        case AttackKind::min_max: return "mm";
        case AttackKind::min_sum: return "ms";
    }
    throw std::logic_error("unknown attack enum value");
}

std::string to_string(Knowledge k) {
    return k == Knowledge::full ? "full" : "partial";
}

Defense defense_from_string(const std::string& s) {
    if (s == "fedavg") return Defense::fedavg;
    if (s == "trimmean") return Defense::trimmean;
    if (s == "confidence") return Defense::confidence;
    throw std::invalid_argument("unknown defense: " + s);
}

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "none") return AttackKind::none;
    if (s == "ls" || s == "label_shuffle") return AttackKind::label_shuffle;
    if (s == "lie") return AttackKind::lie;
    if (s == "mm" || s == "min_max") return AttackKind::min_max;
    if (s == "ms" || s == "min_sum") return AttackKind::min_sum;
    throw std::invalid_argument("unknown attack: " + s);
}

Knowledge knowledge_from_string(const std::string& s) {
    if (s == "full") return Knowledge::full;
    if (s == "partial") return Knowledge::partial;
    throw std::invalid_argument("unknown knowledge mode: " + s);
}

void to_json(nlohmann::json& j, const SimulationConfig& cfg) {
    j = nlohmann::json{
        {"n_clients", cfg.n_clients},
        {"malicious_fraction", cfg.malicious_fraction},
        {"rounds", cfg.rounds},
        {"eval_every", cfg.eval_every},
        {"seed", cfg.seed},
        {"defense", to_string(cfg.defense)},
        {"attack",
         {{"kind", to_string(cfg.attack.kind)},
          {"knowledge", to_string(cfg.attack.knowledge)},
          {"z", cfg.attack.z},
          {"gamma_tol", cfg.attack.gamma_tol},
          {"seed", cfg.attack.seed}}},
        {"partition",
         {{"n_clients", cfg.partition.n_clients},
          {"alpha", cfg.partition.alpha},
          {"seed", cfg.partition.seed},
          {"min_samples_per_client", cfg.partition.min_samples_per_client}}},
        {"train",
         {{"epochs", cfg.train.epochs},
          {"batch_size", cfg.train.batch_size},
          {"learning_rate", cfg.train.learning_rate},
          {"weight_decay", cfg.train.weight_decay},
          {"seed", cfg.train.seed}}},
        {"model", {{"layer_sizes", cfg.model.layer_sizes}}},
        {"confidence", {{"lambda", cfg.confidence.lambda}, {"num_classes", cfg.confidence.num_classes}}},
        {"detection", {{"epsilon_gap", cfg.detection.epsilon_gap}}},
        {"trim_beta", cfg.trim_beta},
        {"reweight", cfg.reweight},
        {"single_length_weighting", cfg.single_length_weighting},
        {"data_spec", cfg.data_spec},
        {"subsample_train", cfg.subsample_train},
        {"subsample_test", cfg.subsample_test},
        {"threads", cfg.threads},
        {"dump_weights", cfg.dump_weights}};
}

void from_json(const nlohmann::json& j, SimulationConfig& cfg) {
    j.at("n_clients").get_to(cfg.n_clients);
    j.at("malicious_fraction").get_to(cfg.malicious_fraction);
    j.at("rounds").get_to(cfg.rounds);
    j.at("eval_every").get_to(cfg.eval_every);
    j.at("seed").get_to(cfg.seed);
    cfg.defense = defense_from_string(j.at("defense").get<std::string>());
    const nlohmann::json& a = j.at("attack");
    cfg.attack.kind = attack_kind_from_string(a.at("kind").get<std::string>());
    cfg.attack.knowledge = knowledge_from_string(a.at("knowledge").get<std::string>());
    a.at("z").get_to(cfg.attack.z);
    a.at("gamma_tol").get_to(cfg.attack.gamma_tol);
    a.at("seed").get_to(cfg.attack.seed);
    const nlohmann::json& p = j.at("partition");
    p.at("n_clients").get_to(cfg.partition.n_clients);
    p.at("alpha").get_to(cfg.partition.alpha);
    p.at("seed").get_to(cfg.partition.seed);
    p.at("min_samples_per_client").get_to(cfg.partition.min_samples_per_client);
    const nlohmann::json& t = j.at("train");
    t.at("epochs").get_to(cfg.train.epochs);
    t.at("batch_size").get_to(cfg.train.batch_size);
    t.at("learning_rate").get_to(cfg.train.learning_rate);
    t.at("weight_decay").get_to(cfg.train.weight_decay);
    t.at("seed").get_to(cfg.train.seed);
    j.at("model").at("layer_sizes").get_to(cfg.model.layer_sizes);
    j.at("confidence").at("lambda").get_to(cfg.confidence.lambda);
    j.at("confidence").at("num_classes").get_to(cfg.confidence.num_classes);
    j.at("detection").at("epsilon_gap").get_to(cfg.detection.epsilon_gap);
    j.at("trim_beta").get_to(cfg.trim_beta);
    j.at("reweight").get_to(cfg.reweight);
    j.at("single_length_weighting").get_to(cfg.single_length_weighting);
    j.at("data_spec").get_to(cfg.data_spec);
    j.at("subsample_train").get_to(cfg.subsample_train);
    j.at("subsample_test").get_to(cfg.subsample_test);
    j.at("threads").get_to(cfg.threads);
    j.at("dump_weights").get_to(cfg.dump_weights);
}

}  // namespace fedsentinel
