#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "fedsentinel/simulator.hpp"

namespace {

using fedsentinel::SimulationConfig;

struct CliOptions {
    SimulationConfig sim;
    std::string defense = "confidence";
    std::string attack = "none";
    std::string knowledge = "full";
    std::string out = "runs/out";
    std::vector<int> layers;
    std::string profile = "desk";
};

void apply_profile(CliOptions& opt) {
    if (opt.profile == "desk") {
        opt.sim.n_clients = 10;
        opt.sim.rounds = 30;
        opt.sim.train.epochs = 20;
        opt.sim.train.learning_rate = 0.4;
        opt.sim.model.layer_sizes = {32, 32, 10};
        opt.sim.data_spec = "synthetic:1800,32,10,0.25";
        opt.sim.eval_every = 1;
        // At 10 clients the cross-client update spread is roughly an order of
        // magnitude tighter than in the 50-client full-scale regime, so the
        // LIE coefficient is scaled up to keep the poison-to-recovery ratio
        // comparable; --z overrides.
        opt.sim.attack.z = 10.0;
    } else if (opt.profile == "paper") {
        opt.sim.n_clients = 50;
        opt.sim.rounds = 200;
        opt.sim.train.epochs = 20;
        opt.sim.model.layer_sizes = {784, 512, 10};
        opt.sim.data_spec = "idx:./mnist";
        opt.sim.eval_every = 5;
    } else {
        throw CLI::ValidationError("--profile", "unknown profile (want desk or paper): " + opt.profile);
    }
    opt.layers = opt.sim.model.layer_sizes;
}

void add_common_options(CLI::App& sub, CliOptions& opt) {
    sub.add_option("--profile", opt.profile, "Preset: desk (n=10, 30 rounds) or paper (n=50, 200 rounds)")
        ->check(CLI::IsMember({"desk", "paper"}));
    sub.add_option("--clients", opt.sim.n_clients, "Number of clients");
    sub.add_option("--rounds", opt.sim.rounds, "Communication rounds");
    sub.add_option("--fraction", opt.sim.malicious_fraction, "Malicious client fraction in [0,1]");
    sub.add_option("--defense", opt.defense, "Aggregation defense")
        ->check(CLI::IsMember({"fedavg", "trimmean", "confidence"}));
    sub.add_option("--attack", opt.attack, "Attack kind")
        ->check(CLI::IsMember({"none", "ls", "lie", "mm", "ms"}));
    sub.add_option("--knowledge", opt.knowledge, "Adversary knowledge of honest updates")
        ->check(CLI::IsMember({"full", "partial"}));
    sub.add_option("--z", opt.sim.attack.z, "LIE deviation coefficient");
    sub.add_option("--gamma-tol", opt.sim.attack.gamma_tol, "Min-Max/Min-Sum binary search tolerance");
    sub.add_option("--alpha", opt.sim.partition.alpha, "Dirichlet concentration for the non-IID split");
    sub.add_option("--min-samples", opt.sim.partition.min_samples_per_client,
                   "Minimum local samples per client");
    sub.add_option("--lambda", opt.sim.confidence.lambda, "Confidence regularization parameter");
    sub.add_option("--gap-threshold", opt.sim.detection.epsilon_gap,
                   "Raw score span below which every client is kept (no-attack guard)");
    sub.add_option("--trim-beta", opt.sim.trim_beta, "TrimMean per-side trim fraction");
    sub.add_option("--epochs", opt.sim.train.epochs, "Local epochs per round");
    sub.add_option("--batch", opt.sim.train.batch_size, "Local batch size");
    sub.add_option("--lr", opt.sim.train.learning_rate, "Local learning rate");
    sub.add_option("--wd", opt.sim.train.weight_decay, "Weight decay");
    sub.add_option("--model", opt.layers, "MLP layer sizes, e.g. 784,512,10")->delimiter(',');
    sub.add_option("--data", opt.sim.data_spec,
                   "idx:<dir> or synthetic:<n>,<d>,<C>[,<noise>[,<rho>]]");
    sub.add_option("--subsample-train", opt.sim.subsample_train,
                   "Stratified subsample of the train split (0 = all)");
    sub.add_option("--subsample-test", opt.sim.subsample_test,
                   "Stratified subsample of the test split (0 = all)");
    sub.add_option("--eval-every", opt.sim.eval_every, "Evaluate the global model every k rounds");
    sub.add_option("--seed", opt.sim.seed, "Run seed (drives all randomness)");
    sub.add_option("--threads", opt.sim.threads, "Worker threads for local training");
    sub.add_option("--out", opt.out, "Output directory");
    sub.add_flag("--dump-weights", opt.sim.dump_weights, "Also write per-round aggregation weights");
    sub.add_flag("--no-reweight", [&opt](std::int64_t) { opt.sim.reweight = false; },
                 "Ablation: unweighted mean over the detected honest set");
    sub.add_flag("--single-length-weighting", opt.sim.single_length_weighting,
                 "Drop the extra data-length factor in the final weighted average");
}

SimulationConfig finalize(CliOptions& opt) {
    opt.sim.defense = fedsentinel::defense_from_string(opt.defense);
    opt.sim.attack.kind = fedsentinel::attack_kind_from_string(opt.attack);
    opt.sim.attack.knowledge = fedsentinel::knowledge_from_string(opt.knowledge);
    opt.sim.model.layer_sizes = opt.layers;
    return opt.sim.resolved();
}

void print_summary(const std::vector<fedsentinel::RoundMetrics>& metrics) {
    if (metrics.empty()) return;
    const auto& last = metrics.back();
    std::size_t tail = std::min<std::size_t>(10, metrics.size());
    double tpr = 0.0, fpr = 0.0;
    for (std::size_t i = metrics.size() - tail; i < metrics.size(); ++i) {
        tpr += metrics[i].tpr;
        fpr += metrics[i].fpr;
    }
    std::printf("final accuracy %.4f | tpr(last %zu) %.3f | fpr(last %zu) %.3f | honest %d/%zu\n",
                last.accuracy, tail, tpr / double(tail), tail, fpr / double(tail),
                last.honest_count, last.clients.size());
}

int do_run(CliOptions& opt) {
    const SimulationConfig cfg = finalize(opt);
    cfg.validate();
    std::printf("run: defense=%s attack=%s knowledge=%s fraction=%.2f clients=%d rounds=%d seed=%llu\n",
                fedsentinel::to_string(cfg.defense).c_str(), fedsentinel::to_string(cfg.attack.kind).c_str(),
                fedsentinel::to_string(cfg.attack.knowledge).c_str(), cfg.malicious_fraction,
                cfg.n_clients, cfg.rounds, static_cast<unsigned long long>(cfg.seed));
    const auto metrics = fedsentinel::run(cfg);
    fedsentinel::write_report(metrics, cfg, opt.out);
    print_summary(metrics);
    std::printf("wrote %s/{metrics.csv,scores.csv,run.json}\n", opt.out.c_str());
    return 0;
}

int do_sweep(CliOptions& opt, const std::vector<double>& fractions,
             const std::vector<std::string>& attacks, const std::vector<std::string>& defenses) {
    const SimulationConfig base = finalize(opt);
    base.validate();

    struct Row {
        std::string attack, defense;
        double fraction, accuracy, tpr, fpr;
    };
    std::vector<Row> rows;
    for (const std::string& atk : attacks)
        for (double frac : fractions)
            for (const std::string& def : defenses) {
                SimulationConfig cfg = base;
                cfg.attack.kind = fedsentinel::attack_kind_from_string(atk);
                cfg.defense = fedsentinel::defense_from_string(def);
                cfg.malicious_fraction = frac;
                char cell[128];
                std::snprintf(cell, sizeof cell, "%s_%s_f%02d", atk.c_str(), def.c_str(),
                              int(std::lround(frac * 100)));
                std::printf("sweep cell %s ...\n", cell);
                std::fflush(stdout);
                const auto metrics = fedsentinel::run(cfg);
                fedsentinel::write_report(metrics, cfg, opt.out + "/" + cell);

                std::size_t tail = std::min<std::size_t>(10, metrics.size());
                double tpr = 0.0, fpr = 0.0;
                for (std::size_t i = metrics.size() - tail; i < metrics.size(); ++i) {
                    tpr += metrics[i].tpr;
                    fpr += metrics[i].fpr;
                }
                rows.push_back({atk, def, frac, metrics.back().accuracy, tpr / double(tail),
                                fpr / double(tail)});
            }

    const std::string summary_path = opt.out + "/summary.csv";
    {
        std::FILE* f = std::fopen(summary_path.c_str(), "w");
        if (!f) throw std::runtime_error("failed writing " + summary_path);
        std::fprintf(f, "attack,defense,fraction,final_accuracy,mean_tpr_last10,mean_fpr_last10\n");
        for (const Row& r : rows)
            std::fprintf(f, "%s,%s,%.2f,%.6f,%.6f,%.6f\n", r.attack.c_str(), r.defense.c_str(),
                         r.fraction, r.accuracy, r.tpr, r.fpr);
        std::fclose(f);
    }
    std::printf("\n%-8s %-12s %-9s %-9s %-7s %-7s\n", "attack", "defense", "fraction", "accuracy",
                "tpr", "fpr");
    for (const Row& r : rows)
        std::printf("%-8s %-12s %-9.2f %-9.4f %-7.3f %-7.3f\n", r.attack.c_str(), r.defense.c_str(),
                    r.fraction, r.accuracy, r.tpr, r.fpr);
    std::printf("wrote %s\n", summary_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FedSentinel: federated-learning attack/defense simulator with "
                 "confidence-based malicious client detection"};
    app.require_subcommand(1);

    CliOptions run_opt, sweep_opt;
    // The profile sets the defaults every other flag overrides, so it has to
    // be known before CLI11 binds those defaults: scan for it up front.
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--profile" && i + 1 < argc) run_opt.profile = argv[i + 1];
        if (a.rfind("--profile=", 0) == 0) run_opt.profile = a.substr(10);
    }
    sweep_opt.profile = run_opt.profile;
    try {
        apply_profile(run_opt);
        apply_profile(sweep_opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    CLI::App* run_cmd = app.add_subcommand("run", "Execute one simulation");
    add_common_options(*run_cmd, run_opt);

    CLI::App* sweep_cmd =
        app.add_subcommand("sweep", "Run a grid of fractions x attacks x defenses");
    add_common_options(*sweep_cmd, sweep_opt);
    std::vector<double> fractions{0.25, 0.5, 0.75};
    std::vector<std::string> attacks{"ls", "lie", "mm", "ms"};
    std::vector<std::string> defenses{"fedavg", "trimmean", "confidence"};
    sweep_cmd->add_option("--fractions", fractions, "Malicious fractions to sweep")->delimiter(',');
    sweep_cmd->add_option("--attacks", attacks, "Attacks to sweep")->delimiter(',');
    sweep_cmd->add_option("--defenses", defenses, "Defenses to sweep")->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return do_run(run_opt);
        return do_sweep(sweep_opt, fractions, attacks, defenses);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
