#include "fedsentinel/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "fedsentinel/rng.hpp"

namespace fedsentinel {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("truncated IDX file: " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

void Dataset::validate() const {
    if (features.rows != labels.size())
        throw std::invalid_argument("dataset: feature rows do not match label count");
    if (num_classes < 1) throw std::invalid_argument("dataset: class count must be positive");
    for (int y : labels)
        if (y < 0 || y >= num_classes)
            throw std::invalid_argument("dataset: label out of [0, C)");
}

void PartitionConfig::validate() const {
    if (n_clients < 2) throw std::invalid_argument("partition: need at least 2 clients");
    if (!(alpha > 0.0)) throw std::invalid_argument("partition: alpha must be positive");
    if (min_samples_per_client < 1)
        throw std::invalid_argument("partition: min_samples_per_client must be positive");
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("cannot open IDX image file: " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("cannot open IDX label file: " + labels_path);

    if (read_be32(img, images_path) != kImagesMagic)
        throw std::runtime_error("bad IDX magic in image file: " + images_path);
    const std::uint32_t n_img = read_be32(img, images_path);
    const std::uint32_t rows = read_be32(img, images_path);
    const std::uint32_t cols = read_be32(img, images_path);

    if (read_be32(lab, labels_path) != kLabelsMagic)
        throw std::runtime_error("bad IDX magic in label file: " + labels_path);
    const std::uint32_t n_lab = read_be32(lab, labels_path);

    if (n_img != n_lab)
        throw std::runtime_error("IDX count mismatch between " + images_path + " and " + labels_path);

    const std::size_t dim = std::size_t(rows) * cols;
    Dataset ds;
    ds.features = Matrix(n_img, dim);
    ds.labels.resize(n_img);

    std::vector<unsigned char> buf(dim);
    for (std::uint32_t i = 0; i < n_img; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), std::streamsize(dim)))
            throw std::runtime_error("truncated IDX file: " + images_path);
        double* row = ds.features.row_ptr(i);
        for (std::size_t j = 0; j < dim; ++j) row[j] = buf[j] / 255.0;
    }
    std::vector<unsigned char> lbuf(n_lab);
    if (n_lab > 0 && !lab.read(reinterpret_cast<char*>(lbuf.data()), std::streamsize(n_lab)))
        throw std::runtime_error("truncated IDX file: " + labels_path);

    int max_label = 0;
    for (std::uint32_t i = 0; i < n_lab; ++i) {
        ds.labels[i] = lbuf[i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = std::max(10, max_label + 1);
    ds.validate();
    return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("cannot create IDX image file: " + images_path);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("cannot create IDX label file: " + labels_path);

    write_be32(img, kImagesMagic);
    write_be32(img, std::uint32_t(ds.features.rows));
    write_be32(img, std::uint32_t(ds.features.cols));
    write_be32(img, 1);
    for (std::size_t i = 0; i < ds.features.rows; ++i) {
        const double* row = ds.features.row_ptr(i);
        for (std::size_t j = 0; j < ds.features.cols; ++j) {
            const long q = std::lround(std::clamp(row[j], 0.0, 1.0) * 255.0);
            const unsigned char b = static_cast<unsigned char>(q);
            img.write(reinterpret_cast<const char*>(&b), 1);
        }
    }
    write_be32(lab, kLabelsMagic);
    write_be32(lab, std::uint32_t(ds.labels.size()));
    for (int y : ds.labels) {
        const unsigned char b = static_cast<unsigned char>(y);
        lab.write(reinterpret_cast<const char*>(&b), 1);
    }
}

Dataset make_synthetic(std::size_t n_samples, int n_features, int n_classes, std::uint64_t seed,
                       double noise) {
    if (n_samples == 0 || n_features < 1 || n_classes < 2)
        throw std::invalid_argument("make_synthetic: need n_samples > 0, n_features > 0, C >= 2");
    if (!std::isfinite(noise) || noise <= 0.0)
        throw std::invalid_argument("make_synthetic: noise must be finite and positive");

    Rng rng(mix_seed(seed, 0x5a17));

    // Fixed block geometry: class c owns the feature block [c*w, (c+1)*w) with
    // w = max(1, d/C) (wrapping when d < C); owned features carry a high mean,
    // everything else sits near zero. Every class pair is then equidistant, so
    // task difficulty is set by `noise` alone and does not vary with the seed —
    // the seed only moves the sample draws. `noise` controls class overlap
    // (Bayes error), which is what makes heterogeneous clients pull the shared
    // model in genuinely conflicting directions.
    // The active amplitude shrinks as sqrt(3/w) so the between-class L2 margin
    // is the same for any d: extra features add parameter-space volume (and
    // thus client-update diversity) without changing the Bayes error.
    Matrix means{std::size_t(n_classes), std::size_t(n_features)};
    const int width = std::max(1, n_features / n_classes);
    const double active = 0.1 + 0.7 * std::min(1.0, std::sqrt(3.0 / double(width)));
    for (int c = 0; c < n_classes; ++c) {
        for (int j = 0; j < n_features; ++j) means(c, j) = 0.1;
        for (int k = 0; k < width; ++k) means(c, (c * width + k) % n_features) = active;
    }

    Dataset ds;
    ds.num_classes = n_classes;
    ds.features = Matrix(n_samples, std::size_t(n_features));
    ds.labels.resize(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const int c = int(i % std::size_t(n_classes));  // balanced label counts
        ds.labels[i] = c;
        double* row = ds.features.row_ptr(i);
        for (int j = 0; j < n_features; ++j)
            row[j] = std::clamp(means(c, j) + noise * rng.normal(), 0.0, 1.0);
    }
    return ds;
}

std::vector<std::vector<std::size_t>> partition_dirichlet(const Dataset& ds, const PartitionConfig& cfg) {
    cfg.validate();
    ds.validate();
    const std::size_t n = ds.size();
    const std::size_t needed = std::size_t(cfg.n_clients) * std::size_t(cfg.min_samples_per_client);
    if (n < needed)
        throw std::invalid_argument("partition: dataset smaller than n_clients * min_samples_per_client");

    Rng rng(mix_seed(cfg.seed, 0xd112));

    // Bucket indices per class, shuffle within each class, then slice each
    // class across clients by Dirichlet-drawn proportions.
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < n; ++i) by_class[ds.labels[i]].push_back(i);

    std::vector<std::vector<std::size_t>> parts(cfg.n_clients);
    for (auto& cls : by_class) {
        if (cls.empty()) continue;
        rng.shuffle(cls);
        const std::vector<double> p = rng.dirichlet(cfg.alpha, std::size_t(cfg.n_clients));
        std::size_t start = 0;
        double cum = 0.0;
        for (int c = 0; c < cfg.n_clients; ++c) {
            cum += p[c];
            const std::size_t end = (c == cfg.n_clients - 1)
                                        ? cls.size()
                                        : std::min(cls.size(), std::size_t(std::floor(cum * double(cls.size()))));
            for (std::size_t k = start; k < end; ++k) parts[c].push_back(cls[k]);
            start = end;
        }
    }

    // Top up starved clients from whichever client is currently largest.
    for (;;) {
        int smallest = 0, largest = 0;
        for (int c = 1; c < cfg.n_clients; ++c) {
            if (parts[c].size() < parts[smallest].size()) smallest = c;
            if (parts[c].size() > parts[largest].size()) largest = c;
        }
        if (parts[smallest].size() >= std::size_t(cfg.min_samples_per_client)) break;
        parts[smallest].push_back(parts[largest].back());
        parts[largest].pop_back();
    }

    for (auto& part : parts) std::sort(part.begin(), part.end());
    return parts;
}

Dataset shuffle_labels(const Dataset& ds, std::uint64_t seed) {
    ds.validate();
    if (ds.size() == 0) throw std::invalid_argument("shuffle_labels: dataset is empty");
    Dataset out = ds;
    Rng rng(mix_seed(seed, 0x15be));
    rng.shuffle(out.labels);
    return out;
}

Dataset relabel_uniform(const Dataset& ds, double rho, std::uint64_t seed) {
    ds.validate();
    if (!(rho >= 0.0 && rho <= 1.0))
        throw std::invalid_argument("relabel_uniform: rho must be in [0, 1]");
    Dataset out = ds;
    if (rho == 0.0) return out;
    Rng rng(mix_seed(seed, 0x12e1));
    for (int& label : out.labels) {
        if (rng.uniform01() >= rho) continue;
        // Uniform over the other C-1 classes.
        int pick = int(rng.uniform_int(std::uint64_t(ds.num_classes - 1)));
        if (pick >= label) ++pick;
        label = pick;
    }
    return out;
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.num_classes = ds.num_classes;
    out.features = Matrix(indices.size(), ds.features.cols);
    out.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        std::copy_n(ds.features.row_ptr(src), ds.features.cols, out.features.row_ptr(i));
        out.labels[i] = ds.labels[src];
    }
    return out;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("split_train_test: test_fraction must be in (0,1)");
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix_seed(seed, 0x7e57));
    rng.shuffle(idx);
    const std::size_t n_test = std::max<std::size_t>(1, std::size_t(std::llround(test_fraction * double(ds.size()))));
    std::vector<std::size_t> test_idx(idx.begin(), idx.begin() + n_test);
    std::vector<std::size_t> train_idx(idx.begin() + n_test, idx.end());
    return {subset(ds, train_idx), subset(ds, test_idx)};
}

std::vector<std::size_t> stratified_subsample(const Dataset& ds, std::size_t n, std::uint64_t seed) {
    if (n == 0 || n >= ds.size()) {
        std::vector<std::size_t> all(ds.size());
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    Rng rng(mix_seed(seed, 0x57a7));
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
    std::vector<std::size_t> picked;
    picked.reserve(n);
    for (auto& cls : by_class) {
        rng.shuffle(cls);
        const std::size_t take = std::min(cls.size(), (cls.size() * n + ds.size() - 1) / ds.size());
        picked.insert(picked.end(), cls.begin(), cls.begin() + take);
    }
    rng.shuffle(picked);
    if (picked.size() > n) picked.resize(n);
    std::sort(picked.begin(), picked.end());
    return picked;
}

std::pair<Dataset, Dataset> load_data_spec(const std::string& spec, std::uint64_t seed,
                                           std::size_t subsample_train, std::size_t subsample_test) {
    Dataset train, test;
    if (spec.rfind("idx:", 0) == 0) {
        const std::filesystem::path dir = spec.substr(4);
        train = load_idx((dir / "train-images-idx3-ubyte").string(),
                         (dir / "train-labels-idx1-ubyte").string());
        test = load_idx((dir / "t10k-images-idx3-ubyte").string(),
                        (dir / "t10k-labels-idx1-ubyte").string());
    } else if (spec.rfind("synthetic:", 0) == 0) {
        const char* body = spec.c_str() + 10;
        std::size_t n = 0;
        int d = 0, c = 0, consumed = 0;
        double noise = 0.15, rho = 0.0;
        bool ok = std::sscanf(body, "%zu,%d,%d,%lf,%lf%n", &n, &d, &c, &noise, &rho, &consumed) == 5 &&
                  body[consumed] == '\0';
        if (!ok) {
            rho = 0.0;
            ok = std::sscanf(body, "%zu,%d,%d,%lf%n", &n, &d, &c, &noise, &consumed) == 4 &&
                 body[consumed] == '\0';
        }
        if (!ok) {
            noise = 0.15;
            ok = std::sscanf(body, "%zu,%d,%d%n", &n, &d, &c, &consumed) == 3 && body[consumed] == '\0';
        }
        if (!ok)
            throw std::invalid_argument(
                "data spec must be synthetic:<n>,<d>,<C>[,<noise>[,<rho>]]: " + spec);
        const Dataset full = make_synthetic(n, d, c, mix_seed(seed, 0xda7a), noise);
        std::tie(train, test) = split_train_test(full, 0.2, mix_seed(seed, 0x5b17));
        // Training-label corruption only; the held-out test split stays clean.
        if (rho != 0.0) train = relabel_uniform(train, rho, mix_seed(seed, 0xda7b));
    } else {
        throw std::invalid_argument(
            "unknown data spec (want idx:<dir> or synthetic:<n>,<d>,<C>[,<noise>[,<rho>]]): " + spec);
    }
    if (subsample_train != 0 && subsample_train < train.size())
        train = subset(train, stratified_subsample(train, subsample_train, mix_seed(seed, 0x5ab1)));
    if (subsample_test != 0 && subsample_test < test.size())
        test = subset(test, stratified_subsample(test, subsample_test, mix_seed(seed, 0x5ab2)));
    return {train, test};
}

}  // namespace fedsentinel
