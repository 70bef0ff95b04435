#include "fedsentinel/nn.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fedsentinel/rng.hpp"

extern "C" void openblas_set_num_threads(int) __attribute__((weak));

namespace fedsentinel {

namespace {

constexpr double kProbClamp = 1e-7;

// The engine issues its own client-level parallelism; keep BLAS serial.
struct BlasInit {
    BlasInit() {
        if (openblas_set_num_threads) openblas_set_num_threads(1);
    }
};
const BlasInit blas_init;

struct LayerView {
    const double* w;  // out x in
    const double* b;  // out
    int in, out;
};

std::vector<LayerView> layer_views(const ParamVector& params) {
    std::vector<LayerView> views;
    const double* p = params.values.data();
    for (std::size_t l = 0; l + 1 < params.spec.layer_sizes.size(); ++l) {
        const int in = params.spec.layer_sizes[l];
        const int out = params.spec.layer_sizes[l + 1];
        views.push_back({p, p + std::size_t(in) * out, in, out});
        p += std::size_t(in) * out + out;
    }
    return views;
}

// Z = X * W^T + b, into out (n x layer.out).
void affine(const Matrix& x, std::size_t n, const LayerView& layer, Matrix& out) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, int(n), layer.out, layer.in, 1.0,
                x.data.data(), layer.in, layer.w, layer.in, 0.0, out.data.data(), layer.out);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.row_ptr(i);
        for (int j = 0; j < layer.out; ++j) row[j] += layer.b[j];
    }
}

void relu_inplace(Matrix& m, std::size_t n) {
    double* p = m.data.data();
    const std::size_t count = n * m.cols;
    for (std::size_t i = 0; i < count; ++i) p[i] = p[i] > 0.0 ? p[i] : 0.0;
}

void softmax_rows_inplace(Matrix& m, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        double* row = m.row_ptr(i);
        double mx = row[0];
        for (std::size_t j = 1; j < m.cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < m.cols; ++j) row[j] /= sum;
    }
}

// Scratch buffers sized for a fixed maximum batch; partial batches reuse
// the same storage with a smaller active row count.
struct Workspace {
    std::vector<Matrix> acts;    // acts[0] = input copy, acts[L] = probabilities
    std::vector<Matrix> deltas;  // deltas[l]: gradient wrt layer l's pre-activation

    Workspace(const ModelSpec& spec, std::size_t max_batch) {
        acts.emplace_back(max_batch, std::size_t(spec.layer_sizes[0]));
        for (std::size_t l = 1; l < spec.layer_sizes.size(); ++l) {
            acts.emplace_back(max_batch, std::size_t(spec.layer_sizes[l]));
            deltas.emplace_back(max_batch, std::size_t(spec.layer_sizes[l]));
        }
    }
};

// Runs the forward pass for the first n rows of ws.acts[0].
void forward_into(const std::vector<LayerView>& layers, Workspace& ws, std::size_t n) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        affine(ws.acts[l], n, layers[l], ws.acts[l + 1]);
        if (l + 1 < layers.size())
            relu_inplace(ws.acts[l + 1], n);
        else
            softmax_rows_inplace(ws.acts[l + 1], n);
    }
}

// Backward pass for the first n rows; accumulates mean-CE gradients plus
// weight decay into grad (same layout as ParamVector.values).
void backward_into(const ParamVector& params, const std::vector<LayerView>& layers, Workspace& ws,
                   std::size_t n, const int* labels, double weight_decay, std::vector<double>& grad) {
    const std::size_t num_layers = layers.size();
    const double inv_n = 1.0 / double(n);

    // dZ at the output: (p - onehot) / n.
    Matrix& dz_out = ws.deltas[num_layers - 1];
    const Matrix& probs = ws.acts[num_layers];
    for (std::size_t i = 0; i < n; ++i) {
        const double* p = probs.row_ptr(i);
        double* d = dz_out.row_ptr(i);
        for (std::size_t j = 0; j < probs.cols; ++j) d[j] = p[j] * inv_n;
        d[labels[i]] -= inv_n;
    }

    double* gp = grad.data() + params.values.size();
    for (std::size_t l = num_layers; l-- > 0;) {
        const LayerView& layer = layers[l];
        gp -= std::size_t(layer.in) * layer.out + layer.out;
        double* gw = gp;
        double* gb = gp + std::size_t(layer.in) * layer.out;
        const Matrix& dz = ws.deltas[l];

        // dW = dZ^T * A_l
        cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, layer.out, layer.in, int(n), 1.0,
                    dz.data.data(), layer.out, ws.acts[l].data.data(), layer.in, 0.0, gw, layer.in);
        for (std::size_t i = 0; i < n; ++i) {
            const double* d = dz.row_ptr(i);
            for (int j = 0; j < layer.out; ++j) gb[j] += d[j];
        }
        if (l > 0) {
            // dA_{l} = dZ * W, then mask through the ReLU.
            Matrix& da = ws.deltas[l - 1];
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, int(n), layer.in, layer.out, 1.0,
                        dz.data.data(), layer.out, layer.w, layer.in, 0.0, da.data.data(), layer.in);
            const Matrix& act = ws.acts[l];
            for (std::size_t i = 0; i < n; ++i) {
                double* d = da.row_ptr(i);
                const double* a = act.row_ptr(i);
                for (int j = 0; j < layer.in; ++j)
                    if (a[j] <= 0.0) d[j] = 0.0;
            }
        }
    }
    if (weight_decay != 0.0)
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += weight_decay * params.values[i];
}

void check_input_dim(const ParamVector& params, const Matrix& inputs) {
    if (inputs.cols != std::size_t(params.spec.input_dim()))
        throw std::invalid_argument("input dimension does not match layer_sizes[0]");
}

}  // namespace

std::size_t ModelSpec::param_count() const {
    std::size_t count = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
        count += std::size_t(layer_sizes[l]) * layer_sizes[l + 1] + layer_sizes[l + 1];
    return count;
}

void ModelSpec::validate() const {
    if (layer_sizes.size() < 2) throw std::invalid_argument("model spec: need at least 2 layers");
    for (int s : layer_sizes)
        if (s < 1) throw std::invalid_argument("model spec: layer sizes must be positive");
}

void ParamVector::validate() const {
    spec.validate();
    if (values.size() != spec.param_count())
        throw std::invalid_argument("param vector length does not match spec");
    for (double v : values)
        if (!std::isfinite(v)) throw std::invalid_argument("param vector contains non-finite values");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be positive");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be positive");
    if (!(learning_rate > 0.0) && learning_rate != 0.0)
        throw std::invalid_argument("train config: learning_rate must be nonnegative");
    if (weight_decay < 0.0) throw std::invalid_argument("train config: weight_decay must be nonnegative");
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    ParamVector params;
    params.spec = spec;
    params.values.resize(spec.param_count());
    Rng rng(mix_seed(seed, 0x1417));
    double* p = params.values.data();
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
        const int in = spec.layer_sizes[l];
        const int out = spec.layer_sizes[l + 1];
        const double bound = 1.0 / std::sqrt(double(in));
        const std::size_t count = std::size_t(in) * out + out;
        for (std::size_t i = 0; i < count; ++i) *p++ = rng.uniform(-bound, bound);
    }
    return params;
}

Matrix forward(const ParamVector& params, const Matrix& inputs) {
    params.validate();
    check_input_dim(params, inputs);
    const auto layers = layer_views(params);
    Workspace ws(params.spec, inputs.rows);
    ws.acts[0] = inputs;
    forward_into(layers, ws, inputs.rows);
    return std::move(ws.acts.back());
}

std::vector<double> per_sample_loss(const ParamVector& params, const Matrix& inputs,
                                    const std::vector<int>& labels) {
    if (inputs.rows != labels.size())
        throw std::invalid_argument("per_sample_loss: batch size does not match label count");
    for (int y : labels)
        if (y < 0 || y >= params.spec.num_classes())
            throw std::invalid_argument("per_sample_loss: label out of range");

    const Matrix probs = forward(params, inputs);
    std::vector<double> losses(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = std::clamp(probs(i, std::size_t(labels[i])), kProbClamp, 1.0 - kProbClamp);
        losses[i] = -std::log(p);
    }
    return losses;
}

std::vector<double> gradient(const ParamVector& params, const Matrix& inputs,
                             const std::vector<int>& labels, double weight_decay) {
    params.validate();
    check_input_dim(params, inputs);
    if (inputs.rows != labels.size())
        throw std::invalid_argument("gradient: batch size does not match label count");

    const auto layers = layer_views(params);
    Workspace ws(params.spec, inputs.rows);
    ws.acts[0] = inputs;
    forward_into(layers, ws, inputs.rows);
    std::vector<double> grad(params.values.size(), 0.0);
    backward_into(params, layers, ws, inputs.rows, labels.data(), weight_decay, grad);
    return grad;
}

ParamVector train_local(const ParamVector& params, const Dataset& dataset, const TrainConfig& cfg) {
    params.validate();
    cfg.validate();
    if (dataset.size() == 0) throw std::invalid_argument("train_local: dataset is empty");
    if (dataset.features.cols != std::size_t(params.spec.input_dim()))
        throw std::invalid_argument("train_local: dataset dimension does not match model");

    ParamVector theta = params;
    const std::size_t n = dataset.size();
    const std::size_t batch = std::min<std::size_t>(std::size_t(cfg.batch_size), n);

    Rng rng(mix_seed(cfg.seed, 0x7a11));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    Workspace ws(theta.spec, batch);
    std::vector<double> grad(theta.values.size());
    std::vector<int> batch_labels(batch);
    std::vector<LayerView> layers;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t begin = 0; begin < n; begin += batch) {
            const std::size_t bsz = std::min(batch, n - begin);
            for (std::size_t i = 0; i < bsz; ++i) {
                const std::size_t src = order[begin + i];
                std::copy_n(dataset.features.row_ptr(src), dataset.features.cols, ws.acts[0].row_ptr(i));
                batch_labels[i] = dataset.labels[src];
            }
            layers = layer_views(theta);
            forward_into(layers, ws, bsz);
            std::fill(grad.begin(), grad.end(), 0.0);
            backward_into(theta, layers, ws, bsz, batch_labels.data(), cfg.weight_decay, grad);
            for (std::size_t i = 0; i < theta.values.size(); ++i)
                theta.values[i] -= cfg.learning_rate * grad[i];
        }
    }
    return theta;
}

double evaluate(const ParamVector& params, const Dataset& test_set) {
    params.validate();
    if (test_set.size() == 0) throw std::invalid_argument("evaluate: test set is empty");
    if (test_set.features.cols != std::size_t(params.spec.input_dim()))
        throw std::invalid_argument("evaluate: dataset dimension does not match model");

    const auto layers = layer_views(params);
    const std::size_t chunk = 256;
    Workspace ws(params.spec, std::min(chunk, test_set.size()));
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < test_set.size(); begin += chunk) {
        const std::size_t n = std::min(chunk, test_set.size() - begin);
        std::copy_n(test_set.features.row_ptr(begin), n * test_set.features.cols, ws.acts[0].data.data());
        forward_into(layers, ws, n);
        const Matrix& probs = ws.acts.back();
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = probs.row_ptr(i);
            std::size_t best = 0;
            for (std::size_t j = 1; j < probs.cols; ++j)
                if (row[j] > row[best]) best = j;  // ties keep the lowest index
            if (int(best) == test_set.labels[begin + i]) ++correct;
        }
    }
    return double(correct) / double(test_set.size());
}

}  // namespace fedsentinel
