#include "caesar/learner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "caesar/rng.hpp"

namespace caesar {
namespace {

void check_spec(const ModelSpec& spec) {
    if (spec.input_dim < 1)
        throw std::invalid_argument("input_dim must be at least 1");
    if (spec.classes < 2)
        throw std::invalid_argument("classes must be at least 2");
    if (spec.kind == ModelKind::softmax_regression && !spec.hidden_dims.empty())
        throw std::invalid_argument("softmax_regression takes no hidden layers");
    for (std::size_t h : spec.hidden_dims)
        if (h < 1) throw std::invalid_argument("hidden layer width must be at least 1");
}

void check_batch(const ModelSpec& spec, const DatasetShard& batch) {
    if (batch.size() == 0)
        throw std::invalid_argument("batch must be non-empty");
    if (batch.dim != spec.input_dim)
        throw std::invalid_argument("batch feature dimension does not match the model");
    if (batch.features.size() != batch.size() * batch.dim)
        throw std::invalid_argument("shard feature matrix has the wrong size");
    for (std::uint32_t y : batch.labels)
        if (y >= spec.classes) throw std::invalid_argument("label out of range");
}

// Per-layer offsets into the flat parameter vector.
struct Layout {
    std::vector<std::size_t> dims;
    std::vector<std::size_t> w_off;
    std::vector<std::size_t> b_off;
    std::size_t total = 0;

    explicit Layout(const ModelSpec& spec) : dims(layer_dims(spec)) {
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            w_off.push_back(total);
            total += dims[l] * dims[l + 1];
            b_off.push_back(total);
            total += dims[l + 1];
        }
    }
    std::size_t layers() const { return w_off.size(); }
};

// Forward pass for one sample; returns pre-activations z[l] (post-ReLU values
// are recomputed from z where needed).
std::vector<std::vector<double>> forward(const Layout& lay, const ParamVector& w,
                                         const float* x) {
    std::vector<std::vector<double>> zs(lay.layers());
    std::vector<double> act(x, x + lay.dims[0]);
    for (std::size_t l = 0; l < lay.layers(); ++l) {
        const std::size_t in = lay.dims[l];
        const std::size_t out = lay.dims[l + 1];
        zs[l].assign(out, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            double z = static_cast<double>(w[lay.b_off[l] + o]);
            const std::size_t row = lay.w_off[l] + o * in;
            for (std::size_t i = 0; i < in; ++i)
                z += static_cast<double>(w[row + i]) * act[i];
            zs[l][o] = z;
        }
        if (l + 1 < lay.layers()) {
            act.assign(out, 0.0);
            for (std::size_t o = 0; o < out; ++o) act[o] = std::max(zs[l][o], 0.0);
        }
    }
    return zs;
}

double sample_loss(const std::vector<double>& logits, std::uint32_t label) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - m);
    return m + std::log(sum) - logits[label];
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        p[c] = std::exp(logits[c] - m);
        sum += p[c];
    }
    for (double& v : p) v /= sum;
    return p;
}

// Sum (not mean) of per-sample gradients over the given rows, in doubles.
std::vector<double> grad_sum(const Layout& lay, const ParamVector& w,
                             const DatasetShard& shard,
                             const std::size_t* rows, std::size_t count) {
    std::vector<double> g(lay.total, 0.0);
    for (std::size_t s = 0; s < count; ++s) {
        const float* x = shard.row(rows[s]);
        const auto zs = forward(lay, w, x);
        std::vector<double> dz = softmax(zs.back());
        dz[shard.labels[rows[s]]] -= 1.0;

        for (std::size_t l = lay.layers(); l-- > 0;) {
            const std::size_t in = lay.dims[l];
            const std::size_t out = lay.dims[l + 1];
            std::vector<double> act(in);
            if (l == 0)
                for (std::size_t i = 0; i < in; ++i) act[i] = static_cast<double>(x[i]);
            else
                for (std::size_t i = 0; i < in; ++i) act[i] = std::max(zs[l - 1][i], 0.0);

            for (std::size_t o = 0; o < out; ++o) {
                const std::size_t row = lay.w_off[l] + o * in;
                for (std::size_t i = 0; i < in; ++i) g[row + i] += dz[o] * act[i];
                g[lay.b_off[l] + o] += dz[o];
            }
            if (l > 0) {
                std::vector<double> prev(in, 0.0);
                for (std::size_t o = 0; o < out; ++o) {
                    const std::size_t row = lay.w_off[l] + o * in;
                    for (std::size_t i = 0; i < in; ++i)
                        prev[i] += static_cast<double>(w[row + i]) * dz[o];
                }
                for (std::size_t i = 0; i < in; ++i)
                    prev[i] = zs[l - 1][i] > 0.0 ? prev[i] : 0.0;
                dz = std::move(prev);
            }
        }
    }
    return g;
}

void check_weights(const Layout& lay, const ParamVector& w) {
    if (w.size() != lay.total)
        throw std::invalid_argument("parameter vector length does not match the model spec");
}

}  // namespace

double lr_at(const LrSchedule& schedule, std::uint64_t t) {
    if (schedule.base <= 0.0)
        throw std::invalid_argument("base learning rate must be positive");
    if (!(schedule.decay > 0.0 && schedule.decay <= 1.0))
        throw std::invalid_argument("decay must lie in (0, 1]");
    return schedule.base * std::pow(schedule.decay, static_cast<double>(t));
}

std::vector<std::size_t> layer_dims(const ModelSpec& spec) {
    check_spec(spec);
    std::vector<std::size_t> dims;
    dims.push_back(spec.input_dim);
    dims.insert(dims.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
    dims.push_back(spec.classes);
    return dims;
}

std::size_t param_count(const ModelSpec& spec) {
    return Layout(spec).total;
}

ParamVector init_model(const ModelSpec& spec, std::uint64_t seed) {
    const Layout lay(spec);
    ParamVector w(lay.total, 0.0f);
    SeededRng rng(seed);
    for (std::size_t l = 0; l < lay.layers(); ++l) {
        const std::size_t in = lay.dims[l];
        const std::size_t out = lay.dims[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        for (std::size_t j = 0; j < in * out; ++j)
            w[lay.w_off[l] + j] = static_cast<float>(rng.uniform(-limit, limit));
    }
    return w;
}

double loss(const ParamVector& w, const ModelSpec& spec, const DatasetShard& batch) {
    const Layout lay(spec);
    check_weights(lay, w);
    check_batch(spec, batch);
    double sum = 0.0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const auto zs = forward(lay, w, batch.row(s));
        sum += sample_loss(zs.back(), batch.labels[s]);
    }
    return sum / static_cast<double>(batch.size());
}

ParamVector grad(const ParamVector& w, const ModelSpec& spec, const DatasetShard& batch) {
    const Layout lay(spec);
    check_weights(lay, w);
    check_batch(spec, batch);
    std::vector<std::size_t> rows(batch.size());
    for (std::size_t s = 0; s < rows.size(); ++s) rows[s] = s;
    auto g = grad_sum(lay, w, batch, rows.data(), rows.size());
    ParamVector out(lay.total);
    for (std::size_t i = 0; i < lay.total; ++i)
        out[i] = static_cast<float>(g[i] / static_cast<double>(batch.size()));
    return out;
}

LocalTrainResult local_train(const ParamVector& w0, const ModelSpec& spec,
                             const DatasetShard& shard, std::size_t b,
                             std::size_t tau, double eta, std::uint64_t seed) {
    const Layout lay(spec);
    check_weights(lay, w0);
    check_batch(spec, shard);
    if (b < 1)
        throw std::invalid_argument("batch size must be at least 1");

    ParamVector w = w0;
    SeededRng rng(seed);
    std::vector<std::size_t> rows(b);
    for (std::size_t j = 0; j < tau; ++j) {
        for (std::size_t k = 0; k < b; ++k)
            rows[k] = static_cast<std::size_t>(rng.below(shard.size()));
        const auto g = grad_sum(lay, w, shard, rows.data(), b);
        const double scale = eta / static_cast<double>(b);
        for (std::size_t i = 0; i < lay.total; ++i)
            w[i] = static_cast<float>(static_cast<double>(w[i]) - scale * g[i]);
    }

    // The device keeps w0 - update rather than w itself so that subtracting
    // the uploaded delta from w0 reproduces its weights exactly; the two can
    // differ by one rounding when w0 - w is not representable.
    LocalTrainResult res;
    res.update.resize(lay.total);
    res.weights.resize(lay.total);
    for (std::size_t i = 0; i < lay.total; ++i) {
        res.update[i] = w0[i] - w[i];
        res.weights[i] = w0[i] - res.update[i];
    }
    return res;
}

double evaluate(const ParamVector& w, const ModelSpec& spec, const DatasetShard& test_shard) {
    const Layout lay(spec);
    check_weights(lay, w);
    check_batch(spec, test_shard);
    std::size_t correct = 0;
    for (std::size_t s = 0; s < test_shard.size(); ++s) {
        const auto zs = forward(lay, w, test_shard.row(s));
        const auto& logits = zs.back();
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.size(); ++c)
            if (logits[c] > logits[best]) best = c;
        if (best == test_shard.labels[s]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test_shard.size());
}

}  // namespace caesar
