#pragma once

// Small dense classifiers trained with plain SGD. Forward and backward passes
// accumulate in 64-bit floats; parameters live in a flat 32-bit ParamVector,
// flattened layer by layer (weights row-major [out][in], then biases).

#include <cstddef>
#include <cstdint>
#include <vector>

#include "caesar/param_vector.hpp"

namespace caesar {

enum class ModelKind { softmax_regression, mlp };

struct ModelSpec {
    ModelKind kind = ModelKind::softmax_regression;
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims;  // empty for softmax_regression
    std::size_t classes = 0;
};

struct DatasetShard {
    std::size_t dim = 0;
    std::vector<float> features;  // row-major, labels.size() * dim entries
    std::vector<std::uint32_t> labels;

    std::size_t size() const { return labels.size(); }
    const float* row(std::size_t i) const { return features.data() + i * dim; }
};

struct LrSchedule {
    double base = 0.1;
    double decay = 1.0;
};

double lr_at(const LrSchedule& schedule, std::uint64_t t);

// Layer widths including input and output: [d, hidden..., H].
std::vector<std::size_t> layer_dims(const ModelSpec& spec);
std::size_t param_count(const ModelSpec& spec);

// Glorot-uniform weights, zero biases.
ParamVector init_model(const ModelSpec& spec, std::uint64_t seed);

// Mean softmax cross-entropy over the batch; hidden layers use ReLU.
double loss(const ParamVector& w, const ModelSpec& spec, const DatasetShard& batch);

// Exact mean-reduced gradient of loss, same flattening as the weights.
ParamVector grad(const ParamVector& w, const ModelSpec& spec, const DatasetShard& batch);

struct LocalTrainResult {
    ParamVector weights;  // w after tau steps
    ParamVector update;   // w0 - weights; the device's uploaded gradient
};

// tau SGD steps with batches drawn uniformly with replacement. The update is
// realized as w0 - w_tau so subtracting it from w0 reproduces the trained
// weights bit-for-bit.
LocalTrainResult local_train(const ParamVector& w0, const ModelSpec& spec,
                             const DatasetShard& shard, std::size_t b,
                             std::size_t tau, double eta, std::uint64_t seed);

// Fraction of samples whose argmax logit hits the label; argmax ties go to
// the lower class index.
double evaluate(const ParamVector& w, const ModelSpec& spec, const DatasetShard& test_shard);

}  // namespace caesar
