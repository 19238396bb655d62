#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "aeronet/common.hpp"

// Centralized neural-network math. This is both the reference trainer the
// distributed simulation is checked against and the arithmetic kernel the
// neuron devices call, so every accumulation here is order-normative:
// dot products and gradient sums always run in ascending index order.

namespace aeronet {

enum class ActivationKind { ReLU, Sigmoid, Softmax, Identity };
enum class LossKind { MeanSquaredError, CrossEntropy };

inline const char* to_string(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::ReLU: return "relu";
        case ActivationKind::Sigmoid: return "sigmoid";
        case ActivationKind::Softmax: return "softmax";
        case ActivationKind::Identity: return "identity";
    }
    return "?";
}

inline const char* to_string(LossKind kind) {
    return kind == LossKind::MeanSquaredError ? "mse" : "cross_entropy";
}

struct OptimizerConfig {
    enum class Kind { Sgd, Adam } kind = Kind::Sgd;
    double learning_rate = 0.1;
    // Adam only.
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct NetworkSpec {
    std::vector<int> layer_sizes;            // input size first, output size last
    std::vector<ActivationKind> activations; // one per non-input layer
    LossKind loss = LossKind::MeanSquaredError;
    int epochs = 1;
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;

    int layer_count() const { return static_cast<int>(layer_sizes.size()); }
    int input_size() const { return layer_sizes.front(); }
    int output_size() const { return layer_sizes.back(); }
    ActivationKind output_activation() const { return activations.back(); }
    int non_input_neuron_count() const {
        int total = 0;
        for (std::size_t l = 1; l < layer_sizes.size(); ++l) total += layer_sizes[l];
        return total;
    }
};

// Weights and biases per non-input layer: weights[k][i][j] connects neuron j
// of layer k to neuron i of layer k+1; biases[k][i] belongs to layer k+1.
struct ParameterSet {
    std::vector<std::vector<std::vector<double>>> weights;
    std::vector<std::vector<double>> biases;

    bool operator==(const ParameterSet&) const = default;
};

// Gradients share the parameter layout.
using GradientSet = ParameterSet;

struct AdamState {
    GradientSet first_moment;   // m
    GradientSet second_moment;  // v
    std::uint64_t step = 0;     // t
};

// Collects every constraint violation instead of stopping at the first one.
inline std::vector<std::string> validate_spec(const NetworkSpec& spec) {
    std::vector<std::string> errors;
    if (spec.layer_sizes.size() < 2) errors.push_back("layer_sizes: at least 2 layers required");
    for (std::size_t l = 0; l < spec.layer_sizes.size(); ++l) {
        if (spec.layer_sizes[l] <= 0)
            errors.push_back("layer_sizes[" + std::to_string(l) + "]: must be positive");
    }
    if (spec.activations.size() + 1 != spec.layer_sizes.size()) {
        errors.push_back("activations: expected one per non-input layer (" +
                         std::to_string(spec.layer_sizes.size() < 2 ? 0 : spec.layer_sizes.size() - 1) +
                         "), got " + std::to_string(spec.activations.size()));
    } else if (!spec.activations.empty()) {
        for (std::size_t k = 0; k + 1 < spec.activations.size(); ++k) {
            if (spec.activations[k] == ActivationKind::Softmax)
                errors.push_back("activations[" + std::to_string(k) +
                                 "]: softmax is only legal on the output layer");
        }
        const ActivationKind out = spec.activations.back();
        if (spec.loss == LossKind::CrossEntropy) {
            const bool scalar_sigmoid = out == ActivationKind::Sigmoid && spec.layer_sizes.back() == 1;
            if (out != ActivationKind::Softmax && !scalar_sigmoid)
                errors.push_back("loss: cross_entropy requires softmax output (or sigmoid with scalar output)");
        } else if (out == ActivationKind::Softmax) {
            errors.push_back("loss: mse is incompatible with softmax output");
        }
    }
    if (spec.epochs < 0) errors.push_back("epochs: must be non-negative");
    if (!(spec.optimizer.learning_rate > 0)) errors.push_back("optimizer: learning_rate must be > 0");
    if (spec.optimizer.kind == OptimizerConfig::Kind::Adam) {
        if (!(spec.optimizer.beta1 >= 0 && spec.optimizer.beta1 < 1))
            errors.push_back("optimizer: beta1 must be in [0, 1)");
        if (!(spec.optimizer.beta2 >= 0 && spec.optimizer.beta2 < 1))
            errors.push_back("optimizer: beta2 must be in [0, 1)");
        if (!(spec.optimizer.epsilon > 0)) errors.push_back("optimizer: epsilon must be > 0");
    }
    return errors;
}

/// bias + sum of weights[j] * inputs[j], accumulated in ascending j order.
inline double weighted_sum(const std::vector<double>& weights, const std::vector<double>& inputs,
                           double bias) {
    if (weights.size() != inputs.size())
        throw ShapeError("weighted_sum: " + std::to_string(weights.size()) + " weights vs " +
                         std::to_string(inputs.size()) + " inputs");
    double acc = bias;
    for (std::size_t j = 0; j < weights.size(); ++j) acc += weights[j] * inputs[j];
    if (!std::isfinite(acc)) throw NumericError("weighted_sum: non-finite result");
    return acc;
}

inline double activate_one(ActivationKind kind, double z) {
    if (!std::isfinite(z)) throw NumericError("activate: non-finite input");
    switch (kind) {
        case ActivationKind::ReLU: return z > 0.0 ? z : 0.0;
        case ActivationKind::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
        case ActivationKind::Identity: return z;
        case ActivationKind::Softmax: break;
    }
    throw ConfigError("activate: softmax has no per-element form");
}

/// Elementwise for ReLU/Sigmoid/Identity; max-shifted vector softmax.
inline std::vector<double> activate(ActivationKind kind, const std::vector<double>& z) {
    std::vector<double> a(z.size());
    if (kind == ActivationKind::Softmax) {
        if (z.empty()) throw ShapeError("activate: softmax needs length >= 1");
        double max_z = z[0];
        for (double v : z) {
            if (!std::isfinite(v)) throw NumericError("activate: non-finite input");
            if (v > max_z) max_z = v;
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            a[i] = std::exp(z[i] - max_z);
            sum += a[i];
        }
        for (std::size_t i = 0; i < z.size(); ++i) a[i] /= sum;
        return a;
    }
    for (std::size_t i = 0; i < z.size(); ++i) a[i] = activate_one(kind, z[i]);
    return a;
}

// ReLU derivative at z == 0 is defined as 0; the simulator relies on the
// same convention to stay bit-identical with this reference.
inline double activation_derivative_one(ActivationKind kind, double z, double a) {
    switch (kind) {
        case ActivationKind::ReLU: return z > 0.0 ? 1.0 : 0.0;
        case ActivationKind::Sigmoid: return a * (1.0 - a);
        case ActivationKind::Identity: return 1.0;
        case ActivationKind::Softmax: break;
    }
    throw ConfigError("activation_derivative: softmax is fused into the output delta");
}

inline std::vector<double> activation_derivative(ActivationKind kind, const std::vector<double>& z,
                                                 const std::vector<double>& a) {
    if (z.size() != a.size()) throw ShapeError("activation_derivative: z/a length mismatch");
    std::vector<double> d(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) d[i] = activation_derivative_one(kind, z[i], a[i]);
    return d;
}

inline double compute_loss(LossKind kind, const std::vector<double>& prediction,
                           const std::vector<double>& target) {
    if (prediction.size() != target.size())
        throw ShapeError("compute_loss: prediction/target length mismatch");
    if (kind == LossKind::MeanSquaredError) {
        double acc = 0.0;
        for (std::size_t i = 0; i < prediction.size(); ++i) {
            const double diff = prediction[i] - target[i];
            acc += diff * diff;
        }
        return acc / static_cast<double>(prediction.size());
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        if (!(prediction[i] > 0.0))
            throw NumericError("compute_loss: cross_entropy applied to non-positive prediction");
        acc += target[i] * std::log(prediction[i]);
    }
    return -acc;
}

/// dLoss/dz at the output layer. Cross-entropy with softmax uses the fused
/// prediction - target form; MSE multiplies by the activation derivative.
inline std::vector<double> output_delta(LossKind loss, ActivationKind output_activation,
                                        const std::vector<double>& prediction,
                                        const std::vector<double>& z_out,
                                        const std::vector<double>& target) {
    if (prediction.size() != target.size() || prediction.size() != z_out.size())
        throw ShapeError("output_delta: length mismatch");
    const std::size_t n = prediction.size();
    std::vector<double> delta(n);
    if (loss == LossKind::CrossEntropy) {
        if (output_activation == ActivationKind::Softmax) {
            for (std::size_t i = 0; i < n; ++i) delta[i] = prediction[i] - target[i];
            return delta;
        }
        if (output_activation == ActivationKind::Sigmoid && n == 1) {
            // d/dz of -t*ln(sigmoid(z)) = -t * (1 - p)
            delta[0] = -target[0] * (1.0 - prediction[0]);
            return delta;
        }
        throw ConfigError("output_delta: cross_entropy needs softmax or scalar sigmoid output");
    }
    if (output_activation == ActivationKind::Softmax)
        throw ConfigError("output_delta: mse is incompatible with softmax output");
    const double scale = 2.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        delta[i] = scale * (prediction[i] - target[i]) *
                   activation_derivative_one(output_activation, z_out[i], prediction[i]);
    }
    return delta;
}

// Full activation record of one forward pass: a[0] is the input, z[l]/a[l]
// belong to layer l for l >= 1 (z[0] stays empty).
struct ForwardRecord {
    std::vector<std::vector<double>> z;
    std::vector<std::vector<double>> a;

    const std::vector<double>& prediction() const { return a.back(); }
};

inline void check_shapes(const NetworkSpec& spec, const ParameterSet& params) {
    const std::size_t layers = spec.layer_sizes.size();
    if (params.weights.size() + 1 != layers || params.biases.size() + 1 != layers)
        throw ShapeError("parameters: layer count mismatch");
    for (std::size_t k = 0; k + 1 < layers; ++k) {
        const std::size_t rows = static_cast<std::size_t>(spec.layer_sizes[k + 1]);
        const std::size_t cols = static_cast<std::size_t>(spec.layer_sizes[k]);
        if (params.weights[k].size() != rows || params.biases[k].size() != rows)
            throw ShapeError("parameters: row count mismatch at layer " + std::to_string(k + 1));
        for (const auto& row : params.weights[k])
            if (row.size() != cols)
                throw ShapeError("parameters: column count mismatch at layer " + std::to_string(k + 1));
    }
}

inline ForwardRecord forward_reference(const NetworkSpec& spec, const ParameterSet& params,
                                       const std::vector<double>& input) {
    if (input.size() != static_cast<std::size_t>(spec.input_size()))
        throw ShapeError("forward: input size mismatch");
    check_shapes(spec, params);
    ForwardRecord record;
    const std::size_t layers = spec.layer_sizes.size();
    record.z.resize(layers);
    record.a.resize(layers);
    record.a[0] = input;
    for (std::size_t l = 1; l < layers; ++l) {
        const auto& w = params.weights[l - 1];
        const auto& b = params.biases[l - 1];
        std::vector<double> z(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) z[i] = weighted_sum(w[i], record.a[l - 1], b[i]);
        record.z[l] = std::move(z);
        record.a[l] = activate(spec.activations[l - 1], record.z[l]);
    }
    return record;
}

/// Standard backpropagation over a recorded forward pass. Backward
/// accumulations run in ascending downstream index order.
inline GradientSet backward_reference(const NetworkSpec& spec, const ParameterSet& params,
                                      const ForwardRecord& record, const std::vector<double>& target) {
    const std::size_t layers = spec.layer_sizes.size();
    GradientSet grads;
    grads.weights.resize(layers - 1);
    grads.biases.resize(layers - 1);

    std::vector<double> delta = output_delta(spec.loss, spec.activations.back(), record.a.back(),
                                             record.z.back(), target);
    for (std::size_t l = layers - 1; l >= 1; --l) {
        const auto& below = record.a[l - 1];
        auto& dw = grads.weights[l - 1];
        auto& db = grads.biases[l - 1];
        dw.resize(delta.size());
        db.resize(delta.size());
        for (std::size_t i = 0; i < delta.size(); ++i) {
            dw[i].resize(below.size());
            for (std::size_t j = 0; j < below.size(); ++j) dw[i][j] = delta[i] * below[j];
            db[i] = delta[i];
        }
        if (l == 1) break;
        const auto& w = params.weights[l - 1];
        std::vector<double> prev(below.size());
        for (std::size_t j = 0; j < below.size(); ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < delta.size(); ++i) acc += w[i][j] * delta[i];
            prev[j] = acc * activation_derivative_one(spec.activations[l - 2], record.z[l - 1][j],
                                                      record.a[l - 1][j]);
        }
        delta = std::move(prev);
    }
    return grads;
}

inline GradientSet zero_like(const ParameterSet& params) {
    GradientSet zero = params;
    for (auto& layer : zero.weights)
        for (auto& row : layer)
            for (auto& v : row) v = 0.0;
    for (auto& layer : zero.biases)
        for (auto& v : layer) v = 0.0;
    return zero;
}

/// One optimizer step, in place. Adam keeps its moments in `state`; SGD
/// ignores it (pass nullptr).
inline void optimizer_step(const OptimizerConfig& opt, AdamState* state, ParameterSet& params,
                           const GradientSet& grads) {
    if (grads.weights.size() != params.weights.size() || grads.biases.size() != params.biases.size())
        throw ShapeError("optimizer_step: gradient layout mismatch");
    if (opt.kind == OptimizerConfig::Kind::Sgd) {
        const double lr = opt.learning_rate;
        for (std::size_t k = 0; k < params.weights.size(); ++k) {
            for (std::size_t i = 0; i < params.weights[k].size(); ++i) {
                if (grads.weights[k][i].size() != params.weights[k][i].size())
                    throw ShapeError("optimizer_step: gradient row mismatch");
                for (std::size_t j = 0; j < params.weights[k][i].size(); ++j)
                    params.weights[k][i][j] -= lr * grads.weights[k][i][j];
                params.biases[k][i] -= lr * grads.biases[k][i];
            }
        }
        return;
    }
    if (state == nullptr) throw ConfigError("optimizer_step: adam requires moment state");
    state->step += 1;
    const double t = static_cast<double>(state->step);
    const double bias1 = 1.0 - std::pow(opt.beta1, t);
    const double bias2 = 1.0 - std::pow(opt.beta2, t);
    auto update = [&](double& p, double& m, double& v, double g) {
        m = opt.beta1 * m + (1.0 - opt.beta1) * g;
        v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
        const double m_hat = m / bias1;
        const double v_hat = v / bias2;
        p -= opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    };
    for (std::size_t k = 0; k < params.weights.size(); ++k) {
        for (std::size_t i = 0; i < params.weights[k].size(); ++i) {
            if (grads.weights[k][i].size() != params.weights[k][i].size())
                throw ShapeError("optimizer_step: gradient row mismatch");
            for (std::size_t j = 0; j < params.weights[k][i].size(); ++j)
                update(params.weights[k][i][j], state->first_moment.weights[k][i][j],
                       state->second_moment.weights[k][i][j], grads.weights[k][i][j]);
            update(params.biases[k][i], state->first_moment.biases[k][i],
                   state->second_moment.biases[k][i], grads.biases[k][i]);
        }
    }
}

inline AdamState make_adam_state(const ParameterSet& params) {
    AdamState state;
    state.first_moment = zero_like(params);
    state.second_moment = zero_like(params);
    state.step = 0;
    return state;
}

// Uniform Glorot-style initialization from SplitMix64(seed). Draws are
// consumed layer-major, row-major, column-minor; biases are zero and
// consume no draws.
inline ParameterSet init_parameters(const NetworkSpec& spec) {
    SplitMix64 rng(spec.seed);
    ParameterSet params;
    const std::size_t layers = spec.layer_sizes.size();
    params.weights.resize(layers - 1);
    params.biases.resize(layers - 1);
    for (std::size_t k = 0; k + 1 < layers; ++k) {
        const int fan_in = spec.layer_sizes[k];
        const int fan_out = spec.layer_sizes[k + 1];
        const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        params.weights[k].resize(fan_out);
        params.biases[k].assign(fan_out, 0.0);
        for (int i = 0; i < fan_out; ++i) {
            params.weights[k][i].resize(fan_in);
            for (int j = 0; j < fan_in; ++j)
                params.weights[k][i][j] = (2.0 * rng.next_unit() - 1.0) * r;
        }
    }
    return params;
}

/// Ordered arithmetic mean; the summation order is part of the contract.
inline double mean_ordered(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc / static_cast<double>(values.size());
}

struct TrainingSample {
    std::vector<double> input;
    std::vector<double> target;
};

struct TrainResult {
    ParameterSet params;
    std::vector<double> epoch_losses;
};

// The reference trainer: per-sample (online) updates in dataset order.
// Deterministic given spec.seed and the dataset; the distributed simulation
// must reproduce it bit for bit.
inline TrainResult train_reference(const NetworkSpec& spec, const std::vector<TrainingSample>& dataset) {
    TrainResult result;
    result.params = init_parameters(spec);
    AdamState adam = make_adam_state(result.params);
    AdamState* state = spec.optimizer.kind == OptimizerConfig::Kind::Adam ? &adam : nullptr;
    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        std::vector<double> sample_losses;
        sample_losses.reserve(dataset.size());
        for (const TrainingSample& sample : dataset) {
            const ForwardRecord record = forward_reference(spec, result.params, sample.input);
            sample_losses.push_back(compute_loss(spec.loss, record.prediction(), sample.target));
            const GradientSet grads = backward_reference(spec, result.params, record, sample.target);
            optimizer_step(spec.optimizer, state, result.params, grads);
        }
        result.epoch_losses.push_back(mean_ordered(sample_losses));
    }
    return result;
}

}  // namespace aeronet
