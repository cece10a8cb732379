#pragma once

// The bag classifier network: a stack of fully connected ReLU layers with
// inverted dropout (the embedded mapping g), followed by two heads reading the
// same embedding:
//   classifier head  f = sigmoid(h W_f + b_f)   -> per-instance class presence
//   measure head     v = phi(h W_v + b_v)       -> per-instance unnormalized measure

#include <milpool/error.hpp>
#include <milpool/matrix.hpp>
#include <milpool/rng.hpp>

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace milpool {

/// Non-negative function of the measure head.
enum class Phi : std::uint8_t { relu = 0, sigmoid = 1, softmax = 2 };

inline std::string_view to_string(Phi phi) {
    switch (phi) {
    case Phi::relu: return "relu";
    case Phi::sigmoid: return "sigmoid";
    case Phi::softmax: return "softmax";
    }
    return "?";
}

inline std::optional<Phi> parse_phi(std::string_view s) {
    if (s == "relu") return Phi::relu;
    if (s == "sigmoid") return Phi::sigmoid;
    if (s == "softmax") return Phi::softmax;
    return std::nullopt;
}

enum class Mode { train, eval };

struct DenseLayer {
    Matrix weight; // in x out
    Matrix bias;   // 1 x out

    Matrix apply(const Matrix& x) const { return add_row_bias(matmul(x, weight), bias); }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// All trainable matrices. Gradients and optimizer moments reuse this shape.
struct NetworkParams {
    std::vector<DenseLayer> embed;
    DenseLayer classifier;
    DenseLayer measure;

    /// Visits every matrix in declaration order:
    /// embed[0].weight, embed[0].bias, ..., classifier.weight, classifier.bias,
    /// measure.weight, measure.bias.
    template <class F>
    void for_each(F&& f) {
        for (auto& l : embed) {
            f(l.weight);
            f(l.bias);
        }
        f(classifier.weight);
        f(classifier.bias);
        f(measure.weight);
        f(measure.bias);
    }
    template <class F>
    void for_each(F&& f) const {
        const_cast<NetworkParams*>(this)->for_each([&](Matrix& m) { f(static_cast<const Matrix&>(m)); });
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for_each([&](const Matrix& m) { n += m.size(); });
        return n;
    }

    /// Same shapes, all zeros.
    NetworkParams zeros_like() const {
        NetworkParams z = *this;
        z.for_each([](Matrix& m) { m = Matrix(m.rows(), m.cols()); });
        return z;
    }

    friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

struct MilNetwork {
    NetworkParams params;
    double dropout_rate = 0.2;
    Phi phi = Phi::softmax;
    Mode mode = Mode::eval;

    std::size_t feature_dim() const { return params.embed.front().weight.rows(); }
    std::size_t embedding_dim() const { return params.embed.back().weight.cols(); }
    std::size_t num_classes() const { return params.classifier.weight.cols(); }
    std::vector<std::size_t> hidden_dims() const {
        std::vector<std::size_t> dims;
        for (const auto& l : params.embed) dims.push_back(l.weight.cols());
        return dims;
    }
    std::size_t parameter_count() const { return params.parameter_count(); }

    friend bool operator==(const MilNetwork&, const MilNetwork&) = default;
};

struct NetworkConfig {
    std::size_t feature_dim = 128;
    std::size_t num_classes = 527;
    std::vector<std::size_t> hidden = {500, 500, 500};
    double dropout = 0.2;
    Phi phi = Phi::softmax;
};

namespace detail {
/// Glorot-uniform weights, zero bias.
inline DenseLayer glorot_layer(std::size_t in, std::size_t out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer l{Matrix(in, out), Matrix(1, out)};
    for (double& w : l.weight.values()) w = (2.0 * rng.uniform() - 1.0) * limit;
    return l;
}
} // namespace detail

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero. Layers are
/// drawn in declaration order from `rng`.
inline MilNetwork init_network(const NetworkConfig& cfg, Rng& rng) {
    if (cfg.feature_dim == 0) throw ConfigError("feature dimension must be at least 1");
    if (cfg.num_classes == 0) throw ConfigError("number of classes must be at least 1");
    if (cfg.hidden.empty()) throw ConfigError("at least one hidden layer is required");
    for (auto h : cfg.hidden)
        if (h == 0) throw ConfigError("hidden layer width must be at least 1");
    if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0))
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(cfg.dropout));

    MilNetwork net;
    net.dropout_rate = cfg.dropout;
    net.phi = cfg.phi;
    std::size_t in = cfg.feature_dim;
    for (auto out : cfg.hidden) {
        net.params.embed.push_back(detail::glorot_layer(in, out, rng));
        in = out;
    }
    net.params.classifier = detail::glorot_layer(in, cfg.num_classes, rng);
    net.params.measure = detail::glorot_layer(in, cfg.num_classes, rng);
    return net;
}

/// Intermediate values of the embedding stack, kept for backpropagation.
struct EmbedTrace {
    std::vector<Matrix> inputs;         // input of each layer
    std::vector<Matrix> pre_activation; // x W + b of each layer
    std::vector<Matrix> dropout_mask;   // scaled keep mask per layer; empty when dropout is off
};

/// h = g(x). In train mode each ReLU is followed by inverted dropout whose
/// mask is drawn from `rng`; eval mode never touches `rng`.
inline Matrix embed(const MilNetwork& net, const Matrix& instances, Rng& rng, EmbedTrace* trace = nullptr) {
    if (instances.cols() != net.feature_dim())
        throw ShapeError("embed: instances " + instances.shape() + " but network expects " +
                         std::to_string(net.feature_dim()) + " features");
    const bool drop = net.mode == Mode::train && net.dropout_rate > 0.0;
    const double keep_scale = 1.0 / (1.0 - net.dropout_rate);
    Matrix h = instances;
    for (const auto& layer : net.params.embed) {
        Matrix z = layer.apply(h);
        Matrix a = relu(z);
        Matrix mask;
        if (drop) {
            mask = Matrix(a.rows(), a.cols());
            for (double& m : mask.values()) m = rng.uniform() < net.dropout_rate ? 0.0 : keep_scale;
            a = mul(a, mask);
        }
        if (trace) {
            trace->inputs.push_back(std::move(h));
            trace->pre_activation.push_back(std::move(z));
            trace->dropout_mask.push_back(std::move(mask));
        }
        h = std::move(a);
    }
    return h;
}

namespace detail {
inline void require_embedding(const MilNetwork& net, const Matrix& h, const char* op) {
    if (h.cols() != net.embedding_dim())
        throw ShapeError(std::string(op) + ": embedding " + h.shape() + " but heads expect " +
                         std::to_string(net.embedding_dim()) + " columns");
}
} // namespace detail

/// f = sigmoid(h W_f + b_f); one row per instance, one column per class.
inline Matrix classify_instances(const MilNetwork& net, const Matrix& h) {
    detail::require_embedding(net, h, "classify_instances");
    return sigmoid(net.params.classifier.apply(h));
}

inline Matrix apply_phi(Phi phi, const Matrix& z) {
    switch (phi) {
    case Phi::relu: return relu(z);
    case Phi::sigmoid: return sigmoid(z);
    case Phi::softmax: return softmax_rows(z); // over classes, per instance
    }
    throw ContractError("unknown phi");
}

/// v = phi(h W_v + b_v); non-negative.
inline Matrix measure_instances(const MilNetwork& net, const Matrix& h) {
    detail::require_embedding(net, h, "measure_instances");
    return apply_phi(net.phi, net.params.measure.apply(h));
}

} // namespace milpool
