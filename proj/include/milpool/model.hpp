#pragma once

// Forward pass over a mini-batch of bags, the training loss, and the
// hand-derived backward pass.
//
// Bags in a batch are stacked row-wise so the embedding and both heads run as
// single matrix products; pooling then works on each bag's row block.

#include <milpool/error.hpp>
#include <milpool/matrix.hpp>
#include <milpool/network.hpp>
#include <milpool/pooling.hpp>
#include <milpool/rng.hpp>

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace milpool {

struct BagPrediction {
    Matrix F;              // 1 x K
    Matrix instance_probs; // L x K
    std::optional<ProbabilityMeasure> measure;
};

/// Everything the backward pass needs from one forward pass.
struct ForwardPass {
    bool ran = false;
    PoolingStrategy strategy;
    std::vector<std::size_t> offsets; // bag b occupies rows [offsets[b], offsets[b+1])
    EmbedTrace trace;
    Matrix embedding;      // h, stacked
    Matrix instance_probs; // f, stacked
    Matrix measure_logits; // W_v h + b_v (learned measure only)
    Matrix measure;        // v, stacked (measure strategies only)
    Matrix p;              // normalized measure, stacked
    Matrix column_totals;  // per bag, per class sum_l (v + eps): B x K
    std::vector<std::vector<std::size_t>> winners; // MaxSelection: argmax row per bag and class
    Matrix F;              // B x K

    std::size_t bags() const { return offsets.empty() ? 0 : offsets.size() - 1; }
    std::size_t bag_size(std::size_t b) const { return offsets[b + 1] - offsets[b]; }
};

namespace detail {

inline bool learned_measure(const PoolingStrategy& s) {
    if (std::holds_alternative<Attention>(s)) return true;
    if (auto* w = std::get_if<WeightedCollective>(&s)) return !w->weight;
    return false;
}

inline Matrix stack_rows(std::span<const Matrix* const> parts, std::size_t cols, std::vector<std::size_t>& offsets) {
    offsets.assign(1, 0);
    for (const Matrix* m : parts) {
        if (m->rows() == 0) throw DomainError("bag " + std::to_string(offsets.size() - 1) + " has no instances");
        if (m->cols() != cols)
            throw ShapeError("bag " + std::to_string(offsets.size() - 1) + " has shape " + m->shape() +
                             " but network expects " + std::to_string(cols) + " features");
        offsets.push_back(offsets.back() + m->rows());
    }
    Matrix out(offsets.back(), cols);
    std::size_t r = 0;
    for (const Matrix* m : parts) {
        std::copy(m->values().begin(), m->values().end(), out.row(r).begin());
        r += m->rows();
    }
    return out;
}

} // namespace detail

/// Runs embed -> classify_instances (-> measure -> normalize) -> pool for every bag.
inline ForwardPass forward_batch(const MilNetwork& net, const PoolingStrategy& strategy,
                                 std::span<const Matrix* const> bags, Rng& rng) {
    if (bags.empty()) throw DomainError("forward_batch: empty batch");
    if (auto* a = std::get_if<Attention>(&strategy); a && a->phi != net.phi)
        throw ContractError("attention strategy uses phi=" + std::string(to_string(a->phi)) +
                            " but the network's measure head was built with phi=" +
                            std::string(to_string(net.phi)));

    ForwardPass fp;
    fp.strategy = strategy;
    const Matrix x = detail::stack_rows(bags, net.feature_dim(), fp.offsets);
    fp.embedding = embed(net, x, rng, &fp.trace);
    fp.instance_probs = classify_instances(net, fp.embedding);

    const std::size_t B = fp.bags();
    const std::size_t K = net.num_classes();
    fp.F = Matrix(B, K);

    if (std::holds_alternative<Collective>(strategy) || std::holds_alternative<MaxSelection>(strategy)) {
        const bool is_max = std::holds_alternative<MaxSelection>(strategy);
        if (is_max) fp.winners.resize(B);
        for (std::size_t b = 0; b < B; ++b) {
            const Matrix f = fp.instance_probs.slice_rows(fp.offsets[b], fp.bag_size(b));
            if (is_max) fp.winners[b] = argmax(f, Axis::rows);
            const Matrix Fb = pool(strategy, f);
            std::copy(Fb.values().begin(), Fb.values().end(), fp.F.row(b).begin());
        }
        fp.ran = true;
        return fp;
    }

    if (detail::learned_measure(strategy)) {
        fp.measure_logits = net.params.measure.apply(fp.embedding);
        fp.measure = apply_phi(net.phi, fp.measure_logits);
    } else {
        fp.measure = instance_weights(std::get<WeightedCollective>(strategy).weight, x, K);
    }

    fp.p = Matrix(fp.measure.rows(), K);
    fp.column_totals = Matrix(B, K);
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t first = fp.offsets[b];
        const ProbabilityMeasure pm = normalize_measure(fp.measure.slice_rows(first, fp.bag_size(b)));
        const Matrix f = fp.instance_probs.slice_rows(first, fp.bag_size(b));
        const Matrix Fb = pool(strategy, f, &pm);
        std::copy(Fb.values().begin(), Fb.values().end(), fp.F.row(b).begin());
        std::copy(pm.p().values().begin(), pm.p().values().end(), fp.p.row(first).begin());
        for (std::size_t l = 0; l < fp.bag_size(b); ++l)
            for (std::size_t k = 0; k < K; ++k) fp.column_totals(b, k) += fp.measure(first + l, k) + kMeasureEpsilon;
    }
    fp.ran = true;
    return fp;
}

inline BagPrediction forward_bag(const MilNetwork& net, const PoolingStrategy& strategy, const Matrix& bag, Rng& rng) {
    const Matrix* one[] = {&bag};
    ForwardPass fp = forward_batch(net, strategy, one, rng);
    BagPrediction out{std::move(fp.F), std::move(fp.instance_probs), std::nullopt};
    if (needs_measure(strategy)) out.measure = normalize_measure(fp.measure);
    return out;
}

// -- loss ------------------------------------------------------------------------

/// Bounds applied to F before taking logs.
inline constexpr double kProbClamp = 1e-12;

/// Mean binary cross-entropy over every entry of F against targets d in [0, 1].
inline double loss(const Matrix& F, const Matrix& d) {
    detail::require_same_shape(F, d, "loss");
    if (F.empty()) throw DomainError("loss: empty prediction");
    double total = 0.0;
    for (std::size_t i = 0; i < F.size(); ++i) {
        const double t = d.values()[i];
        if (!(t >= 0.0 && t <= 1.0)) throw DomainError("loss: target outside [0, 1]");
        const double y = std::clamp(F.values()[i], kProbClamp, 1.0 - kProbClamp);
        total -= t * safe_log(y) + (1.0 - t) * safe_log(1.0 - y);
    }
    return total / static_cast<double>(F.size());
}

/// d loss / d F. Zero where the clamp is active.
inline Matrix loss_gradient(const Matrix& F, const Matrix& d) {
    detail::require_same_shape(F, d, "loss_gradient");
    Matrix g(F.rows(), F.cols());
    const double scale = 1.0 / static_cast<double>(F.size());
    for (std::size_t i = 0; i < F.size(); ++i) {
        const double y = F.values()[i];
        if (y < kProbClamp || y > 1.0 - kProbClamp) continue;
        const double t = d.values()[i];
        g.values()[i] = scale * (y - t) / (y * (1.0 - y));
    }
    return g;
}

// -- backward --------------------------------------------------------------------

namespace detail {

/// Gradient w.r.t. the measure logits given the gradient w.r.t. phi's output.
inline Matrix phi_backward(Phi phi, const Matrix& logits, const Matrix& v, const Matrix& dv) {
    Matrix dz(v.rows(), v.cols());
    switch (phi) {
    case Phi::relu:
        for (std::size_t i = 0; i < v.size(); ++i) dz.values()[i] = logits.values()[i] > 0.0 ? dv.values()[i] : 0.0;
        break;
    case Phi::sigmoid:
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double s = v.values()[i];
            dz.values()[i] = dv.values()[i] * s * (1.0 - s);
        }
        break;
    case Phi::softmax:
        for (std::size_t r = 0; r < v.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t k = 0; k < v.cols(); ++k) dot += dv(r, k) * v(r, k);
            for (std::size_t k = 0; k < v.cols(); ++k) dz(r, k) = v(r, k) * (dv(r, k) - dot);
        }
        break;
    }
    return dz;
}

inline void dense_backward(const Matrix& input, const Matrix& dz, DenseLayer& grad) {
    grad.weight = matmul_tn(input, dz);
    grad.bias = sum(dz, Axis::rows);
}

} // namespace detail

/// Gradients of the loss w.r.t. every parameter, given d loss / d F (B x K).
inline NetworkParams backward_from(const MilNetwork& net, const ForwardPass& fp, const Matrix& dF) {
    if (!fp.ran) throw StateError("backward called without a forward pass");
    if (dF.rows() != fp.bags() || dF.cols() != net.num_classes())
        throw ShapeError("backward: upstream gradient " + dF.shape() + " does not match predictions " + fp.F.shape());

    const std::size_t K = net.num_classes();
    const Matrix& f = fp.instance_probs;
    Matrix df(f.rows(), K);
    Matrix dv; // w.r.t. learned measure head output

    const PoolingStrategy& s = fp.strategy;
    if (std::holds_alternative<Collective>(s)) {
        for (std::size_t b = 0; b < fp.bags(); ++b) {
            const double inv = 1.0 / static_cast<double>(fp.bag_size(b));
            for (std::size_t r = fp.offsets[b]; r < fp.offsets[b + 1]; ++r)
                for (std::size_t k = 0; k < K; ++k) df(r, k) = dF(b, k) * inv;
        }
    } else if (std::holds_alternative<MaxSelection>(s)) {
        for (std::size_t b = 0; b < fp.bags(); ++b)
            for (std::size_t k = 0; k < K; ++k) df(fp.offsets[b] + fp.winners[b][k], k) = dF(b, k);
    } else {
        const bool learned = detail::learned_measure(s);
        if (learned) dv = Matrix(f.rows(), K);
        for (std::size_t b = 0; b < fp.bags(); ++b) {
            for (std::size_t r = fp.offsets[b]; r < fp.offsets[b + 1]; ++r) {
                for (std::size_t k = 0; k < K; ++k) {
                    df(r, k) = dF(b, k) * fp.p(r, k);
                    // quotient rule through p = (v + eps) / sum (v + eps)
                    if (learned) dv(r, k) = dF(b, k) * (f(r, k) - fp.F(b, k)) / fp.column_totals(b, k);
                }
            }
        }
    }

    NetworkParams grads = net.params.zeros_like();

    // classifier head: f = sigmoid(z_f)
    Matrix dz_f(f.rows(), K);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double y = f.values()[i];
        dz_f.values()[i] = df.values()[i] * y * (1.0 - y);
    }
    detail::dense_backward(fp.embedding, dz_f, grads.classifier);
    Matrix dh = matmul_nt(dz_f, net.params.classifier.weight);

    if (!dv.empty()) {
        const Matrix dz_v = detail::phi_backward(net.phi, fp.measure_logits, fp.measure, dv);
        detail::dense_backward(fp.embedding, dz_v, grads.measure);
        dh = add(dh, matmul_nt(dz_v, net.params.measure.weight));
    }

    for (std::size_t i = net.params.embed.size(); i-- > 0;) {
        const Matrix& z = fp.trace.pre_activation[i];
        const Matrix& mask = fp.trace.dropout_mask[i];
        Matrix dz(z.rows(), z.cols());
        for (std::size_t j = 0; j < z.size(); ++j) {
            double g = dh.values()[j];
            if (!mask.empty()) g *= mask.values()[j];
            dz.values()[j] = z.values()[j] > 0.0 ? g : 0.0;
        }
        detail::dense_backward(fp.trace.inputs[i], dz, grads.embed[i]);
        if (i > 0) dh = matmul_nt(dz, net.params.embed[i].weight);
    }
    return grads;
}

/// Gradients of loss(F, targets) for a completed forward pass; targets is B x K.
inline NetworkParams backward(const MilNetwork& net, const ForwardPass& fp, const Matrix& targets) {
    if (!fp.ran) throw StateError("backward called without a forward pass");
    return backward_from(net, fp, loss_gradient(fp.F, targets));
}

/// Single-bag convenience: forward in the network's mode, then backward.
inline NetworkParams backward(const MilNetwork& net, const PoolingStrategy& strategy, const Matrix& bag,
                              const Matrix& target, Rng& rng) {
    const Matrix* one[] = {&bag};
    const ForwardPass fp = forward_batch(net, strategy, one, rng);
    return backward(net, fp, target);
}

} // namespace milpool
