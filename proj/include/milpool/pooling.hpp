#pragma once

// Bag-level aggregation of instance predictions.
//
//   Collective          F_k = (1/L) sum_l f_lk
//   MaxSelection        F_k = max_l f_lk
//   WeightedCollective  F_k = sum_l w(x_l) f_lk / sum_l w(x_l)
//   Attention           F_k = sum_l f_lk p_lk,   p_lk = v_lk / sum_j v_jk
//
// Attention is the expectation of the instance classifier under a per-bag,
// per-class probability measure built from the non-negative measure head.

#include <milpool/error.hpp>
#include <milpool/matrix.hpp>
#include <milpool/network.hpp>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>

namespace milpool {

struct Collective {};
struct MaxSelection {};

/// Class-independent instance weight w(x), evaluated on raw features.
using InstanceWeightFn = std::function<double(std::span<const double>)>;

/// Weighted mean over instances. With no weight function the weights come from
/// the network's measure head, which is the attention computation under
/// another name.
struct WeightedCollective {
    InstanceWeightFn weight;
};

struct Attention {
    Phi phi = Phi::softmax;
};

using PoolingStrategy = std::variant<Collective, MaxSelection, WeightedCollective, Attention>;

inline std::string strategy_name(const PoolingStrategy& s) {
    struct V {
        std::string operator()(const Collective&) const { return "collective"; }
        std::string operator()(const MaxSelection&) const { return "max"; }
        std::string operator()(const WeightedCollective&) const { return "weighted"; }
        std::string operator()(const Attention& a) const { return "attention-" + std::string(to_string(a.phi)); }
    };
    return std::visit(V{}, s);
}

/// Added to every measure value before normalizing; an all-zero column
/// becomes the uniform measure.
inline constexpr double kMeasureEpsilon = 1e-8;

/// Per-class probability measure over the instances of one bag: L x K,
/// non-negative, every column sums to one.
class ProbabilityMeasure {
public:
    ProbabilityMeasure() = default;

    const Matrix& p() const noexcept { return p_; }
    std::size_t instances() const noexcept { return p_.rows(); }
    std::size_t classes() const noexcept { return p_.cols(); }

    friend ProbabilityMeasure normalize_measure(const Matrix& v);

private:
    explicit ProbabilityMeasure(Matrix p) : p_(std::move(p)) {}
    Matrix p_;
};

/// p[:,k] = (v[:,k] + eps) / sum_l (v[l,k] + eps).
inline ProbabilityMeasure normalize_measure(const Matrix& v) {
    if (v.empty()) throw DomainError("normalize_measure: empty measure " + v.shape());
    Matrix p(v.rows(), v.cols());
    for (std::size_t k = 0; k < v.cols(); ++k) {
        double total = 0.0;
        for (std::size_t l = 0; l < v.rows(); ++l) {
            const double x = v(l, k);
            if (!(x >= 0.0))
                throw DomainError("normalize_measure: measure must be non-negative, got " + std::to_string(x) +
                                  " at (" + std::to_string(l) + ", " + std::to_string(k) + ")");
            total += x + kMeasureEpsilon;
        }
        for (std::size_t l = 0; l < v.rows(); ++l) p(l, k) = (v(l, k) + kMeasureEpsilon) / total;
    }
    return ProbabilityMeasure(std::move(p));
}

/// Weights of a WeightedCollective strategy for one bag, broadcast to K columns.
inline Matrix instance_weights(const InstanceWeightFn& w, const Matrix& instances, std::size_t classes) {
    Matrix v(instances.rows(), classes);
    for (std::size_t l = 0; l < instances.rows(); ++l) {
        const double x = w(instances.row(l));
        for (std::size_t k = 0; k < classes; ++k) v(l, k) = x;
    }
    return v;
}

inline bool needs_measure(const PoolingStrategy& s) {
    return std::holds_alternative<Attention>(s) || std::holds_alternative<WeightedCollective>(s);
}

/// F for one bag from instance predictions f (L x K).
inline Matrix pool(const PoolingStrategy& strategy, const Matrix& f, const ProbabilityMeasure* measure = nullptr) {
    if (f.empty()) throw DomainError("pool: empty bag");
    if (std::holds_alternative<Collective>(strategy)) return mean(f, Axis::rows);
    if (std::holds_alternative<MaxSelection>(strategy)) return max(f, Axis::rows);

    if (measure == nullptr) throw ContractError("pool: " + strategy_name(strategy) + " needs a probability measure");
    const Matrix& p = measure->p();
    if (!p.same_shape(f))
        throw ShapeError("pool: measure " + p.shape() + " does not match predictions " + f.shape());
    Matrix out(1, f.cols());
    for (std::size_t l = 0; l < f.rows(); ++l)
        for (std::size_t k = 0; k < f.cols(); ++k) out(0, k) += f(l, k) * p(l, k);
    return out;
}

inline Matrix pool(const PoolingStrategy& strategy, const Matrix& f, const std::optional<ProbabilityMeasure>& measure) {
    return pool(strategy, f, measure ? &*measure : nullptr);
}

} // namespace milpool
