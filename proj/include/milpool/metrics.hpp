#pragma once

// Ranking metrics for multi-label bag scores.
//
//   average precision  mean, over positives, of precision at that positive's
//                      rank; scores sorted descending, ties by index ascending
//   AUC                Mann-Whitney U / (n_pos * n_neg), ties count one half
//   d-prime            sqrt(2) * inverse standard normal CDF of AUC

#include <milpool/error.hpp>
#include <milpool/matrix.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace milpool {

namespace detail {
inline void require_labels(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size())
        throw ShapeError("metrics: " + std::to_string(scores.size()) + " scores but " + std::to_string(labels.size()) +
                         " labels");
}
} // namespace detail

/// Throws DomainError when there is no positive label.
inline double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    detail::require_labels(scores, labels);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    double total = 0.0;
    std::size_t hits = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (labels[order[rank]]) {
            ++hits;
            total += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
    }
    if (hits == 0) throw DomainError("average_precision: no positive labels");
    return total / static_cast<double>(hits);
}

/// Throws DomainError unless both polarities are present.
inline double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    detail::require_labels(scores, labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

    double positive_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j); // mean of ranks i+1..j
        for (std::size_t t = i; t < j; ++t)
            if (labels[order[t]]) {
                positive_rank_sum += mid_rank;
                ++n_pos;
            }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DomainError("auc: needs at least one positive and one negative label");
    const double np = static_cast<double>(n_pos);
    return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation (relative error below 1.15e-9) followed by
/// one Halley step against erfc, which brings the error to the level of the
/// erfc implementation.
inline double normal_quantile(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("normal_quantile: probability outside [0, 1]");
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();

    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

/// sqrt(2) * Phi^-1(auc). Returns +-infinity at auc 1 and 0.
inline double d_prime(double auc_value) {
    if (!(auc_value >= 0.0 && auc_value <= 1.0)) throw DomainError("d_prime: AUC outside [0, 1]");
    return std::sqrt(2.0) * normal_quantile(auc_value);
}

// -- per-class evaluation ---------------------------------------------------------

/// Bag scores and binary labels, one row per bag, one column per class.
struct ScoreTable {
    Matrix scores;
    Matrix labels;
};

struct ClassMetrics {
    double ap = 0.0;
    double auc = 0.0;
    double d_prime = 0.0;

    friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

struct MetricsReport {
    std::vector<ClassMetrics> per_class;  // entries of skipped classes are zero
    ClassMetrics macro;                   // means over evaluated classes
    std::vector<std::size_t> skipped_classes;
    std::vector<std::size_t> infinite_d_prime; // classes with AUC exactly 0 or 1

    bool skipped(std::size_t k) const {
        return std::find(skipped_classes.begin(), skipped_classes.end(), k) != skipped_classes.end();
    }
    std::size_t evaluated() const { return per_class.size() - skipped_classes.size(); }

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Per-class AP, AUC and d-prime plus macro means. Classes with no positive or
/// no negative bag are skipped and listed. Macro sums run in ascending class order.
inline MetricsReport evaluate(const ScoreTable& table) {
    const Matrix& s = table.scores;
    const Matrix& y = table.labels;
    if (!s.same_shape(y)) throw ShapeError("evaluate: scores " + s.shape() + " vs labels " + y.shape());
    if (s.empty()) throw DomainError("evaluate: empty score table");

    MetricsReport rep;
    rep.per_class.resize(s.cols());
    std::vector<double> column(s.rows());
    std::vector<std::uint8_t> truth(s.rows());
    double sum_ap = 0.0, sum_auc = 0.0, sum_dp = 0.0;
    for (std::size_t k = 0; k < s.cols(); ++k) {
        std::size_t pos = 0;
        for (std::size_t n = 0; n < s.rows(); ++n) {
            column[n] = s(n, k);
            const double t = y(n, k);
            if (t != 0.0 && t != 1.0) throw DomainError("evaluate: labels must be 0 or 1");
            truth[n] = static_cast<std::uint8_t>(t);
            pos += truth[n];
        }
        if (pos == 0 || pos == s.rows()) {
            rep.skipped_classes.push_back(k);
            continue;
        }
        ClassMetrics& m = rep.per_class[k];
        m.ap = average_precision(column, truth);
        m.auc = auc(column, truth);
        m.d_prime = d_prime(m.auc);
        if (std::isinf(m.d_prime)) rep.infinite_d_prime.push_back(k);
        sum_ap += m.ap;
        sum_auc += m.auc;
        sum_dp += m.d_prime;
    }
    const std::size_t n = rep.evaluated();
    if (n == 0) throw DomainError("evaluate: every class lacks positives or negatives");
    rep.macro = {sum_ap / static_cast<double>(n), sum_auc / static_cast<double>(n), sum_dp / static_cast<double>(n)};
    return rep;
}

} // namespace milpool
