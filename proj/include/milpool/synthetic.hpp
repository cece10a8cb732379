#pragma once

// Weakly labelled synthetic bags.
//
// Each class k owns a cluster centre c_k = separation * u_k, u_k a random unit
// vector. A bag positive for k holds between min_positive and max_positive
// instances drawn from N(c_k, noise^2 I); every other instance is background
// drawn from N(0, noise^2 I). Every bag gets one primary class (per-class
// counts come from bags_per_class) and, with probability extra_label_prob, a
// second distinct class. Feature values are rounded to float32 so archives
// round-trip exactly.

#include <milpool/dataset.hpp>
#include <milpool/error.hpp>
#include <milpool/matrix.hpp>
#include <milpool/rng.hpp>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace milpool {

struct SyntheticSpec {
    std::size_t num_classes = 10;
    std::size_t feature_dim = 16;
    std::size_t instances_per_bag = 10;
    std::vector<std::size_t> bags_per_class = std::vector<std::size_t>(10, 500);
    std::size_t min_positive = 1;
    std::size_t max_positive = 2;
    double separation = 3.0;
    double noise_std = 1.0;
    double extra_label_prob = 0.0;
    /// Degrees of freedom of multivariate Student-t instance noise; 0 means Gaussian.
    std::size_t noise_dof = 0;
    std::uint64_t seed = 0;

    void validate() const {
        if (num_classes == 0 || feature_dim == 0 || instances_per_bag == 0)
            throw ConfigError("synthetic spec: classes, features and instances per bag must be at least 1");
        if (bags_per_class.size() != num_classes)
            throw ConfigError("synthetic spec: bags_per_class has " + std::to_string(bags_per_class.size()) +
                              " entries for " + std::to_string(num_classes) + " classes");
        if (min_positive < 1 || min_positive > max_positive)
            throw ConfigError("synthetic spec: positive instance range must satisfy 1 <= min <= max");
        if (max_positive > instances_per_bag)
            throw ConfigError("synthetic spec: up to " + std::to_string(max_positive) +
                              " positive instances do not fit in bags of " + std::to_string(instances_per_bag));
        if (extra_label_prob > 0.0 && (num_classes < 2 || 2 * max_positive > instances_per_bag))
            throw ConfigError("synthetic spec: multi-label bags need two classes and room for 2*max_positive instances");
        if (!(separation >= 0.0) || !(noise_std >= 0.0) || !(extra_label_prob >= 0.0 && extra_label_prob <= 1.0))
            throw ConfigError("synthetic spec: separation, noise and extra label probability out of range");
    }

    std::size_t total_bags() const {
        std::size_t n = 0;
        for (auto c : bags_per_class) n += c;
        return n;
    }
};

struct SyntheticData {
    Dataset dataset;
    Matrix centers; // K x M
    /// Source cluster of every instance: class index, or -1 for background.
    std::vector<std::vector<int>> instance_source;
};

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t K = spec.num_classes, M = spec.feature_dim, L = spec.instances_per_bag;
    Rng rng = Rng(spec.seed).derive(Stream::generator);

    SyntheticData out;
    out.centers = Matrix(K, M);
    for (std::size_t k = 0; k < K; ++k) {
        auto c = out.centers.row(k);
        double norm = 0.0;
        do {
            norm = 0.0;
            for (double& x : c) {
                x = rng.normal();
                norm += x * x;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (double& x : c) x = spec.separation * x / norm;
    }

    Dataset& ds = out.dataset;
    ds.num_classes = K;
    ds.feature_dim = M;
    ds.bags.reserve(spec.total_bags());
    auto draw_count = [&] {
        return spec.min_positive + static_cast<std::size_t>(rng.below(spec.max_positive - spec.min_positive + 1));
    };
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 0; i < spec.bags_per_class[k]; ++i) {
            Bag b;
            b.label.assign(K, 0);
            b.label[k] = 1;
            std::vector<int> source(L, -1);
            std::vector<std::size_t> slots(L);
            for (std::size_t l = 0; l < L; ++l) slots[l] = l;
            rng.shuffle(std::span<std::size_t>(slots));
            std::size_t next = 0;
            for (std::size_t n = draw_count(); n > 0; --n) source[slots[next++]] = static_cast<int>(k);
            if (spec.extra_label_prob > 0.0 && rng.uniform() < spec.extra_label_prob) {
                auto j = static_cast<std::size_t>(rng.below(K - 1));
                if (j >= k) ++j;
                b.label[j] = 1;
                for (std::size_t n = draw_count(); n > 0; --n) source[slots[next++]] = static_cast<int>(j);
            }
            b.instances = Matrix(L, M);
            for (std::size_t l = 0; l < L; ++l) {
                auto row = b.instances.row(l);
                double scale = spec.noise_std;
                if (spec.noise_dof > 0) {
                    double chi2 = 0.0;
                    for (std::size_t i = 0; i < spec.noise_dof; ++i) {
                        const double z = rng.normal();
                        chi2 += z * z;
                    }
                    scale *= std::sqrt(static_cast<double>(spec.noise_dof) / std::max(chi2, 1e-300));
                }
                for (std::size_t m = 0; m < M; ++m) {
                    const double centre = source[l] < 0 ? 0.0 : out.centers(static_cast<std::size_t>(source[l]), m);
                    row[m] = static_cast<float>(centre + scale * rng.normal());
                }
            }
            char id[32];
            std::snprintf(id, sizeof id, "syn-%02zu-%06zu", k, i);
            b.id = id;
            ds.bags.push_back(std::move(b));
            out.instance_source.push_back(std::move(source));
        }
    }
    return out;
}

} // namespace milpool
