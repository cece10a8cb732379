#pragma once

#include <milpool/error.hpp>
#include <milpool/matrix.hpp>
#include <milpool/rng.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace milpool {

/// Multi-hot label, one 0/1 entry per class.
using Label = std::vector<std::uint8_t>;

/// L instances of M features plus a weak bag-level label.
struct Bag {
    Matrix instances; // L x M
    Label label;      // K entries
    std::string id;

    std::size_t size() const { return instances.rows(); }
    bool has_class(std::size_t k) const { return label[k] != 0; }

    friend bool operator==(const Bag&, const Bag&) = default;
};

struct Dataset {
    std::vector<Bag> bags;
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;

    std::size_t size() const { return bags.size(); }
    bool empty() const { return bags.empty(); }

    /// Throws ConfigError naming the first bag that breaks the shared shape.
    void validate() const {
        for (std::size_t n = 0; n < bags.size(); ++n) {
            const Bag& b = bags[n];
            if (b.instances.rows() == 0) throw ConfigError("bag " + std::to_string(n) + " has no instances");
            if (b.instances.cols() != feature_dim)
                throw ConfigError("bag " + std::to_string(n) + " has " + std::to_string(b.instances.cols()) +
                                  " features, dataset declares " + std::to_string(feature_dim));
            if (b.label.size() != num_classes)
                throw ConfigError("bag " + std::to_string(n) + " label has " + std::to_string(b.label.size()) +
                                  " classes, dataset declares " + std::to_string(num_classes));
            for (auto bit : b.label)
                if (bit > 1) throw ConfigError("bag " + std::to_string(n) + " label is not binary");
        }
    }

    /// For every class, the indices of bags positive for it, ascending.
    std::vector<std::vector<std::size_t>> class_indices() const {
        std::vector<std::vector<std::size_t>> idx(num_classes);
        for (std::size_t n = 0; n < bags.size(); ++n)
            for (std::size_t k = 0; k < num_classes; ++k)
                if (bags[n].has_class(k)) idx[k].push_back(n);
        return idx;
    }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> c(num_classes, 0);
        for (const Bag& b : bags)
            for (std::size_t k = 0; k < num_classes; ++k) c[k] += b.label[k];
        return c;
    }

    /// Labels of the selected bags as a targets matrix (rows follow `indices`).
    Matrix targets(const std::vector<std::size_t>& indices) const {
        Matrix t(indices.size(), num_classes);
        for (std::size_t i = 0; i < indices.size(); ++i)
            for (std::size_t k = 0; k < num_classes; ++k) t(i, k) = bags[indices[i]].label[k];
        return t;
    }

    Dataset subset(const std::vector<std::size_t>& indices) const {
        Dataset out{{}, num_classes, feature_dim};
        out.bags.reserve(indices.size());
        for (auto i : indices) out.bags.push_back(bags[i]);
        return out;
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SplitResult {
    Dataset train;
    Dataset eval;
    std::vector<std::string> warnings;
};

/// Stratified, seed-deterministic split into (train, eval).
///
/// Each bag is assigned to the stratum of its rarest positive class (bags with
/// no labels form their own stratum). Each stratum is shuffled and its eval
/// share is rounded; when a stratum has at least two bags and the eval
/// fraction is strictly between 0 and 1, both sides get at least one bag.
/// Eval counts are then nudged, largest remainder first, so the total matches
/// round(N * eval_fraction) whenever the per-stratum minimums allow it. A
/// class with a single bag keeps it in train and is reported in `warnings`.
inline SplitResult split(const Dataset& ds, double train_fraction, double eval_fraction, Rng rng) {
    if (!(train_fraction >= 0.0 && eval_fraction >= 0.0) || std::abs(train_fraction + eval_fraction - 1.0) > 1e-9)
        throw ConfigError("split fractions must be non-negative and sum to 1");

    const auto counts = ds.class_counts();
    const std::size_t none = ds.num_classes; // stratum of unlabelled bags
    std::vector<std::vector<std::size_t>> strata(ds.num_classes + 1);
    for (std::size_t n = 0; n < ds.size(); ++n) {
        std::size_t best = none;
        for (std::size_t k = 0; k < ds.num_classes; ++k)
            if (ds.bags[n].has_class(k) && (best == none || counts[k] < counts[best])) best = k;
        strata[best].push_back(n);
    }

    SplitResult out;
    for (std::size_t k = 0; k < ds.num_classes; ++k)
        if (counts[k] == 1) out.warnings.push_back("class " + std::to_string(k) + " has a single bag; it stays in train");

    const bool interior = eval_fraction > 0.0 && eval_fraction < 1.0;
    std::vector<std::size_t> take(strata.size(), 0), lo(strata.size(), 0), hi(strata.size(), 0);
    std::vector<double> remainder(strata.size(), 0.0);
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < strata.size(); ++s) {
        const std::size_t n = strata[s].size();
        const double exact = eval_fraction * static_cast<double>(n);
        lo[s] = 0;
        hi[s] = n;
        if (interior && n >= 2) {
            lo[s] = 1;
            hi[s] = n - 1;
        } else if (interior && n == 1 && s != none) {
            hi[s] = 0; // lone bag stays in train
        }
        take[s] = std::clamp(static_cast<std::size_t>(std::floor(exact)), lo[s], hi[s]);
        remainder[s] = exact - std::floor(exact);
        assigned += take[s];
    }
    const auto target = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(ds.size())));
    std::vector<std::size_t> order(strata.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
    for (bool progress = true; assigned < target && progress;) {
        progress = false;
        for (auto s : order) {
            if (assigned == target) break;
            if (take[s] < hi[s]) {
                ++take[s];
                ++assigned;
                progress = true;
            }
        }
    }
    for (bool progress = true; assigned > target && progress;) {
        progress = false;
        for (auto it = order.rbegin(); it != order.rend() && assigned > target; ++it)
            if (take[*it] > lo[*it]) {
                --take[*it];
                --assigned;
                progress = true;
            }
    }

    std::vector<std::size_t> train_idx, eval_idx;
    for (std::size_t s = 0; s < strata.size(); ++s) {
        auto members = strata[s];
        rng.shuffle(std::span<std::size_t>(members));
        for (std::size_t i = 0; i < members.size(); ++i) (i < take[s] ? eval_idx : train_idx).push_back(members[i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(eval_idx.begin(), eval_idx.end());
    out.train = ds.subset(train_idx);
    out.eval = ds.subset(eval_idx);
    return out;
}

} // namespace milpool
