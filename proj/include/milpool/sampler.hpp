#pragma once

// Mini-batch samplers.
//
// BalancedSampler visits classes round-robin, one batch slot per class in a
// fixed rotation that carries over between batches. Each slot takes the next
// bag from that class's shuffled queue; a queue is reshuffled when exhausted.
// Multi-label bags sit in the queue of every class they are positive for.
//
// ShuffledSampler is the unbalanced baseline: a fresh permutation of all bags
// each epoch, consumed in order.

#include <milpool/dataset.hpp>
#include <milpool/error.hpp>
#include <milpool/rng.hpp>

#include <span>
#include <string>
#include <vector>

namespace milpool {

class Sampler {
public:
    virtual ~Sampler() = default;
    virtual std::vector<std::size_t> next_batch(std::size_t batch_size) = 0;
};

class BalancedSampler final : public Sampler {
public:
    BalancedSampler(const Dataset& ds, Rng rng) : rng_(rng), queues_(ds.class_indices()) {
        std::string empty;
        for (std::size_t k = 0; k < queues_.size(); ++k)
            if (queues_[k].empty()) empty += (empty.empty() ? "" : ", ") + std::to_string(k);
        if (queues_.empty()) throw ConfigError("balanced sampler: dataset has no classes");
        if (!empty.empty()) throw ConfigError("balanced sampler: classes without bags: " + empty);
        cursors_.assign(queues_.size(), 0);
        selections_.assign(queues_.size(), 0);
        for (auto& q : queues_) rng_.shuffle(std::span<std::size_t>(q));
    }

    std::vector<std::size_t> next_batch(std::size_t batch_size) override {
        if (batch_size == 0) throw ConfigError("batch size must be at least 1");
        std::vector<std::size_t> batch;
        batch.reserve(batch_size);
        for (std::size_t s = 0; s < batch_size; ++s) {
            const std::size_t k = rotation_;
            rotation_ = (rotation_ + 1) % queues_.size();
            auto& q = queues_[k];
            if (cursors_[k] == q.size()) {
                rng_.shuffle(std::span<std::size_t>(q));
                cursors_[k] = 0;
            }
            batch.push_back(q[cursors_[k]++]);
            ++selections_[k];
        }
        return batch;
    }

    const std::vector<std::vector<std::size_t>>& class_queues() const noexcept { return queues_; }
    /// Slots served by each class so far.
    const std::vector<std::size_t>& selections() const noexcept { return selections_; }

private:
    Rng rng_;
    std::vector<std::vector<std::size_t>> queues_;
    std::vector<std::size_t> cursors_;
    std::vector<std::size_t> selections_;
    std::size_t rotation_ = 0;
};

class ShuffledSampler final : public Sampler {
public:
    ShuffledSampler(const Dataset& ds, Rng rng) : rng_(rng), order_(ds.size()) {
        if (order_.empty()) throw ConfigError("shuffled sampler: dataset is empty");
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        rng_.shuffle(std::span<std::size_t>(order_));
    }

    std::vector<std::size_t> next_batch(std::size_t batch_size) override {
        if (batch_size == 0) throw ConfigError("batch size must be at least 1");
        std::vector<std::size_t> batch;
        batch.reserve(batch_size);
        while (batch.size() < batch_size) {
            if (cursor_ == order_.size()) {
                rng_.shuffle(std::span<std::size_t>(order_));
                cursor_ = 0;
            }
            batch.push_back(order_[cursor_++]);
        }
        return batch;
    }

private:
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

} // namespace milpool
