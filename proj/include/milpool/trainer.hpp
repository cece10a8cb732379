#pragma once

// Training loop, evaluation and the run log.
//
// Every source of randomness is a sub-stream of Rng(config.seed): weight
// init, dropout masks and the batch sampler each get their own, so switching
// balancing on or off changes the sampler only.

#include <milpool/checkpoint.hpp>
#include <milpool/dataset.hpp>
#include <milpool/error.hpp>
#include <milpool/keyvalue.hpp>
#include <milpool/metrics.hpp>
#include <milpool/model.hpp>
#include <milpool/network.hpp>
#include <milpool/optimizer.hpp>
#include <milpool/pooling.hpp>
#include <milpool/rng.hpp>
#include <milpool/sampler.hpp>

#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace milpool {

enum class PoolingKind { collective, max, attention };

inline std::string_view to_string(PoolingKind k) {
    switch (k) {
    case PoolingKind::collective: return "collective";
    case PoolingKind::max: return "max";
    case PoolingKind::attention: return "attention";
    }
    return "?";
}

inline std::optional<PoolingKind> parse_pooling(std::string_view s) {
    if (s == "collective") return PoolingKind::collective;
    if (s == "max") return PoolingKind::max;
    if (s == "attention") return PoolingKind::attention;
    return std::nullopt;
}

inline PoolingStrategy make_strategy(PoolingKind kind, Phi phi) {
    switch (kind) {
    case PoolingKind::collective: return Collective{};
    case PoolingKind::max: return MaxSelection{};
    case PoolingKind::attention: return Attention{phi};
    }
    throw ContractError("unknown pooling kind");
}

struct ExperimentConfig {
    PoolingKind pooling = PoolingKind::attention;
    Phi phi = Phi::softmax;
    std::vector<std::size_t> hidden = {500, 500, 500};
    double dropout = 0.2;
    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t steps = 10000;
    bool balanced = true;
    std::uint64_t seed = 0;
    std::size_t eval_every = 500;
    /// Bags scored for the train-loss column of the run log (evenly strided).
    std::size_t loss_probe = 1000;
    bool deterministic = true;

    void validate() const {
        if (batch_size == 0) throw ConfigError("batch size must be at least 1");
        if (eval_every == 0) throw ConfigError("eval cadence must be at least 1 step");
        if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
        if (hidden.empty()) throw ConfigError("at least one hidden layer is required");
    }

    kv::Pairs pairs() const {
        return {{"config.strategy", std::string(to_string(pooling))},
                {"config.phi", std::string(to_string(phi))},
                {"config.hidden", kv::join(hidden)},
                {"config.dropout", kv::format_double(dropout)},
                {"config.lr", kv::format_double(lr)},
                {"config.batch_size", std::to_string(batch_size)},
                {"config.steps", std::to_string(steps)},
                {"config.balanced", balanced ? "on" : "off"},
                {"config.seed", std::to_string(seed)},
                {"config.eval_every", std::to_string(eval_every)},
                {"config.deterministic", deterministic ? "on" : "off"}};
    }
};

struct RunRecord {
    std::size_t step = 0;
    double train_loss = 0.0;
    double map = 0.0;
    double auc = 0.0;
    double d_prime = 0.0;
    double wall_seconds = 0.0;

    friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct RunLog {
    kv::Pairs header; // effective configuration and data provenance
    std::vector<RunRecord> records;
    std::size_t best_step = 0;
    double best_map = 0.0;

    /// key=value schema:
    ///   format=milpool-runlog, version=1, the header pairs, records=<n>,
    ///   record.<i>.{step,train_loss,map,auc,d_prime}, plus
    ///   record.<i>.wall_seconds when wall time is included,
    ///   best.step, best.map
    void write(std::ostream& out, bool include_wall_time) const {
        kv::Pairs p{{"format", "milpool-runlog"}, {"version", "1"}};
        p.insert(p.end(), header.begin(), header.end());
        p.emplace_back("records", std::to_string(records.size()));
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& r = records[i];
            const std::string pre = "record." + std::to_string(i) + ".";
            p.emplace_back(pre + "step", std::to_string(r.step));
            p.emplace_back(pre + "train_loss", kv::format_double(r.train_loss));
            p.emplace_back(pre + "map", kv::format_double(r.map));
            p.emplace_back(pre + "auc", kv::format_double(r.auc));
            p.emplace_back(pre + "d_prime", kv::format_double(r.d_prime));
            if (include_wall_time) p.emplace_back(pre + "wall_seconds", kv::format_double(r.wall_seconds));
        }
        p.emplace_back("best.step", std::to_string(best_step));
        p.emplace_back("best.map", kv::format_double(best_map));
        kv::write(out, p);
    }
};

/// Eval-mode bag scores, N x K.
inline Matrix predict(const MilNetwork& trained, const PoolingStrategy& strategy, const Dataset& ds,
                      const std::vector<std::size_t>& indices, std::size_t chunk = 256) {
    MilNetwork net = trained;
    net.mode = Mode::eval;
    Rng unused(0);
    Matrix scores(indices.size(), net.num_classes());
    std::vector<const Matrix*> batch;
    for (std::size_t start = 0; start < indices.size(); start += chunk) {
        batch.clear();
        const std::size_t end = std::min(indices.size(), start + chunk);
        for (std::size_t i = start; i < end; ++i) batch.push_back(&ds.bags[indices[i]].instances);
        const ForwardPass fp = forward_batch(net, strategy, batch, unused);
        std::copy(fp.F.values().begin(), fp.F.values().end(), scores.row(start).begin());
    }
    return scores;
}

inline std::vector<std::size_t> all_indices(const Dataset& ds) {
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
}

inline Matrix predict(const MilNetwork& net, const PoolingStrategy& strategy, const Dataset& ds) {
    return predict(net, strategy, ds, all_indices(ds));
}

inline void require_compatible(const MilNetwork& net, const Dataset& ds) {
    if (net.feature_dim() != ds.feature_dim || net.num_classes() != ds.num_classes)
        throw ConfigError("model expects M=" + std::to_string(net.feature_dim()) + ", K=" +
                          std::to_string(net.num_classes()) + " but data has M=" + std::to_string(ds.feature_dim) +
                          ", K=" + std::to_string(ds.num_classes));
}

/// Eval-mode metrics of a model on a dataset.
inline MetricsReport evaluate_model(const MilNetwork& net, const PoolingStrategy& strategy, const Dataset& ds) {
    require_compatible(net, ds);
    if (ds.empty()) throw DomainError("cannot evaluate on an empty dataset");
    return evaluate({predict(net, strategy, ds), ds.targets(all_indices(ds))});
}

struct TrainOutcome {
    Checkpoint best;  // highest eval mAP seen at a log record (earliest on ties)
    Checkpoint last;
    MetricsReport best_report;
    RunLog log;
};

/// Trains on `train`, scoring `eval` every `eval_every` steps (and at step 0
/// and the final step). With an empty eval set the metrics use the train set.
inline TrainOutcome train_model(const ExperimentConfig& cfg, const Dataset& train, const Dataset& eval,
                                std::ostream* progress = nullptr) {
    cfg.validate();
    train.validate();
    eval.validate();
    if (train.empty()) throw ConfigError("training set is empty");
    if (!eval.empty() && (eval.num_classes != train.num_classes || eval.feature_dim != train.feature_dim))
        throw ConfigError("train and eval sets disagree on M or K");

    const Rng root(cfg.seed);
    Rng init_rng = root.derive(Stream::init);
    Rng dropout_rng = root.derive(Stream::dropout);
    std::unique_ptr<Sampler> sampler;
    if (cfg.balanced)
        sampler = std::make_unique<BalancedSampler>(train, root.derive(Stream::sampler));
    else
        sampler = std::make_unique<ShuffledSampler>(train, root.derive(Stream::sampler));

    MilNetwork net = init_network({train.feature_dim, train.num_classes, cfg.hidden, cfg.dropout, cfg.phi}, init_rng);
    const PoolingStrategy strategy = make_strategy(cfg.pooling, cfg.phi);
    Adam adam;

    const Dataset& scored = eval.empty() ? train : eval;
    const std::vector<std::size_t> scored_idx = all_indices(scored);
    const Matrix scored_targets = scored.targets(scored_idx);
    std::vector<std::size_t> probe;
    const std::size_t probe_n = std::min(cfg.loss_probe, train.size());
    for (std::size_t i = 0; i < probe_n; ++i) probe.push_back(i * train.size() / probe_n);
    const Matrix probe_targets = train.targets(probe);

    TrainOutcome out;
    out.log.header = cfg.pairs();
    out.log.header.emplace_back("data.train_bags", std::to_string(train.size()));
    out.log.header.emplace_back("data.eval_bags", std::to_string(eval.size()));
    out.log.header.emplace_back("data.classes", std::to_string(train.num_classes));
    out.log.header.emplace_back("data.features", std::to_string(train.feature_dim));
    out.log.header.emplace_back("model.parameters", std::to_string(net.parameter_count()));

    const auto t0 = std::chrono::steady_clock::now();
    bool have_best = false;
    auto record = [&](std::size_t step) {
        RunRecord r;
        r.step = step;
        r.train_loss = loss(predict(net, strategy, train, probe), probe_targets);
        if (!std::isfinite(r.train_loss)) throw NumericError("non-finite loss at step " + std::to_string(step));
        const MetricsReport rep = evaluate({predict(net, strategy, scored, scored_idx), scored_targets});
        r.map = rep.macro.ap;
        r.auc = rep.macro.auc;
        r.d_prime = rep.macro.d_prime;
        r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.log.records.push_back(r);
        if (!have_best || r.map > out.log.best_map) {
            have_best = true;
            out.log.best_map = r.map;
            out.log.best_step = step;
            out.best = {net, strategy};
            out.best.network.mode = Mode::eval;
            out.best_report = rep;
        }
        if (progress)
            *progress << "step " << step << "  loss " << r.train_loss << "  mAP " << r.map << "  AUC " << r.auc
                      << "  d' " << r.d_prime << '\n';
    };

    // A NaN reaching the measure surfaces as a DomainError; report it as the
    // numeric failure it is, naming the step.
    std::size_t step = 0;
    try {
        record(0);
        std::vector<const Matrix*> batch;
        for (step = 1; step <= cfg.steps; ++step) {
            const auto idx = sampler->next_batch(cfg.batch_size);
            batch.clear();
            for (auto i : idx) batch.push_back(&train.bags[i].instances);
            net.mode = Mode::train;
            const ForwardPass fp = forward_batch(net, strategy, batch, dropout_rng);
            const Matrix targets = train.targets(idx);
            const double batch_loss = loss(fp.F, targets);
            if (!std::isfinite(batch_loss)) throw NumericError("non-finite training loss at step " + std::to_string(step));
            const NetworkParams grads = backward(net, fp, targets);
            sgd_step(net, grads, adam, cfg.lr);
            net.mode = Mode::eval;
            if (step % cfg.eval_every == 0 || step == cfg.steps) record(step);
        }
    } catch (const DomainError& e) {
        throw NumericError("non-finite values at step " + std::to_string(step) + ": " + e.what());
    }
    out.last = {net, strategy};
    return out;
}

} // namespace milpool
