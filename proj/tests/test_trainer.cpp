// Training loop, run log and checkpoint-level determinism.

#include <milpool/checkpoint.hpp>
#include <milpool/synthetic.hpp>
#include <milpool/trainer.hpp>

#include <gtest/gtest.h>

#include <sstream>

using namespace milpool;

namespace {

struct SmallTask {
    Dataset train, eval;
};

SmallTask small_task(std::uint64_t seed = 1) {
    SyntheticSpec s;
    s.num_classes = 3;
    s.feature_dim = 6;
    s.instances_per_bag = 5;
    s.bags_per_class = {40, 40, 40};
    s.separation = 4.0;
    s.seed = seed;
    auto parts = split(generate_synthetic(s).dataset, 0.75, 0.25, Rng(seed).derive(Stream::split));
    return {std::move(parts.train), std::move(parts.eval)};
}

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.hidden = {12, 12};
    c.steps = 150;
    c.batch_size = 12;
    c.eval_every = 50;
    c.lr = 3e-3;
    c.seed = 4;
    return c;
}

std::string log_text(const RunLog& log) {
    std::ostringstream out;
    log.write(out, false);
    return out.str();
}

} // namespace

TEST(Train, IdenticalSeedsGiveIdenticalCheckpointsAndLogs) {
    const SmallTask t = small_task();
    for (PoolingKind kind : {PoolingKind::attention, PoolingKind::collective, PoolingKind::max}) {
        ExperimentConfig c = small_config();
        c.pooling = kind;
        const TrainOutcome a = train_model(c, t.train, t.eval);
        const TrainOutcome b = train_model(c, t.train, t.eval);
        EXPECT_EQ(encode_checkpoint(a.best), encode_checkpoint(b.best));
        EXPECT_EQ(encode_checkpoint(a.last), encode_checkpoint(b.last));
        EXPECT_EQ(log_text(a.log), log_text(b.log));
    }
}

TEST(Train, DifferentSeedsDiverge) {
    const SmallTask t = small_task();
    ExperimentConfig c = small_config();
    const TrainOutcome a = train_model(c, t.train, t.eval);
    c.seed = 5;
    EXPECT_NE(encode_checkpoint(train_model(c, t.train, t.eval).last), encode_checkpoint(a.last));
}

TEST(Train, ZeroStepsRecordsInitialStateOnly) {
    const SmallTask t = small_task();
    ExperimentConfig c = small_config();
    c.steps = 0;
    const TrainOutcome out = train_model(c, t.train, t.eval);
    ASSERT_EQ(out.log.records.size(), 1u);
    EXPECT_EQ(out.log.records[0].step, 0u);
    EXPECT_EQ(out.best.network, out.last.network);
    Rng init = Rng(c.seed).derive(Stream::init);
    EXPECT_EQ(out.last.network.params,
              init_network({6, 3, c.hidden, c.dropout, c.phi}, init).params);
}

TEST(Train, LossFallsAndRankingImproves) {
    const SmallTask t = small_task();
    ExperimentConfig c = small_config();
    c.steps = 300;
    const TrainOutcome out = train_model(c, t.train, t.eval);
    EXPECT_LT(out.log.records.back().train_loss, out.log.records.front().train_loss);
    EXPECT_GT(out.log.best_map, 0.8);
    EXPECT_GE(out.log.best_map, out.log.records.front().map);
}

TEST(Train, RecordsAtCadenceAndFinalStep) {
    const SmallTask t = small_task();
    ExperimentConfig c = small_config();
    c.steps = 120;
    const TrainOutcome out = train_model(c, t.train, t.eval);
    std::vector<std::size_t> steps;
    for (const auto& r : out.log.records) steps.push_back(r.step);
    EXPECT_EQ(steps, (std::vector<std::size_t>{0, 50, 100, 120}));
}

TEST(Train, BestCheckpointReproducesLoggedMap) {
    const SmallTask t = small_task();
    const TrainOutcome out = train_model(small_config(), t.train, t.eval);
    EXPECT_EQ(evaluate_model(out.best.network, out.best.strategy, t.eval).macro.ap, out.log.best_map);
    EXPECT_EQ(out.best_report.macro.ap, out.log.best_map);
}

TEST(Train, EmptyEvalSetScoresTrainSet) {
    const SmallTask t = small_task();
    ExperimentConfig c = small_config();
    c.steps = 10;
    const Dataset none{{}, t.train.num_classes, t.train.feature_dim};
    const TrainOutcome out = train_model(c, t.train, none);
    EXPECT_EQ(out.best_report, evaluate_model(out.best.network, out.best.strategy, t.train));
}

TEST(Train, BalancingChangesOnlyTheSampler) {
    const SmallTask t = small_task();
    ExperimentConfig c = small_config();
    c.steps = 0;
    const TrainOutcome on = train_model(c, t.train, t.eval);
    c.balanced = false;
    const TrainOutcome off = train_model(c, t.train, t.eval);
    EXPECT_EQ(on.last.network, off.last.network);
}

TEST(Train, InvalidInputsAreConfigErrors) {
    const SmallTask t = small_task();
    ExperimentConfig c = small_config();
    c.batch_size = 0;
    EXPECT_THROW(train_model(c, t.train, t.eval), ConfigError);
    c = small_config();
    const Dataset none{{}, 3, 6};
    EXPECT_THROW(train_model(c, none, t.eval), ConfigError);
    Dataset wrong = t.eval;
    wrong.num_classes = 4;
    for (auto& b : wrong.bags) b.label.push_back(0);
    EXPECT_THROW(train_model(c, t.train, wrong), ConfigError);
}

TEST(Train, HugeLearningRateKeepsLossFinite) {
    // A huge step saturates the sigmoid; the clamped loss must stay finite.
    const SmallTask t = small_task();
    ExperimentConfig c = small_config();
    c.lr = 10.0;
    c.steps = 30;
    const TrainOutcome out = train_model(c, t.train, t.eval);
    for (const auto& r : out.log.records) EXPECT_TRUE(std::isfinite(r.train_loss));
}

TEST(RunLog, SchemaAndWallTimeSwitch) {
    const SmallTask t = small_task();
    ExperimentConfig c = small_config();
    c.steps = 50;
    const TrainOutcome out = train_model(c, t.train, t.eval);
    std::stringstream with, without;
    out.log.write(with, true);
    out.log.write(without, false);
    const auto m = kv::parse(without);
    EXPECT_EQ(m.at("format"), "milpool-runlog");
    EXPECT_EQ(m.at("config.strategy"), "attention");
    EXPECT_EQ(m.at("records"), "2");
    EXPECT_EQ(m.at("record.1.step"), "50");
    EXPECT_EQ(m.count("record.0.wall_seconds"), 0u);
    EXPECT_EQ(kv::parse(with).count("record.0.wall_seconds"), 1u);
    EXPECT_EQ(std::stod(m.at("best.map")), out.log.best_map);
}

TEST(Predict, ChunkingDoesNotChangeScores) {
    const SmallTask t = small_task();
    ExperimentConfig c = small_config();
    c.steps = 20;
    const TrainOutcome out = train_model(c, t.train, t.eval);
    const auto idx = all_indices(t.eval);
    EXPECT_EQ(predict(out.last.network, out.last.strategy, t.eval, idx, 7),
              predict(out.last.network, out.last.strategy, t.eval, idx, 1000));
}

TEST(PoolingKind, ParseAndName) {
    for (auto k : {PoolingKind::collective, PoolingKind::max, PoolingKind::attention})
        EXPECT_EQ(parse_pooling(to_string(k)), k);
    EXPECT_FALSE(parse_pooling("mean").has_value());
}
