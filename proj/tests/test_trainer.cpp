#include <gtest/gtest.h>

#include <cstring>
#include <set>

#include "mpt/trainer.hpp"
#include "mpt/worldgen.hpp"

using namespace mpt;

namespace {

anchor_grid grid_240() {
    anchor_grid g;
    g.rows = g.cols = 11;
    g.stride_px = 20;
    g.offset_px = 10;
    g.map_h = g.map_w = 240;
    g.crop_h = g.crop_w = 240;
    return g;
}

} // namespace

TEST(LabelAnchors, PathVertexOnAnchorIsPositive) {
    const auto g = grid_240();
    // anchor (0,0) center pixel (10,10) -> (0.525, 0.525) m
    std::vector<se2_state> path{{0.525, 0.525, 0}, {5.0, 0.525, 0}};
    auto labels = label_anchors(path, g, 0.05);
    EXPECT_TRUE(std::find(labels.positive.begin(), labels.positive.end(), 0) != labels.positive.end());
    EXPECT_EQ(labels.positive.size() + labels.negative.size(), 121u);
}

TEST(LabelAnchors, BeyondRadiusIsNegative) {
    const auto g = grid_240();
    // Anchor row 0 sits at y=0.525; a horizontal path 0.71 m below it.
    std::vector<se2_state> path{{0.525, 1.235, 0}, {9.0, 1.235, 0}};
    auto labels = label_anchors(path, g, 0.05);
    for (int64_t t : labels.positive) {
        const auto c = g.anchor_center_m(t, 0.05);
        EXPECT_GT(c.y, 0.6) << "row-0 anchor labeled positive at 0.71 m";
    }
}

TEST(LabelAnchors, StraightPathOnAnchorRowMarksExactlyOneRow) {
    const auto g = grid_240();
    // Path along y = anchor row 5 center: (5*20+10+0.5)*0.05 = 5.525 m.
    // 0.7 m = 14 px < 20 px row spacing, so only that row qualifies.
    std::vector<se2_state> path{{0.3, 5.525, 0}, {11.7, 5.525, 0}};
    auto labels = label_anchors(path, g, 0.05);
    std::set<int64_t> rows;
    for (int64_t t : labels.positive) rows.insert(t / g.cols);
    EXPECT_EQ(rows.size(), 1u);
    EXPECT_TRUE(rows.count(5));
    EXPECT_EQ(labels.positive.size(), 11u); // the full row within the path span
}

TEST(LabelAnchors, EmptyPathThrows) {
    EXPECT_THROW(label_anchors({}, grid_240(), 0.05), labeling_error);
}

TEST(SampleBatch, RatioRule) {
    anchor_labels labels;
    for (int64_t i = 0; i < 10; ++i) labels.positive.push_back(i);
    for (int64_t i = 10; i < 110; ++i) labels.negative.push_back(i);
    rng r(5);
    auto batch = sample_batch(labels, r, 32);
    ASSERT_TRUE(batch.has_value());
    EXPECT_EQ(batch->token_ids.size(), 30u); // 10 pos + 20 neg
    EXPECT_EQ(std::count(batch->targets.begin(), batch->targets.end(), 1), 10);
    EXPECT_EQ(std::count(batch->targets.begin(), batch->targets.end(), 0), 20);
    EXPECT_FALSE(batch->negatives_with_replacement);
}

TEST(SampleBatch, PositiveCap) {
    anchor_labels labels;
    for (int64_t i = 0; i < 50; ++i) labels.positive.push_back(i);
    for (int64_t i = 50; i < 250; ++i) labels.negative.push_back(i);
    rng r(6);
    auto batch = sample_batch(labels, r, 32);
    ASSERT_TRUE(batch.has_value());
    EXPECT_EQ(std::count(batch->targets.begin(), batch->targets.end(), 1), 32);
    EXPECT_EQ(std::count(batch->targets.begin(), batch->targets.end(), 0), 64);
}

TEST(SampleBatch, NoPositivesSignalsSkip) {
    anchor_labels labels;
    for (int64_t i = 0; i < 10; ++i) labels.negative.push_back(i);
    rng r(7);
    EXPECT_FALSE(sample_batch(labels, r, 32).has_value());
}

TEST(SampleBatch, DrawsAreUniqueAndLabelConsistent) {
    anchor_labels labels;
    for (int64_t i = 0; i < 20; ++i) labels.positive.push_back(i);
    for (int64_t i = 20; i < 100; ++i) labels.negative.push_back(i);
    rng r(8);
    for (int trial = 0; trial < 1000; ++trial) {
        auto batch = sample_batch(labels, r, 16);
        ASSERT_TRUE(batch.has_value());
        std::set<int64_t> seen;
        for (size_t i = 0; i < batch->token_ids.size(); ++i) {
            const int64_t id = batch->token_ids[i];
            EXPECT_TRUE(seen.insert(id).second) << "duplicate id " << id;
            EXPECT_EQ(batch->targets[i], id < 20 ? 1 : 0);
        }
        EXPECT_EQ(2 * std::count(batch->targets.begin(), batch->targets.end(), 1),
                  std::count(batch->targets.begin(), batch->targets.end(), 0));
    }
}

TEST(SampleBatch, FewNegativesFlagsReplacement) {
    anchor_labels labels;
    for (int64_t i = 0; i < 8; ++i) labels.positive.push_back(i);
    labels.negative = {100, 101};
    rng r(9);
    auto batch = sample_batch(labels, r, 32);
    ASSERT_TRUE(batch.has_value());
    EXPECT_TRUE(batch->negatives_with_replacement);
    EXPECT_EQ(std::count(batch->targets.begin(), batch->targets.end(), 0), 16);
}

TEST(LrSchedule, ClosedFormAndShape) {
    EXPECT_NEAR(lr_at(3200, 512, 3200), 7.8125e-4, 1e-12);
    // warm-up branch below, decay branch above; the peak sits at the corner
    const double peak = lr_at(3200, 512, 3200);
    for (int64_t s : {1, 100, 1000, 3199, 3201, 10000, 100000})
        EXPECT_LE(lr_at(s, 512, 3200), peak + 1e-15);
    EXPECT_NEAR(lr_at(1, 512, 3200), std::pow(512.0, -0.5) * std::pow(3200.0, -1.5), 1e-15);
    // continuity at the corner
    EXPECT_NEAR(lr_at(3200, 512, 3200),
                std::pow(512.0, -0.5) * 3200.0 * std::pow(3200.0, -1.5), 1e-15);
    EXPECT_THROW(lr_at(0, 512, 3200), training_error);
}

namespace {

training_set tiny_maze_set(int n_maps, int paths_per_map, uint64_t seed) {
    training_set ts;
    for (int m = 0; m < n_maps; ++m) {
        ts.maps.push_back(gen_maze_detailed(5, 5, 26, 6, derive_seed(seed, "maze", m), 160, 160).map);
    }
    rng r(derive_seed(seed, "problems"));
    for (int m = 0; m < n_maps; ++m) {
        for (int p = 0; p < paths_per_map; ++p) {
            auto [s, g] = sample_problem(ts.maps[m], r, 0.2);
            // synthetic two-segment demonstration path (good enough for labels)
            train_problem tp;
            tp.map_index = m;
            tp.start = s;
            tp.goal = g;
            tp.path = {{s.x, s.y, 0}, {(s.x + g.x) / 2, (s.y + g.y) / 2, 0}, {g.x, g.y, 0}};
            ts.problems.push_back(std::move(tp));
        }
    }
    return ts;
}

} // namespace

TEST(Adam, FirstStepMagnitudeIsLr) {
    mpt_model model(model_config::tiny(), 3);
    const auto names = model.param_names();
    std::vector<std::vector<float>> grads;
    for (const auto& n : names) grads.emplace_back(model.param(n).numel(), 0.5f);
    std::vector<float> before = model.param("cls.w").vec();
    adam_state st;
    train_config tc;
    adam_step(model, grads, st, 1e-3, tc);
    const auto& after = model.param("cls.w").vec();
    for (size_t i = 0; i < before.size(); ++i)
        EXPECT_NEAR(before[i] - after[i], 1e-3, 1e-6); // lr * g/(|g|+eps') ~ lr
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    mpt_model model(model_config::tiny(), 4);
    const auto names = model.param_names();
    std::vector<std::vector<float>> grads;
    for (const auto& n : names) grads.emplace_back(model.param(n).numel(), 0.0f);
    std::vector<float> before = model.param("enc.l0.mlp.w1").vec();
    adam_state st;
    train_config tc;
    adam_step(model, grads, st, 1e-3, tc);
    EXPECT_EQ(before, model.param("enc.l0.mlp.w1").vec());
}

TEST(Train, ZeroStepsEqualsInitialization) {
    auto ts = tiny_maze_set(2, 2, 11);
    mpt_model model(model_config::tiny(), 123);
    mpt_model reference(model_config::tiny(), 123);
    train_config tc;
    tc.total_steps = 0;
    tc.seed = 5;
    train(ts, model, tc);
    for (const auto& name : model.param_names())
        ASSERT_EQ(0, std::memcmp(model.param(name).data(), reference.param(name).data(),
                                 sizeof(float) * model.param(name).numel()))
            << name;
}

TEST(Train, DeterministicReplayAcrossThreadCounts) {
    auto make_cfg = [](int threads) {
        train_config tc;
        tc.total_steps = 4;
        tc.problems_per_step = 4;
        tc.seed = 99;
        tc.threads = threads;
        tc.eval_every = 0;
        return tc;
    };
    auto ts = tiny_maze_set(3, 2, 77);
    mpt_model a(model_config::tiny(), 50);
    mpt_model b(model_config::tiny(), 50);
    mpt_model c(model_config::tiny(), 50);
    train(ts, a, make_cfg(1));
    train(ts, b, make_cfg(1));
    train(ts, c, make_cfg(2));
    for (const auto& name : a.param_names()) {
        ASSERT_EQ(0, std::memcmp(a.param(name).data(), b.param(name).data(),
                                 sizeof(float) * a.param(name).numel()))
            << "same-seed replay diverged at " << name;
        ASSERT_EQ(0, std::memcmp(a.param(name).data(), c.param(name).data(),
                                 sizeof(float) * a.param(name).numel()))
            << "thread-count changed result at " << name;
    }
}

TEST(Train, LossDecreasesOnTinyProblem) {
    auto ts = tiny_maze_set(3, 2, 31);
    mpt_model model(model_config::tiny(), 60);
    train_config tc;
    tc.total_steps = 60;
    tc.problems_per_step = 2;
    tc.seed = 13;
    tc.eval_every = 60;
    auto log = train(ts, model, tc);
    ASSERT_GE(log.steps.size(), 20u);
    double early = 0, late = 0;
    for (int i = 0; i < 5; ++i) early += log.steps[i].loss;
    for (size_t i = log.steps.size() - 5; i < log.steps.size(); ++i) late += log.steps[i].loss;
    EXPECT_LT(late, early);
    ASSERT_FALSE(log.train_evals.empty());
}
