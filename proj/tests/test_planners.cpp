#include <gtest/gtest.h>

#include <map>

#include "mpt/bench.hpp"
#include "mpt/rrt_star.hpp"
#include "mpt/sst.hpp"
#include "mpt/worldgen.hpp"

using namespace mpt;

namespace {

termination_spec term_of(double time_limit, double threshold, double mult = 1.0) {
    termination_spec t;
    t.time_limit_s = time_limit;
    t.cost_threshold_m = threshold;
    t.threshold_multiplier = mult;
    return t;
}

void check_tree_costs(const tree_snapshot& snap, bool kinodynamic) {
    for (size_t i = 0; i < snap.nodes.size(); ++i) {
        const auto& n = snap.nodes[i];
        if (n.parent < 0) {
            EXPECT_DOUBLE_EQ(n.cost, 0.0);
            continue;
        }
        if (kinodynamic) continue; // edge costs are arc lengths, checked via replay
        const auto& p = snap.nodes[n.parent];
        EXPECT_NEAR(n.cost, p.cost + dist2d(p.state.pos(), n.state.pos()), 1e-9);
    }
}

} // namespace

TEST(RrtStar, EmptyMapConvergesNearOptimal) {
    costmap map(240, 240); // 12 x 12 m, free
    rrt_params params;
    params.max_iterations = 5000;
    params.record_tree = true;
    auto res = rrt_star(map, {1.0, 1.0}, {10.0, 1.0}, sampler_region::full_map(),
                        term_of(120.0, 9.0, 1.0), 42, params);
    // stops only at the unreachable exact optimum, so all 5000 iterations run
    ASSERT_FALSE(res.path.empty());
    EXPECT_GE(res.cost, 9.0);
    EXPECT_LE(res.cost, 9.0 * 1.05);
    check_tree_costs(*res.snapshot, false);
}

TEST(RrtStar, SeedDeterminism) {
    auto map = gen_forest(240, 240, 20, 321);
    rng pr(1);
    const auto [start, goal] = sample_problem(map, pr);
    const auto term = term_of(30.0, 20.0, 1.0); // generous threshold -> first solution stops it
    auto a = rrt_star(map, start, goal, sampler_region::full_map(), term, 7);
    auto b = rrt_star(map, start, goal, sampler_region::full_map(), term, 7);
    EXPECT_EQ(a.success, b.success);
    EXPECT_EQ(a.vertices, b.vertices);
    EXPECT_DOUBLE_EQ(a.cost, b.cost);
    ASSERT_EQ(a.path.size(), b.path.size());
    for (size_t i = 0; i < a.path.size(); ++i) {
        EXPECT_DOUBLE_EQ(a.path[i].x, b.path[i].x);
        EXPECT_DOUBLE_EQ(a.path[i].y, b.path[i].y);
    }
}

TEST(RrtStar, AllTrueMaskReplaysFullSampler) {
    auto map = gen_forest(200, 200, 15, 99);
    mask_grid all_true;
    all_true.height = map.height;
    all_true.width = map.width;
    all_true.bits.assign(map.occ.size(), 1);
    const auto term = term_of(20.0, 1e9, 1.0);
    rrt_params params;
    params.max_iterations = 800;
    auto full = rrt_star(map, {1.0, 1.0}, {9.0, 9.0}, sampler_region::full_map(), term, 5, params);
    auto masked = rrt_star(map, {1.0, 1.0}, {9.0, 9.0}, sampler_region::with_mask(all_true), term, 5,
                           params);
    EXPECT_EQ(full.vertices, masked.vertices);
    EXPECT_DOUBLE_EQ(full.cost, masked.cost);
}

TEST(RrtStar, BlockedMapFailsAtTimeLimit) {
    costmap map(100, 100);
    for (int r = 0; r < 100; ++r) map.at(r, 50) = 1; // full bisecting wall
    auto res = rrt_star(map, {1.0, 2.5}, {4.0, 2.5}, sampler_region::full_map(),
                        term_of(0.3, 100.0, 1.0), 3);
    EXPECT_FALSE(res.success);
    EXPECT_EQ(res.failure_reason, "time limit reached");
    EXPECT_GT(res.time_s, 0.29);
}

TEST(RrtStar, CollidingEndpointsAreInputErrors) {
    costmap map(100, 100);
    map.at(10, 10) = 1;
    EXPECT_THROW(rrt_star(map, {0.525, 0.525}, {4.0, 4.0}, sampler_region::full_map(),
                          term_of(1, 10), 0),
                 plan_input_error);
    EXPECT_THROW(rrt_star(map, {4.0, 4.0}, {0.525, 0.525}, sampler_region::full_map(),
                          term_of(1, 10), 0),
                 plan_input_error);
}

TEST(RrtStar, IncumbentSequenceNonIncreasing) {
    auto map = gen_forest(240, 240, 20, 1234);
    rrt_params params;
    params.max_iterations = 4000;
    auto res = rrt_star(map, {1.0, 1.0}, {10.0, 10.0}, sampler_region::full_map(),
                        term_of(30.0, 0.1, 1.0), 11, params);
    ASSERT_GE(res.incumbent_costs.size(), 1u);
    for (size_t i = 1; i < res.incumbent_costs.size(); ++i)
        EXPECT_LT(res.incumbent_costs[i], res.incumbent_costs[i - 1]);
}

TEST(RrtStar, MaskedNodesStayInsideRegion) {
    auto map = gen_forest(240, 240, 20, 777);
    const point2 start{1.0, 1.0}, goal{10.0, 10.0};
    auto oracle = rrt_star(map, start, goal, sampler_region::full_map(), term_of(20.0, 1e9), 13);
    ASSERT_TRUE(oracle.success);
    dataset_record rec;
    rec.start = start;
    rec.goal = goal;
    rec.path = oracle.path;
    const mask_grid mask = oracle_mask(rec, map, model_config::defaults());
    rrt_params params;
    params.record_tree = true;
    auto res = rrt_star(map, start, goal, sampler_region::with_mask(mask),
                        term_of(20.0, oracle.cost, 1.1), 29, params);
    ASSERT_TRUE(res.snapshot.has_value());
    for (const auto& n : res.snapshot->nodes)
        EXPECT_TRUE(mask.contains(n.state.pos(), map.resolution));
    // success paths stay collision-free on the original map
    if (res.success)
        for (size_t i = 0; i + 1 < res.path.size(); ++i)
            EXPECT_TRUE(is_motion_free(map, res.path[i].pos(), res.path[i + 1].pos()));
}

TEST(RrtStar, EmptyMaskIsPlannerFailure) {
    costmap map(100, 100);
    mask_grid empty;
    empty.height = 100;
    empty.width = 100;
    empty.bits.assign(100 * 100, 0);
    auto res = rrt_star(map, {1.0, 1.0}, {4.0, 4.0}, sampler_region::with_mask(empty),
                        term_of(1.0, 10.0), 0);
    EXPECT_FALSE(res.success);
    EXPECT_EQ(res.failure_reason, "empty proposal");
}

TEST(Informed, DegenerateEllipseCollapsesToSegment) {
    const point2 s{1.0, 2.0}, g{7.0, 5.0};
    informed_spec ell{s, g, dist2d(s, g)};
    rng r(17);
    for (int i = 0; i < 200; ++i) {
        const point2 p = ell.draw(r);
        // point-to-segment distance
        const double vx = g.x - s.x, vy = g.y - s.y;
        const double t = std::clamp(((p.x - s.x) * vx + (p.y - s.y) * vy) / (vx * vx + vy * vy), 0.0, 1.0);
        const double d = std::hypot(p.x - (s.x + t * vx), p.y - (s.y + t * vy));
        EXPECT_LT(d, 1e-9);
    }
}

TEST(Informed, SamplesSatisfyEllipseInequality) {
    const point2 s{1.0, 1.0}, g{9.0, 6.0};
    informed_spec ell{s, g, dist2d(s, g) * 1.3};
    rng r(23);
    for (int i = 0; i < 5000; ++i) {
        const point2 p = ell.draw(r);
        EXPECT_LE(dist2d(p, s) + dist2d(p, g), ell.c_best + 1e-9);
    }
}

TEST(Informed, PostSolutionSamplesRecordedAndContained) {
    auto map = gen_forest(240, 240, 15, 888);
    rrt_params params;
    params.record_samples = true;
    params.max_iterations = 3000;
    auto res = informed_rrt_star(map, {1.0, 1.0}, {10.0, 10.0}, sampler_region::full_map(),
                                 term_of(30.0, 0.1, 1.0), 31, params);
    ASSERT_GT(res.informed_samples.size(), 0u);
    for (const auto& [p, c_best] : res.informed_samples)
        EXPECT_LE(dist2d(p, {1.0, 1.0}) + dist2d(p, {10.0, 10.0}), c_best + 1e-9);
}

TEST(Sst, StraightLineIntegration) {
    robot_model robot;
    robot.kind = robot_model::dubins;
    se2_state s{0, 0, 0};
    for (int i = 0; i < 20; ++i) s = dubins_step(s, 1.0, 0.0, robot); // 1 s at v=1
    EXPECT_NEAR(s.x, 1.0, 1e-6);
    EXPECT_NEAR(s.y, 0.0, 1e-6);
    EXPECT_NEAR(s.theta, 0.0, 1e-6);
}

TEST(Sst, FindsSolutionAndReplaysExactly) {
    costmap map(240, 240);
    robot_model robot;
    robot.kind = robot_model::dubins;
    sst_params params;
    params.record_tree = true;
    auto res = sst(map, robot, {2.0, 2.0}, {8.0, 8.0}, sampler_region::full_map(),
                   term_of(30.0, 1e9, 1.0), 71, params);
    ASSERT_TRUE(res.success) << res.failure_reason;
    ASSERT_GE(res.path.size(), 2u);
    ASSERT_EQ(res.controls.size(), res.path.size() - 1);
    EXPECT_LE(dist2d(res.path.back().pos(), {8.0, 8.0}), params.goal_region_m);

    // replay the stored controls from the start state
    const auto replay = rollout_controls(res.path.front(), res.controls, robot);
    ASSERT_EQ(replay.size(), res.path.size());
    for (size_t i = 0; i < replay.size(); ++i) {
        EXPECT_NEAR(replay[i].x, res.path[i].x, 1e-6);
        EXPECT_NEAR(replay[i].y, res.path[i].y, 1e-6);
        EXPECT_NEAR(replay[i].theta, res.path[i].theta, 1e-6);
    }

    // cost equals the integrated arc length of the replayed trajectory
    double arc = 0.0;
    se2_state cur = res.path.front();
    for (const auto& c : res.controls)
        for (int k = 0; k < c.steps; ++k) {
            const auto nxt = dubins_step(cur, c.v, c.steer, robot);
            arc += std::hypot(nxt.x - cur.x, nxt.y - cur.y);
            cur = nxt;
        }
    EXPECT_NEAR(arc, res.cost, 1e-9);
}

TEST(Sst, WitnessInvariantHolds) {
    auto map = gen_forest(200, 200, 10, 2024);
    robot_model robot;
    robot.kind = robot_model::dubins;
    sst_params params;
    params.record_tree = true;
    auto res = sst(map, robot, {1.5, 1.5}, {8.0, 8.0}, sampler_region::full_map(),
                   term_of(10.0, 1e9, 1.0), 5, params);
    ASSERT_TRUE(res.snapshot.has_value());
    const auto& snap = *res.snapshot;

    // every witness endorses an alive, active node; witnesses are delta_s-sparse
    std::map<int32_t, int> rep_count;
    for (size_t w = 0; w < snap.witnesses.size(); ++w) {
        const int32_t rep = snap.witness_rep[w];
        ASSERT_GE(rep, 0);
        EXPECT_TRUE(snap.alive[rep]);
        EXPECT_TRUE(snap.active[rep]);
        ++rep_count[rep];
        for (size_t w2 = w + 1; w2 < snap.witnesses.size(); ++w2)
            EXPECT_GT(dist2d(snap.witnesses[w], snap.witnesses[w2]), params.delta_s_m * (1 - 1e-9));
    }
    // each active node is the representative of exactly one witness
    for (size_t i = 0; i < snap.nodes.size(); ++i)
        if (snap.alive[i] && snap.active[i]) EXPECT_EQ(rep_count[static_cast<int32_t>(i)], 1) << i;
}

TEST(Sst, RejectsPointRobot) {
    costmap map(100, 100);
    robot_model robot; // point
    EXPECT_THROW(sst(map, robot, {1, 1}, {2, 2}, sampler_region::full_map(), term_of(1, 10), 0),
                 plan_input_error);
}

TEST(MaskedSampler, SinglePixelAndNeverOutside) {
    costmap map(60, 60);
    mask_grid m;
    m.height = m.width = 60;
    m.bits.assign(60 * 60, 0);
    m.bits[17 * 60 + 23] = 1;
    rng r(4);
    for (int i = 0; i < 100; ++i) {
        const point2 p = masked_sampler(map, m, r);
        EXPECT_EQ(map.row_of(p.y), 17);
        EXPECT_EQ(map.col_of(p.x), 23);
    }
    // random sparse mask: samples always land on true pixels
    mask_grid sparse;
    sparse.height = sparse.width = 60;
    sparse.bits.assign(60 * 60, 0);
    rng fill(9);
    for (int i = 0; i < 200; ++i) sparse.bits[fill.uniform_int(60 * 60)] = 1;
    region_sampler sampler(map, sampler_region::with_mask(sparse));
    for (int i = 0; i < 5000; ++i) {
        const point2 p = sampler.draw(r);
        EXPECT_TRUE(sparse.test(map.row_of(p.y), map.col_of(p.x)));
    }
}

TEST(MaskedSampler, AllTrueMaskIsUniformChiSquare) {
    costmap map(16, 16);
    mask_grid m;
    m.height = m.width = 16;
    m.bits.assign(16 * 16, 1);
    rng r(1912);
    std::vector<int64_t> bins(16, 0); // 4x4 coarsening
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const point2 p = masked_sampler(map, m, r);
        const int br = std::min(3, static_cast<int>(p.y / (4 * map.resolution)));
        const int bc = std::min(3, static_cast<int>(p.x / (4 * map.resolution)));
        ++bins[br * 4 + bc];
    }
    const double expected = static_cast<double>(n) / 16.0;
    double stat = 0;
    for (int64_t b : bins) stat += (b - expected) * (b - expected) / expected;
    // chi-square, 15 dof: p > 0.01 iff stat < 30.578
    EXPECT_LT(stat, 30.578);
}
