#pragma once

#include "mpt/planner.hpp"

namespace mpt {

struct sst_params {
    double delta_bn_m = 0.5;   // best-near selection radius
    double delta_s_m = 0.25;   // witness spacing
    double goal_region_m = 0.5;
    double goal_bias = 0.05;
    int min_steps = 10;        // propagation duration 0.5 s .. 2.5 s at dt 0.05
    int max_steps = 50;
    int64_t max_iterations = 0;
    bool record_tree = false;
};

// One Euler step of the Dubins car.
inline se2_state dubins_step(const se2_state& s, double v, double steer, const robot_model& robot) {
    se2_state n;
    n.x = s.x + v * std::cos(s.theta) * robot.dt_s;
    n.y = s.y + v * std::sin(s.theta) * robot.dt_s;
    n.theta = s.theta + v / robot.wheelbase_m * std::tan(steer) * robot.dt_s;
    if (n.theta > 3.141592653589793) n.theta -= 2 * 3.141592653589793;
    if (n.theta < -3.141592653589793) n.theta += 2 * 3.141592653589793;
    return n;
}

// Replays a control sequence from a start state; the same integrator the
// planner uses, so stored trajectories reproduce exactly.
inline std::vector<se2_state> rollout_controls(const se2_state& start,
                                               const std::vector<control_segment>& controls,
                                               const robot_model& robot) {
    std::vector<se2_state> states{start};
    se2_state s = start;
    for (const auto& c : controls) {
        for (int i = 0; i < c.steps; ++i) s = dubins_step(s, c.v, c.steer, robot);
        states.push_back(s);
    }
    return states;
}

// Stable Sparse RRT for the Dubins car. Samples a state, picks the
// cheapest node within delta_bn (else nearest), propagates a random control,
// and keeps the node only when it improves on its local witness; displaced
// representatives are pruned once they become leaves. Cost is trajectory arc
// length, so the same threshold semantics apply as for the point robot.
inline plan_result sst(const costmap& map, const robot_model& robot, const point2& start,
                       const point2& goal, const sampler_region& region, const termination_spec& term,
                       uint64_t seed, const sst_params& params = {}) {
    if (robot.kind != robot_model::dubins) throw plan_input_error("sst requires the dubins robot model");
    if (!is_state_free(map, start)) throw plan_input_error("start state is in collision");
    if (!is_state_free(map, goal)) throw plan_input_error("goal state is in collision");

    plan_result res;
    detail::stopwatch clock;
    rng r(seed);
    std::optional<region_sampler> sampler_storage;
    try {
        sampler_storage.emplace(map, region);
    } catch (const sampling_error&) {
        res.failure_reason = "empty proposal";
        res.time_s = clock.seconds();
        return res;
    }
    region_sampler& sampler = *sampler_storage;
    if (region.kind == sampler_region::masked &&
        (!region.contains(map, start) || !region.contains(map, goal))) {
        res.failure_reason = "proposal excludes start or goal";
        res.time_s = clock.seconds();
        return res;
    }

    std::vector<plan_node> nodes;
    std::vector<uint8_t> alive, active;
    std::vector<int32_t> n_children;
    detail::point_grid node_grid(params.delta_bn_m);
    node_grid.set_max_ring(
        static_cast<int64_t>(std::max(map.width_m(), map.height_m()) / params.delta_bn_m) + 2);
    detail::point_grid witness_grid(params.delta_s_m);
    std::vector<int32_t> witness_rep;

    nodes.push_back({{start.x, start.y, 0.0}, -1, 0.0, {}});
    alive.push_back(1);
    active.push_back(1);
    n_children.push_back(0);
    node_grid.insert(start);
    witness_grid.insert(start);
    witness_rep.push_back(0);
    int64_t live_nodes = 1;

    int32_t best_goal = -1;
    double incumbent = std::numeric_limits<double>::infinity();

    auto selectable = [&](int32_t id) { return alive[id] && active[id]; };
    std::vector<int32_t> near_ids;
    std::string stop_reason = "time limit reached";
    int64_t iterations = 0;

    while (true) {
        if (best_goal >= 0 && incumbent <= term.effective_threshold()) {
            stop_reason.clear();
            break;
        }
        if (clock.seconds() >= term.time_limit_s) break;
        if (params.max_iterations > 0 && iterations >= params.max_iterations) {
            stop_reason = "iteration cap reached";
            break;
        }
        ++iterations;

        // Sample a position from the region; selection and witness distances
        // ignore heading, so only the position matters here.
        point2 sample_pos = r.uniform() < params.goal_bias ? goal : sampler.draw(r);

        // Best-near selection on position distance.
        node_grid.near(sample_pos, params.delta_bn_m, selectable, near_ids);
        int32_t sel = -1;
        if (!near_ids.empty()) {
            double best_cost = std::numeric_limits<double>::infinity();
            for (int32_t id : near_ids)
                if (nodes[id].cost < best_cost) {
                    best_cost = nodes[id].cost;
                    sel = id;
                }
        } else {
            sel = node_grid.nearest(sample_pos, selectable);
        }
        if (sel < 0) continue;

        // Random control, Euler integration with per-step collision checks.
        control_segment ctrl;
        ctrl.v = r.uniform(0.0, robot.v_max);
        ctrl.steer = r.uniform(-robot.steer_max_rad, robot.steer_max_rad);
        ctrl.steps = params.min_steps +
                     static_cast<int>(r.uniform_int(params.max_steps - params.min_steps + 1));
        se2_state state = nodes[sel].state;
        double arc = 0.0;
        bool collided = false;
        for (int i = 0; i < ctrl.steps; ++i) {
            const se2_state next = dubins_step(state, ctrl.v, ctrl.steer, robot);
            if (!is_state_free(map, next.pos())) {
                collided = true;
                break;
            }
            arc += std::hypot(next.x - state.x, next.y - state.y);
            state = next;
        }
        if (collided) continue;
        if (!region.contains(map, state.pos())) continue;
        const double new_cost = nodes[sel].cost + arc;

        // Witness test within delta_s.
        witness_grid.near(state.pos(), params.delta_s_m, [](int32_t) { return true; }, near_ids);
        int32_t witness = -1;
        double wd_best = std::numeric_limits<double>::infinity();
        for (int32_t id : near_ids) {
            const double d = dist2d(witness_grid.point(id), state.pos());
            if (d < wd_best) {
                wd_best = d;
                witness = id;
            }
        }
        int32_t displaced = -1;
        if (witness < 0) {
            witness = witness_grid.insert(state.pos());
            witness_rep.push_back(-1);
        } else {
            const int32_t rep = witness_rep[witness];
            if (rep >= 0 && nodes[rep].cost <= new_cost) continue; // dominated
            displaced = rep;
        }

        const int32_t new_id = static_cast<int32_t>(nodes.size());
        nodes.push_back({state, sel, new_cost, ctrl});
        alive.push_back(1);
        active.push_back(1);
        n_children.push_back(0);
        ++n_children[sel];
        ++live_nodes;
        node_grid.insert(state.pos());
        witness_rep[witness] = new_id;

        if (displaced >= 0) {
            active[displaced] = 0;
            // Prune inactive leaves; walk up while parents empty out.
            int32_t n = displaced;
            while (n > 0 && alive[n] && !active[n] && n_children[n] == 0) {
                alive[n] = 0;
                --live_nodes;
                const int32_t p = nodes[n].parent;
                --n_children[p];
                n = p;
            }
        }

        if (dist2d(state.pos(), goal) <= params.goal_region_m && new_cost < incumbent) {
            incumbent = new_cost;
            best_goal = new_id;
            res.incumbent_costs.push_back(incumbent);
        }
    }

    res.vertices = live_nodes;
    res.time_s = clock.seconds();
    if (best_goal >= 0) {
        res.cost = nodes[best_goal].cost;
        std::vector<int32_t> chain;
        for (int32_t id = best_goal; id >= 0; id = nodes[id].parent) chain.push_back(id);
        std::reverse(chain.begin(), chain.end());
        for (int32_t id : chain) {
            res.path.push_back(nodes[id].state);
            if (nodes[id].parent >= 0) res.controls.push_back(nodes[id].ctrl);
        }
    }
    res.success = best_goal >= 0 && res.cost <= term.effective_threshold();
    if (!res.success)
        res.failure_reason = best_goal < 0 ? (stop_reason.empty() ? "no solution" : stop_reason)
                                           : "cost threshold not met: " + stop_reason;
    if (params.record_tree) {
        tree_snapshot snap;
        snap.nodes = nodes;
        snap.alive = alive;
        snap.active = active;
        for (int32_t i = 0; i < witness_grid.size(); ++i) snap.witnesses.push_back(witness_grid.point(i));
        snap.witness_rep = witness_rep;
        res.snapshot = std::move(snap);
    }
    return res;
}

} // namespace mpt
