#pragma once

#include <numeric>

#include "mpt/planner.hpp"

namespace mpt {

struct rrt_params {
    double eta_m = 1.0;       // steer step; goal connections attempted within this range
    double goal_bias = 0.05;
    int64_t max_iterations = 0; // 0 = no cap, run to threshold/time
    bool informed = false;
    bool record_tree = false;
    bool record_samples = false; // informed samples with their c_best at draw time
};

namespace detail {

// RRT* for the point robot in R^2: sample, nearest, steer, choose-parent
// within the shrinking radius, rewire. The informed variant draws from the
// start/goal ellipse of the incumbent once a first solution exists,
// intersected with the active region.
inline plan_result rrt_star_impl(const costmap& map, const point2& start, const point2& goal,
                                 const sampler_region& region, const termination_spec& term,
                                 uint64_t seed, const rrt_params& params) {
    if (!is_state_free(map, start)) throw plan_input_error("start state is in collision");
    if (!is_state_free(map, goal)) throw plan_input_error("goal state is in collision");

    plan_result res;
    stopwatch clock;
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
        // Masks force the start/goal patches by construction; a mask without
        // them is a degenerate proposal.
        res.failure_reason = "proposal excludes start or goal";
        res.time_s = clock.seconds();
        return res;
    }

    // Rewiring radius r(n) = min(gamma * sqrt(log n / n), eta) with
    // gamma = 2 * sqrt(3 * mu_free / pi) for the 2-d free space measure.
    const double mu_free = map.free_area_m2();
    const double gamma = 2.0 * std::sqrt(3.0 * mu_free / 3.141592653589793);

    std::vector<plan_node> nodes;
    std::vector<std::vector<int32_t>> children;
    point_grid grid(params.eta_m);
    grid.set_max_ring(static_cast<int64_t>(std::max(map.width_m(), map.height_m()) / params.eta_m) + 2);
    nodes.push_back({{start.x, start.y, 0.0}, -1, 0.0, {}});
    children.emplace_back();
    grid.insert(start);

    int32_t goal_id = -1;
    double incumbent = std::numeric_limits<double>::infinity();
    auto note_incumbent = [&]() {
        if (goal_id >= 0 && nodes[goal_id].cost < incumbent) {
            incumbent = nodes[goal_id].cost;
            res.incumbent_costs.push_back(incumbent);
        }
    };

    // Exact cost propagation keeps every stored cost-to-come consistent
    // after a rewire.
    auto propagate = [&](int32_t id) {
        std::vector<int32_t> stack{id};
        while (!stack.empty()) {
            const int32_t n = stack.back();
            stack.pop_back();
            for (int32_t c : children[n]) {
                nodes[c].cost =
                    nodes[n].cost + dist2d(nodes[n].state.pos(), nodes[c].state.pos());
                stack.push_back(c);
            }
        }
    };

    const auto accept_all = [](int32_t) { return true; };
    std::vector<int32_t> near_ids;
    std::string stop_reason = "time limit reached";
    int64_t iterations = 0;

    while (true) {
        if (goal_id >= 0 && incumbent <= term.effective_threshold()) {
            stop_reason.clear();
            break;
        }
        if (clock.seconds() >= term.time_limit_s) break;
        if (params.max_iterations > 0 && iterations >= params.max_iterations) {
            stop_reason = "iteration cap reached";
            break;
        }
        ++iterations;

        // Sample: goal bias, then ellipse (post-solution, informed mode) or region.
        point2 sample;
        if (r.uniform() < params.goal_bias) {
            sample = goal;
        } else if (params.informed && goal_id >= 0) {
            informed_spec ell{start, goal, incumbent};
            bool ok = false;
            for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
                sample = ell.draw(r);
                ok = region.contains(map, sample);
            }
            if (!ok) continue;
            if (params.record_samples) res.informed_samples.emplace_back(sample, incumbent);
        } else {
            sample = sampler.draw(r);
        }

        const int32_t nearest = grid.nearest(sample, accept_all);
        const point2 from = nodes[nearest].state.pos();
        const double d = dist2d(from, sample);
        if (d < 1e-12) continue; // sample coincides with an existing node
        point2 candidate = sample;
        if (d > params.eta_m) {
            candidate = {from.x + (sample.x - from.x) * params.eta_m / d,
                         from.y + (sample.y - from.y) * params.eta_m / d};
        }
        if (!region.contains(map, candidate)) continue;
        if (!is_state_free(map, candidate)) continue;

        const double n_count = static_cast<double>(nodes.size());
        const double radius =
            n_count > 1 ? std::min(gamma * std::sqrt(std::log(n_count) / n_count), params.eta_m)
                        : params.eta_m;
        grid.near(candidate, radius, accept_all, near_ids);
        if (near_ids.empty()) near_ids.push_back(nearest);

        // Choose parent: cheapest collision-free connection among neighbors.
        std::vector<std::pair<double, int32_t>> order;
        order.reserve(near_ids.size());
        for (int32_t id : near_ids)
            order.emplace_back(nodes[id].cost + dist2d(nodes[id].state.pos(), candidate), id);
        std::sort(order.begin(), order.end());
        int32_t parent = -1;
        double cand_cost = 0.0;
        for (const auto& [cost, id] : order) {
            if (is_motion_free(map, nodes[id].state.pos(), candidate)) {
                parent = id;
                cand_cost = cost;
                break;
            }
        }
        if (parent < 0) continue;

        const int32_t new_id = static_cast<int32_t>(nodes.size());
        nodes.push_back({{candidate.x, candidate.y, 0.0}, parent, cand_cost, {}});
        children.emplace_back();
        children[parent].push_back(new_id);
        grid.insert(candidate);

        // Rewire neighbors through the new node when that lowers their cost.
        for (int32_t id : near_ids) {
            if (id == parent) continue;
            const double through = cand_cost + dist2d(candidate, nodes[id].state.pos());
            if (through + 1e-12 < nodes[id].cost &&
                is_motion_free(map, candidate, nodes[id].state.pos())) {
                auto& old_kids = children[nodes[id].parent];
                old_kids.erase(std::find(old_kids.begin(), old_kids.end(), id));
                nodes[id].parent = new_id;
                nodes[id].cost = through;
                children[new_id].push_back(id);
                propagate(id);
            }
        }

        // Goal connection: the goal joins the tree as a regular node and gets
        // reparented like any other from then on.
        const double dg = dist2d(candidate, goal);
        if (dg <= params.eta_m && is_motion_free(map, candidate, goal)) {
            if (goal_id < 0) {
                goal_id = static_cast<int32_t>(nodes.size());
                nodes.push_back({{goal.x, goal.y, 0.0}, new_id, cand_cost + dg, {}});
                children.emplace_back();
                children[new_id].push_back(goal_id);
                grid.insert(goal);
            } else if (cand_cost + dg + 1e-12 < nodes[goal_id].cost) {
                auto& old_kids = children[nodes[goal_id].parent];
                old_kids.erase(std::find(old_kids.begin(), old_kids.end(), goal_id));
                nodes[goal_id].parent = new_id;
                nodes[goal_id].cost = cand_cost + dg;
                children[new_id].push_back(goal_id);
            }
        }
        note_incumbent();
    }

    res.vertices = static_cast<int64_t>(nodes.size());
    res.time_s = clock.seconds();
    if (goal_id >= 0) {
        res.cost = nodes[goal_id].cost;
        for (int32_t id = goal_id; id >= 0; id = nodes[id].parent) res.path.push_back(nodes[id].state);
        std::reverse(res.path.begin(), res.path.end());
    }
    res.success = goal_id >= 0 && res.cost <= term.effective_threshold();
    if (!res.success)
        res.failure_reason = goal_id < 0 ? (stop_reason.empty() ? "no solution" : stop_reason)
                                         : "cost threshold not met: " + stop_reason;
    if (params.record_tree) {
        tree_snapshot snap;
        snap.nodes = nodes;
        snap.alive.assign(nodes.size(), 1);
        snap.active.assign(nodes.size(), 1);
        res.snapshot = std::move(snap);
    }
    return res;
}

} // namespace detail

inline plan_result rrt_star(const costmap& map, const point2& start, const point2& goal,
                            const sampler_region& region, const termination_spec& term, uint64_t seed,
                            rrt_params params = {}) {
    params.informed = false;
    return detail::rrt_star_impl(map, start, goal, region, term, seed, params);
}

inline plan_result informed_rrt_star(const costmap& map, const point2& start, const point2& goal,
                                     const sampler_region& region, const termination_spec& term,
                                     uint64_t seed, rrt_params params = {}) {
    params.informed = true;
    return detail::rrt_star_impl(map, start, goal, region, term, seed, params);
}

} // namespace mpt
