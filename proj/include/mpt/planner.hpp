#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mpt/costmap.hpp"
#include "mpt/errors.hpp"
#include "mpt/model.hpp"
#include "mpt/rng.hpp"

namespace mpt {

struct robot_model {
    enum kind_t { point, dubins } kind = point;
    // Dubins car: wheel velocity and steering angle inputs, Euler integration.
    double wheelbase_m = 0.3;
    double v_max = 1.0;
    double steer_max_rad = 0.6;
    double dt_s = 0.05;
};

struct se2_state {
    double x = 0.0, y = 0.0, theta = 0.0;
    point2 pos() const { return {x, y}; }
};

struct control_segment {
    double v = 0.0;
    double steer = 0.0;
    int steps = 0; // duration = steps * dt
};

struct plan_node {
    se2_state state;
    int32_t parent = -1;
    double cost = 0.0; // cost-to-come
    control_segment ctrl{};
};

struct termination_spec {
    double time_limit_s = 10.0;
    double cost_threshold_m = std::numeric_limits<double>::infinity();
    double threshold_multiplier = 1.0;

    double effective_threshold() const { return cost_threshold_m * threshold_multiplier; }
};

struct tree_snapshot {
    std::vector<plan_node> nodes;
    std::vector<uint8_t> alive;       // false once pruned (SST)
    std::vector<uint8_t> active;      // witness representatives (SST)
    std::vector<point2> witnesses;    // SST witness positions
    std::vector<int32_t> witness_rep; // node id each witness endorses
};

struct plan_result {
    bool success = false;
    std::vector<se2_state> path;
    std::vector<control_segment> controls; // kinodynamic plans only
    double cost = std::numeric_limits<double>::infinity();
    int64_t vertices = 0;
    double time_s = 0.0;
    std::string failure_reason;
    std::vector<double> incumbent_costs; // appended whenever the incumbent improves
    std::vector<std::pair<point2, double>> informed_samples; // (sample, c_best at draw)
    std::optional<tree_snapshot> snapshot;
};

// Where the planner is allowed to place tree nodes and draw samples from.
// Collision checking always runs against the original map regardless.
struct sampler_region {
    enum kind_t { full, masked } kind = full;
    const mask_grid* mask = nullptr;

    static sampler_region full_map() { return {}; }
    static sampler_region with_mask(const mask_grid& m) {
        sampler_region r;
        r.kind = masked;
        r.mask = &m;
        return r;
    }

    bool contains(const costmap& map, const point2& p) const {
        if (kind == full)
            return map.in_bounds(map.row_of(p.y), map.col_of(p.x));
        return mask->contains(p, map.resolution);
    }
};

// Uniform sampling over the allowed pixels: draw a pixel index, then jitter
// inside it. The full-map variant uses the identical draw pattern over all
// pixels, so an all-true mask replays the exact same stream.
class region_sampler {
public:
    region_sampler(const costmap& map, const sampler_region& region) : map_(map), region_(region) {
        if (region.kind == sampler_region::masked) {
            const auto& m = *region.mask;
            for (int64_t i = 0; i < static_cast<int64_t>(m.bits.size()); ++i)
                if (m.bits[i]) mask_pixels_.push_back(i);
            if (mask_pixels_.empty()) throw sampling_error("empty proposal");
        }
    }

    point2 draw(rng& r) const {
        int64_t pixel;
        int64_t width;
        if (region_.kind == sampler_region::masked) {
            pixel = mask_pixels_[r.uniform_int(static_cast<int64_t>(mask_pixels_.size()))];
            width = region_.mask->width;
        } else {
            pixel = r.uniform_int(static_cast<int64_t>(map_.width) * map_.height);
            width = map_.width;
        }
        const int64_t row = pixel / width, col = pixel % width;
        const double u = r.uniform(), v = r.uniform();
        return {(col + u) * map_.resolution, (row + v) * map_.resolution};
    }

private:
    const costmap& map_;
    sampler_region region_;
    std::vector<int64_t> mask_pixels_;
};

// Single draw from a mask (convenience wrapper over region_sampler).
inline point2 masked_sampler(const costmap& map, const mask_grid& mask, rng& r) {
    region_sampler s(map, sampler_region::with_mask(mask));
    return s.draw(r);
}

// Prolate hyperspheroid with foci start/goal, transverse diameter c_best.
struct informed_spec {
    point2 start, goal;
    double c_best = std::numeric_limits<double>::infinity();

    // Uniform sample of the ellipse via unit-disk scaling and rotation.
    point2 draw(rng& r) const {
        const double c_min = dist2d(start, goal);
        const double a = c_best / 2.0;
        const double bsq = std::max(0.0, c_best * c_best - c_min * c_min);
        const double b = std::sqrt(bsq) / 2.0;
        const double u1 = r.uniform(), u2 = r.uniform();
        const double rad = std::sqrt(u1);
        const double phi = 2.0 * 3.141592653589793 * u2;
        const double ex = rad * std::cos(phi) * a;
        const double ey = rad * std::sin(phi) * b;
        const double theta = std::atan2(goal.y - start.y, goal.x - start.x);
        const double cx = (start.x + goal.x) / 2.0, cy = (start.y + goal.y) / 2.0;
        return {cx + ex * std::cos(theta) - ey * std::sin(theta),
                cy + ex * std::sin(theta) + ey * std::cos(theta)};
    }

    bool contains(const point2& p) const {
        return dist2d(p, start) + dist2d(p, goal) <= c_best + 1e-9;
    }
};

namespace detail {

// Uniform hash grid over 2-d points. Insertion order defines ids; all
// queries break ties by lower id, so results are reproducible.
class point_grid {
public:
    explicit point_grid(double cell) : cell_(cell) {}

    int32_t size() const { return static_cast<int32_t>(pts_.size()); }

    int32_t insert(const point2& p) {
        const int32_t id = size();
        pts_.push_back(p);
        cells_[key_of(p)].push_back(id);
        return id;
    }

    const point2& point(int32_t id) const { return pts_[id]; }

    // Nearest accepted point by expanding cell rings. `accept` filters ids
    // (dead/inactive nodes); returns -1 when nothing qualifies.
    template <class Accept>
    int32_t nearest(const point2& q, Accept accept) const {
        if (pts_.empty()) return -1;
        const int64_t qx = coord(q.x), qy = coord(q.y);
        int32_t best = -1;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (int64_t ring = 0;; ++ring) {
            bool any_cell = false;
            for (int64_t dy = -ring; dy <= ring; ++dy)
                for (int64_t dx = -ring; dx <= ring; ++dx) {
                    if (std::max(std::abs(dx), std::abs(dy)) != ring) continue;
                    auto it = cells_.find(pack(qx + dx, qy + dy));
                    if (it == cells_.end()) continue;
                    any_cell = true;
                    for (int32_t id : it->second) {
                        if (!accept(id)) continue;
                        const double d2 = sq(pts_[id].x - q.x) + sq(pts_[id].y - q.y);
                        if (d2 < best_d2) {
                            best_d2 = d2;
                            best = id;
                        }
                    }
                }
            // Any point in ring r+1 is at least r*cell away from q.
            if (best >= 0 && best_d2 <= sq(static_cast<double>(ring) * cell_)) return best;
            if (ring > max_ring_) {
                (void)any_cell;
                return best;
            }
        }
    }

    template <class Accept>
    void near(const point2& q, double radius, Accept accept, std::vector<int32_t>& out) const {
        out.clear();
        const int64_t qx = coord(q.x), qy = coord(q.y);
        const int64_t span = static_cast<int64_t>(std::ceil(radius / cell_)) + 1;
        const double r2 = radius * radius;
        for (int64_t dy = -span; dy <= span; ++dy)
            for (int64_t dx = -span; dx <= span; ++dx) {
                auto it = cells_.find(pack(qx + dx, qy + dy));
                if (it == cells_.end()) continue;
                for (int32_t id : it->second) {
                    if (!accept(id)) continue;
                    if (sq(pts_[id].x - q.x) + sq(pts_[id].y - q.y) <= r2) out.push_back(id);
                }
            }
        std::sort(out.begin(), out.end());
    }

    void set_max_ring(int64_t m) { max_ring_ = m; }

private:
    static double sq(double v) { return v * v; }
    int64_t coord(double v) const { return static_cast<int64_t>(std::floor(v / cell_)); }
    static uint64_t pack(int64_t x, int64_t y) {
        return (static_cast<uint64_t>(static_cast<uint32_t>(x + 0x40000)) << 32) |
               static_cast<uint32_t>(y + 0x40000);
    }
    uint64_t key_of(const point2& p) const { return pack(coord(p.x), coord(p.y)); }

    double cell_;
    int64_t max_ring_ = 4096;
    std::vector<point2> pts_;
    std::unordered_map<uint64_t, std::vector<int32_t>> cells_;
};

class stopwatch {
public:
    stopwatch() : t0_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    std::chrono::steady_clock::time_point t0_;
};

} // namespace detail

} // namespace mpt
