#pragma once

#include <cmath>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "mpt/costmap.hpp"
#include "mpt/errors.hpp"
#include "mpt/rng.hpp"

namespace mpt {

struct obstacle_spec {
    enum kind_t { circle, square } kind = circle;
    point2 center;            // meters
    double radius_m = 0.0;    // circles
    double side_m = 0.0;      // squares
    double orientation_rad = 0.0;
};

// Default clutter sizes; comparable density to hand-drawn maps at 5 cm/px.
struct forest_params {
    double circle_radius_min_m = 0.2;
    double circle_radius_max_m = 0.5;
    double square_side_min_m = 0.4;
    double square_side_max_m = 1.0;
};

namespace detail {

inline bool inside_obstacle(const obstacle_spec& ob, const point2& p) {
    const double dx = p.x - ob.center.x, dy = p.y - ob.center.y;
    if (ob.kind == obstacle_spec::circle) return dx * dx + dy * dy <= ob.radius_m * ob.radius_m;
    const double c = std::cos(ob.orientation_rad), s = std::sin(ob.orientation_rad);
    const double u = dx * c + dy * s;
    const double v = -dx * s + dy * c;
    return std::abs(u) <= ob.side_m / 2.0 && std::abs(v) <= ob.side_m / 2.0;
}

// Marks every pixel whose center lies in the shape (conservative raster).
inline void rasterize(costmap& map, const obstacle_spec& ob) {
    const double reach = ob.kind == obstacle_spec::circle ? ob.radius_m : ob.side_m * 0.7071067811865476;
    const int r0 = std::max(0, map.row_of(ob.center.y - reach) - 1);
    const int r1 = std::min(map.height - 1, map.row_of(ob.center.y + reach) + 1);
    const int c0 = std::max(0, map.col_of(ob.center.x - reach) - 1);
    const int c1 = std::min(map.width - 1, map.col_of(ob.center.x + reach) + 1);
    for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c)
            if (inside_obstacle(ob, map.center_of(r, c))) map.at(r, c) = 1;
}

} // namespace detail

// Random Forest environment: n obstacles, fair-coin circle/square, centers
// uniform, sizes and orientation per forest_params. Obstacles may overlap.
inline costmap gen_forest(int width_px, int height_px, int n_obstacles, uint64_t seed,
                          const forest_params& fp = {}, double resolution = 0.05,
                          std::vector<obstacle_spec>* out_specs = nullptr) {
    if (n_obstacles < 0) throw generation_error("negative obstacle count");
    costmap map(width_px, height_px, resolution);
    map.seed = seed;
    const double min_extent = 2.0 * fp.circle_radius_min_m;
    if (n_obstacles > 0 && (map.width_m() < min_extent || map.height_m() < min_extent))
        throw generation_error("map too small to place any obstacle");
    rng r(seed);
    for (int i = 0; i < n_obstacles; ++i) {
        obstacle_spec ob;
        ob.kind = r.uniform() < 0.5 ? obstacle_spec::circle : obstacle_spec::square;
        ob.center = {r.uniform(0.0, map.width_m()), r.uniform(0.0, map.height_m())};
        if (ob.kind == obstacle_spec::circle) {
            ob.radius_m = r.uniform(fp.circle_radius_min_m, fp.circle_radius_max_m);
        } else {
            ob.side_m = r.uniform(fp.square_side_min_m, fp.square_side_max_m);
            ob.orientation_rad = r.uniform(0.0, 1.5707963267948966);
        }
        detail::rasterize(map, ob);
        if (out_specs) out_specs->push_back(ob);
    }
    if (map.free_pixels() == 0) throw generation_error("generated map has no free space");
    std::ostringstream prov;
    prov << "forest n=" << n_obstacles << " seed=" << seed;
    map.provenance = prov.str();
    return map;
}

struct maze_spec {
    int cell_size_px = 40;  // corridor pitch (corridor + one wall)
    int wall_px = 10;
    int rows = 0, cols = 0;
};

// Proportional scaling of the 480-px defaults (pitch 40 px, wall 10 px).
inline maze_spec maze_spec_for_size(int width_px, int height_px) {
    const int base = std::min(width_px, height_px);
    maze_spec s;
    s.cell_size_px = std::max(4, static_cast<int>(std::lround(40.0 * base / 480.0)));
    s.wall_px = std::max(1, static_cast<int>(std::lround(10.0 * base / 480.0)));
    if (s.wall_px >= s.cell_size_px) s.wall_px = s.cell_size_px - 1;
    s.cols = (width_px - s.wall_px) / s.cell_size_px;
    s.rows = (height_px - s.wall_px) / s.cell_size_px;
    return s;
}

struct maze_result {
    costmap map;
    maze_spec spec;
    int passages = 0; // carved inter-cell openings; a perfect maze has rows*cols-1
};

// Perfect maze via randomized depth-first search over the cell grid. The
// carved corridor graph is a spanning tree, so every free cell pair is
// connected by exactly one simple corridor path.
inline maze_result gen_maze_detailed(int rows, int cols, int cell_size_px, int wall_px, uint64_t seed,
                                     int width_px = 0, int height_px = 0, double resolution = 0.05) {
    if (rows < 1 || cols < 1 || rows * cols < 2) throw generation_error("maze needs at least 2 cells");
    if (wall_px < 1 || cell_size_px <= wall_px) throw generation_error("maze wall/cell geometry invalid");
    const int need_w = cols * cell_size_px + wall_px;
    const int need_h = rows * cell_size_px + wall_px;
    if (width_px == 0) width_px = need_w;
    if (height_px == 0) height_px = need_h;
    if (need_w > width_px || need_h > height_px)
        throw generation_error("maze geometry does not fit the map");

    maze_result res;
    res.map = costmap(width_px, height_px, resolution);
    res.map.seed = seed;
    res.spec = {cell_size_px, wall_px, rows, cols};
    auto& map = res.map;
    std::fill(map.occ.begin(), map.occ.end(), 1);

    const int corridor = cell_size_px - wall_px;
    auto open_cell = [&](int r, int c) {
        const int y0 = wall_px + r * cell_size_px, x0 = wall_px + c * cell_size_px;
        for (int y = y0; y < y0 + corridor; ++y)
            for (int x = x0; x < x0 + corridor; ++x) map.at(y, x) = 0;
    };
    auto open_passage = [&](int r0, int c0, int r1, int c1) {
        // clear the wall strip between two adjacent cells
        if (r0 == r1) { // horizontal neighbors
            const int cl = std::min(c0, c1);
            const int x0 = wall_px + cl * cell_size_px + corridor;
            const int y0 = wall_px + r0 * cell_size_px;
            for (int y = y0; y < y0 + corridor; ++y)
                for (int x = x0; x < x0 + wall_px; ++x) map.at(y, x) = 0;
        } else {
            const int rl = std::min(r0, r1);
            const int y0 = wall_px + rl * cell_size_px + corridor;
            const int x0 = wall_px + c0 * cell_size_px;
            for (int y = y0; y < y0 + wall_px; ++y)
                for (int x = x0; x < x0 + corridor; ++x) map.at(y, x) = 0;
        }
        ++res.passages;
    };

    rng r(seed);
    std::vector<uint8_t> visited(static_cast<size_t>(rows) * cols, 0);
    std::vector<std::pair<int, int>> stack;
    const int sr = static_cast<int>(r.uniform_int(rows)), sc = static_cast<int>(r.uniform_int(cols));
    visited[static_cast<size_t>(sr) * cols + sc] = 1;
    open_cell(sr, sc);
    stack.emplace_back(sr, sc);
    const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
    while (!stack.empty()) {
        auto [cr, cc] = stack.back();
        int options[4], n_opt = 0;
        for (int k = 0; k < 4; ++k) {
            const int nr = cr + dr[k], nc = cc + dc[k];
            if (nr >= 0 && nc >= 0 && nr < rows && nc < cols && !visited[static_cast<size_t>(nr) * cols + nc])
                options[n_opt++] = k;
        }
        if (n_opt == 0) {
            stack.pop_back();
            continue;
        }
        const int k = options[r.uniform_int(n_opt)];
        const int nr = cr + dr[k], nc = cc + dc[k];
        visited[static_cast<size_t>(nr) * cols + nc] = 1;
        open_cell(nr, nc);
        open_passage(cr, cc, nr, nc);
        stack.emplace_back(nr, nc);
    }

    std::ostringstream prov;
    prov << "maze " << rows << "x" << cols << " cell=" << cell_size_px << " wall=" << wall_px
         << " seed=" << seed;
    map.provenance = prov.str();
    return res;
}

inline costmap gen_maze(int rows, int cols, int cell_size_px, int wall_px, uint64_t seed) {
    return gen_maze_detailed(rows, cols, cell_size_px, wall_px, seed).map;
}

// Flood fill over free pixels; true when every free pixel is reachable from
// every other (used as the maze connectivity oracle).
inline bool free_space_connected(const costmap& map) {
    const int64_t total_free = map.free_pixels();
    if (total_free == 0) return false;
    int start = -1;
    for (size_t i = 0; i < map.occ.size(); ++i)
        if (map.occ[i] == 0) {
            start = static_cast<int>(i);
            break;
        }
    std::vector<uint8_t> seen(map.occ.size(), 0);
    std::queue<int> q;
    q.push(start);
    seen[start] = 1;
    int64_t reached = 0;
    while (!q.empty()) {
        const int i = q.front();
        q.pop();
        ++reached;
        const int r = i / map.width, c = i % map.width;
        const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
        for (auto& [nr, nc] : nbr) {
            if (!map.in_bounds(nr, nc)) continue;
            const int j = nr * map.width + nc;
            if (!seen[j] && map.occ[j] == 0) {
                seen[j] = 1;
                q.push(j);
            }
        }
    }
    return reached == total_free;
}

// Rejection-samples a free start/goal pair separated by at least
// min_separation_frac of the map diagonal.
inline std::pair<point2, point2> sample_problem(const costmap& map, rng& r,
                                                double min_separation_frac = 0.2,
                                                int max_attempts = 10000) {
    if (map.free_pixels() == 0) throw sampling_error("no free space to sample from");
    const double diag = std::hypot(map.width_m(), map.height_m());
    const double min_sep = min_separation_frac * diag;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        const point2 a{r.uniform(0.0, map.width_m()), r.uniform(0.0, map.height_m())};
        const point2 b{r.uniform(0.0, map.width_m()), r.uniform(0.0, map.height_m())};
        if (!is_state_free(map, a) || !is_state_free(map, b)) continue;
        if (dist2d(a, b) < min_sep) continue;
        return {a, b};
    }
    throw sampling_error("could not sample a start/goal pair after " + std::to_string(max_attempts) +
                         " attempts");
}

} // namespace mpt
