#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mpt/errors.hpp"
#include "mpt/image.hpp"

namespace mpt {

struct point2 {
    double x = 0.0, y = 0.0;
};

inline double dist2d(const point2& a, const point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Binary occupancy grid with metric resolution. x runs along columns,
// y along rows; pixel (r, c) covers [c*res, (c+1)*res) x [r*res, (r+1)*res).
struct costmap {
    int width = 0;
    int height = 0;
    double resolution = 0.05; // meters per pixel
    std::vector<uint8_t> occ; // row-major, 1 = obstacle
    uint64_t seed = 0;
    std::string provenance;

    costmap() = default;
    costmap(int w, int h, double res = 0.05) : width(w), height(h), resolution(res), occ(static_cast<size_t>(w) * h, 0) {
        if (w <= 0 || h <= 0) throw generation_error("costmap dimensions must be positive");
    }

    bool in_bounds(int row, int col) const { return row >= 0 && col >= 0 && row < height && col < width; }

    uint8_t& at(int row, int col) { return occ[static_cast<size_t>(row) * width + col]; }
    uint8_t at(int row, int col) const { return occ[static_cast<size_t>(row) * width + col]; }

    double width_m() const { return width * resolution; }
    double height_m() const { return height * resolution; }

    int row_of(double y) const { return static_cast<int>(std::floor(y / resolution)); }
    int col_of(double x) const { return static_cast<int>(std::floor(x / resolution)); }

    point2 center_of(int row, int col) const {
        return {(col + 0.5) * resolution, (row + 0.5) * resolution};
    }

    int64_t free_pixels() const {
        int64_t n = 0;
        for (uint8_t v : occ) n += (v == 0);
        return n;
    }

    double free_area_m2() const { return static_cast<double>(free_pixels()) * resolution * resolution; }
};

// Point check: occupancy of the containing pixel; out of bounds is not free.
inline bool is_state_free(const costmap& map, const point2& p) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
    const int row = map.row_of(p.y), col = map.col_of(p.x);
    return map.in_bounds(row, col) && map.at(row, col) == 0;
}

// Segment check: samples at most one pixel apart, endpoints included.
inline bool is_motion_free(const costmap& map, const point2& a, const point2& b) {
    const double d = dist2d(a, b);
    const int steps = std::max(1, static_cast<int>(std::ceil(d / map.resolution)));
    for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        if (!is_state_free(map, {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)})) return false;
    }
    return true;
}

// PGM convention: pixel value < 128 is an obstacle, >= 128 free. Resolution
// travels in a "# resolution <m>" header comment; absent, the 0.05 default
// applies and the provenance says so.
inline costmap load_pgm(const std::string& path) {
    const gray_image img = read_pgm(path);
    costmap map(img.width, img.height);
    for (size_t i = 0; i < img.pixels.size(); ++i) map.occ[i] = img.pixels[i] < 128 ? 1 : 0;
    bool found_res = false;
    for (const auto& c : img.comments) {
        std::istringstream is(c);
        std::string key;
        double v = 0.0;
        if (is >> key >> v && key == "resolution" && v > 0.0) {
            map.resolution = v;
            found_res = true;
        }
    }
    map.provenance = found_res ? "pgm:" + path : "pgm:" + path + " (no resolution comment, default 0.05)";
    return map;
}

inline void save_pgm(const costmap& map, const std::string& path) {
    std::vector<uint8_t> px(map.occ.size());
    for (size_t i = 0; i < px.size(); ++i) px[i] = map.occ[i] ? 0 : 255;
    std::ostringstream res;
    res << " resolution " << map.resolution;
    write_pgm(path, map.width, map.height, px, {res.str()});
}

} // namespace mpt
