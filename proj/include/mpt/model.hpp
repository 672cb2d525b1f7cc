#pragma once

#include <chrono>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpt/blocks.hpp"
#include "mpt/costmap.hpp"
#include "mpt/errors.hpp"
#include "mpt/rng.hpp"
#include "mpt/tensor.hpp"

namespace mpt {

struct model_config {
    int64_t d_model = 512;
    int64_t n_layers = 6;
    int64_t n_heads = 3;
    int64_t d_k = 512; // per head; full-width by default, set d_model/n_heads for split heads
    int64_t d_v = 256;
    int64_t mlp_hidden = 1024;
    double dropout_rate = 0.1;
    int64_t max_tokens = 1600;
    int64_t patch_px = 20; // p: start/goal stamp and mask patch edge
    std::vector<fe_layer_spec> feature_layers;

    static model_config defaults(int64_t d = 512) {
        model_config c;
        c.d_model = d;
        c.mlp_hidden = 2 * d;
        c.feature_layers = default_feature_layers(d);
        return c;
    }

    // Small configuration for fast experiments and tests.
    static model_config tiny() {
        model_config c;
        c.d_model = 64;
        c.n_layers = 2;
        c.n_heads = 1;
        c.d_k = 64;
        c.d_v = 64;
        c.mlp_hidden = 128;
        c.max_tokens = 1600;
        c.feature_layers = default_feature_layers(64);
        return c;
    }

    static std::vector<fe_layer_spec> default_feature_layers(int64_t d) {
        return {fe_layer_spec::make_conv(2, 6, 5, 1),  fe_layer_spec::make_pool(2),
                fe_layer_spec::make_relu(),            fe_layer_spec::make_conv(6, 16, 5, 1),
                fe_layer_spec::make_pool(2),           fe_layer_spec::make_relu(),
                fe_layer_spec::make_conv(16, d, 5, 5)};
    }

    void validate() const {
        if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_k <= 0 || d_v <= 0 || mlp_hidden <= 0 ||
            max_tokens <= 0 || patch_px <= 0)
            throw config_error("model dimensions must be positive");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw config_error("dropout_rate must be in [0,1)");
        if (feature_layers.empty()) throw config_error("feature extractor has no layers");
        if (feature_layers.front().kind != fe_layer_spec::conv || feature_layers.front().in_ch != 2)
            throw config_error("feature extractor must start with a conv over 2 input channels");
    }
};

inline void to_json(nlohmann::json& j, const fe_layer_spec& l) {
    switch (l.kind) {
        case fe_layer_spec::conv:
            j = {{"kind", "conv"}, {"in", l.in_ch}, {"out", l.out_ch}, {"kernel", l.kernel}, {"stride", l.stride}};
            break;
        case fe_layer_spec::pool:
            j = {{"kind", "pool"}, {"k", l.pool_k}};
            break;
        case fe_layer_spec::relu_act:
            j = {{"kind", "relu"}};
            break;
    }
}

inline void from_json(const nlohmann::json& j, fe_layer_spec& l) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "conv")
        l = fe_layer_spec::make_conv(j.at("in").get<int64_t>(), j.at("out").get<int64_t>(),
                                     j.at("kernel").get<int64_t>(), j.at("stride").get<int64_t>());
    else if (kind == "pool")
        l = fe_layer_spec::make_pool(j.at("k").get<int64_t>());
    else if (kind == "relu")
        l = fe_layer_spec::make_relu();
    else
        throw config_error("unknown feature layer kind '" + kind + "'");
}

inline void to_json(nlohmann::json& j, const model_config& c) {
    j = {{"d_model", c.d_model},       {"n_layers", c.n_layers},
         {"n_heads", c.n_heads},       {"d_k", c.d_k},
         {"d_v", c.d_v},               {"mlp_hidden", c.mlp_hidden},
         {"dropout_rate", c.dropout_rate}, {"max_tokens", c.max_tokens},
         {"patch_px", c.patch_px},     {"feature_layers", c.feature_layers}};
}

inline void from_json(const nlohmann::json& j, model_config& c) {
    j.at("d_model").get_to(c.d_model);
    j.at("n_layers").get_to(c.n_layers);
    j.at("n_heads").get_to(c.n_heads);
    j.at("d_k").get_to(c.d_k);
    j.at("d_v").get_to(c.d_v);
    j.at("mlp_hidden").get_to(c.mlp_hidden);
    j.at("dropout_rate").get_to(c.dropout_rate);
    j.at("max_tokens").get_to(c.max_tokens);
    j.at("patch_px").get_to(c.patch_px);
    j.at("feature_layers").get_to(c.feature_layers);
}

// Token index <-> map pixel bookkeeping. Token t sits at grid cell
// (t / cols, t % cols); its anchor pixel is offset + cell * stride. When the
// map was cropped for pool divisibility, rows/cols describe the cropped
// region while map_h/map_w keep the full extents.
struct anchor_grid {
    int64_t rows = 0, cols = 0;
    int64_t stride_px = 0;
    int64_t offset_px = 0;
    int64_t map_h = 0, map_w = 0;
    int64_t crop_h = 0, crop_w = 0;

    int64_t tokens() const { return rows * cols; }

    int64_t anchor_row_px(int64_t t) const { return offset_px + (t / cols) * stride_px; }
    int64_t anchor_col_px(int64_t t) const { return offset_px + (t % cols) * stride_px; }

    point2 anchor_center_m(int64_t t, double resolution) const {
        return {(anchor_col_px(t) + 0.5) * resolution, (anchor_row_px(t) + 0.5) * resolution};
    }
};

inline anchor_grid anchor_grid_for(const model_config& cfg, int64_t map_h, int64_t map_w) {
    anchor_grid g;
    g.map_h = map_h;
    g.map_w = map_w;
    g.crop_h = fe_compatible_extent(cfg.feature_layers, map_h);
    g.crop_w = fe_compatible_extent(cfg.feature_layers, map_w);
    g.rows = fe_output_extent(cfg.feature_layers, g.crop_h);
    g.cols = fe_output_extent(cfg.feature_layers, g.crop_w);
    g.stride_px = fe_total_stride(cfg.feature_layers);
    g.offset_px = g.stride_px / 2;
    return g;
}

// H x W boolean sampling mask plus the provenance of its construction.
struct mask_grid {
    int64_t height = 0, width = 0;
    std::vector<uint8_t> bits; // row-major, 1 = inside the proposed region
    double tau = 0.0;
    std::vector<int64_t> selected_anchors;

    bool test(int64_t row, int64_t col) const {
        return row >= 0 && col >= 0 && row < height && col < width &&
               bits[static_cast<size_t>(row) * width + col] != 0;
    }

    void set(int64_t row, int64_t col) {
        if (row >= 0 && col >= 0 && row < height && col < width)
            bits[static_cast<size_t>(row) * width + col] = 1;
    }

    int64_t popcount() const {
        int64_t n = 0;
        for (uint8_t b : bits) n += b;
        return n;
    }

    bool contains(const point2& p, double resolution) const {
        return test(static_cast<int64_t>(std::floor(p.y / resolution)),
                    static_cast<int64_t>(std::floor(p.x / resolution)));
    }
};

namespace detail {

inline void stamp_patch(std::vector<uint8_t>& bits, int64_t h, int64_t w, int64_t center_row,
                        int64_t center_col, int64_t p) {
    const int64_t r0 = std::max<int64_t>(0, center_row - p / 2);
    const int64_t r1 = std::min(h, center_row - p / 2 + p);
    const int64_t c0 = std::max<int64_t>(0, center_col - p / 2);
    const int64_t c1 = std::min(w, center_col - p / 2 + p);
    for (int64_t r = r0; r < r1; ++r)
        for (int64_t c = c0; c < c1; ++c) bits[static_cast<size_t>(r) * w + c] = 1;
}

} // namespace detail

// Two-channel network input over the (possibly cropped) map region:
// channel 0 carries the costmap (free = 1, obstacle = 0), channel 1 the
// start/goal stamps (+1 start, -1 goal, start wins on overlap).
inline tensor<float> encode_query(const costmap& map, const point2& start, const point2& goal,
                                  int64_t p_px, int64_t crop_h = 0, int64_t crop_w = 0) {
    if (!map.in_bounds(map.row_of(start.y), map.col_of(start.x)))
        throw query_error("start position outside the map");
    if (!map.in_bounds(map.row_of(goal.y), map.col_of(goal.x)))
        throw query_error("goal position outside the map");
    const int64_t h = crop_h > 0 ? crop_h : map.height;
    const int64_t w = crop_w > 0 ? crop_w : map.width;
    tensor<float> x({2, h, w});
    for (int64_t r = 0; r < h; ++r)
        for (int64_t c = 0; c < w; ++c)
            x[r * w + c] = map.at(static_cast<int>(r), static_cast<int>(c)) ? 0.0f : 1.0f;
    float* enc = x.data() + h * w;
    auto stamp = [&](const point2& p, float value) {
        const int64_t cr = map.row_of(p.y), cc = map.col_of(p.x);
        const int64_t r0 = std::max<int64_t>(0, cr - p_px / 2), r1 = std::min(h, cr - p_px / 2 + p_px);
        const int64_t c0 = std::max<int64_t>(0, cc - p_px / 2), c1 = std::min(w, cc - p_px / 2 + p_px);
        for (int64_t r = r0; r < r1; ++r)
            for (int64_t c = c0; c < c1; ++c) enc[r * w + c] = value;
    };
    stamp(goal, -1.0f);  // start stamped last so it wins overlaps
    stamp(start, 1.0f);
    return x;
}

// Fixed sinusoidal table over the flattened token index:
// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same).
inline tensor<float> positional_encoding(int64_t n_tokens, int64_t d_model) {
    tensor<float> pe({n_tokens, d_model});
    for (int64_t pos = 0; pos < n_tokens; ++pos)
        for (int64_t i = 0; i < d_model; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d_model));
            const double angle = static_cast<double>(pos) * freq;
            pe.at(pos, i) = static_cast<float>(std::sin(angle));
            if (i + 1 < d_model) pe.at(pos, i + 1) = static_cast<float>(std::cos(angle));
        }
    return pe;
}

template <class T>
struct model_params {
    feature_params<T> fe;
    std::vector<encoder_layer_params<T>> layers;
    tensor<T> cls_w, cls_b; // shared per-token classifier, d_model -> 2
};

// The region proposal network: feature extractor over the encoded query,
// sinusoidal positions, transformer encoder, per-token two-way classifier.
class mpt_model {
public:
    mpt_model() = default;

    explicit mpt_model(model_config cfg, uint64_t init_seed = 0) : cfg_(std::move(cfg)) {
        cfg_.validate();
        rng r(derive_seed(init_seed, "mpt-init"));
        size_t conv_idx = 0;
        for (const auto& l : cfg_.feature_layers) {
            if (l.kind != fe_layer_spec::conv) continue;
            const double bound = std::sqrt(1.0 / static_cast<double>(l.in_ch * l.kernel * l.kernel));
            auto w = tensor<float>::uniform({l.out_ch, l.in_ch, l.kernel, l.kernel}, r, -bound, bound, true);
            auto b = tensor<float>::zeros({l.out_ch});
            b.set_requires_grad(true);
            params_.fe.conv_w.push_back(w);
            params_.fe.conv_b.push_back(b);
            reg("fe.conv" + std::to_string(conv_idx) + ".w", params_.fe.conv_w.back());
            reg("fe.conv" + std::to_string(conv_idx) + ".b", params_.fe.conv_b.back());
            ++conv_idx;
        }
        const double db = std::sqrt(1.0 / static_cast<double>(cfg_.d_model));
        for (int64_t l = 0; l < cfg_.n_layers; ++l) {
            encoder_layer_params<float> lp;
            const std::string pre = "enc.l" + std::to_string(l) + ".";
            for (int64_t h = 0; h < cfg_.n_heads; ++h) {
                const std::string hp = pre + "h" + std::to_string(h) + ".";
                lp.msa.wq.push_back(tensor<float>::uniform({cfg_.d_model, cfg_.d_k}, r, -db, db, true));
                lp.msa.bq.push_back(grad_zeros({cfg_.d_k}));
                lp.msa.wk.push_back(tensor<float>::uniform({cfg_.d_model, cfg_.d_k}, r, -db, db, true));
                lp.msa.bk.push_back(grad_zeros({cfg_.d_k}));
                lp.msa.wv.push_back(tensor<float>::uniform({cfg_.d_model, cfg_.d_v}, r, -db, db, true));
                lp.msa.bv.push_back(grad_zeros({cfg_.d_v}));
                reg(hp + "wq", lp.msa.wq.back());
                reg(hp + "bq", lp.msa.bq.back());
                reg(hp + "wk", lp.msa.wk.back());
                reg(hp + "bk", lp.msa.bk.back());
                reg(hp + "wv", lp.msa.wv.back());
                reg(hp + "bv", lp.msa.bv.back());
            }
            const int64_t cat = cfg_.n_heads * cfg_.d_v;
            const double dcat = std::sqrt(1.0 / static_cast<double>(cat));
            lp.msa.wo = tensor<float>::uniform({cat, cfg_.d_model}, r, -dcat, dcat, true);
            lp.msa.bo = grad_zeros({cfg_.d_model});
            lp.ln1_gain = grad_full({cfg_.d_model}, 1.0f);
            lp.ln1_bias = grad_zeros({cfg_.d_model});
            lp.mlp_w1 = tensor<float>::uniform({cfg_.d_model, cfg_.mlp_hidden}, r, -db, db, true);
            lp.mlp_b1 = grad_zeros({cfg_.mlp_hidden});
            const double dh = std::sqrt(1.0 / static_cast<double>(cfg_.mlp_hidden));
            lp.mlp_w2 = tensor<float>::uniform({cfg_.mlp_hidden, cfg_.d_model}, r, -dh, dh, true);
            lp.mlp_b2 = grad_zeros({cfg_.d_model});
            lp.ln2_gain = grad_full({cfg_.d_model}, 1.0f);
            lp.ln2_bias = grad_zeros({cfg_.d_model});
            reg(pre + "wo", lp.msa.wo);
            reg(pre + "bo", lp.msa.bo);
            reg(pre + "ln1.gain", lp.ln1_gain);
            reg(pre + "ln1.bias", lp.ln1_bias);
            reg(pre + "mlp.w1", lp.mlp_w1);
            reg(pre + "mlp.b1", lp.mlp_b1);
            reg(pre + "mlp.w2", lp.mlp_w2);
            reg(pre + "mlp.b2", lp.mlp_b2);
            reg(pre + "ln2.gain", lp.ln2_gain);
            reg(pre + "ln2.bias", lp.ln2_bias);
            params_.layers.push_back(std::move(lp));
        }
        params_.cls_w = tensor<float>::uniform({cfg_.d_model, 2}, r, -db, db, true);
        params_.cls_b = grad_zeros({2});
        reg("cls.w", params_.cls_w);
        reg("cls.b", params_.cls_b);
        pe_ = positional_encoding(cfg_.max_tokens, cfg_.d_model);
    }

    const model_config& config() const { return cfg_; }
    model_params<float>& params() { return params_; }
    const model_params<float>& params() const { return params_; }

    const std::vector<std::string>& param_names() const { return names_; }

    // Returned handles share storage with the live parameters, so writing
    // through them updates the model in place.
    tensor<float>& param(const std::string& name) {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw config_error("unknown parameter '" + name + "'");
        return it->second;
    }
    const tensor<float>& param(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw config_error("unknown parameter '" + name + "'");
        return it->second;
    }

    anchor_grid grid_for(const costmap& map) const { return anchor_grid_for(cfg_, map.height, map.width); }

    // Feature tokens for an encoded query; row t is the d-vector of token t.
    tensor<float> extract_features(grad_tape<float>* tape, const tensor<float>& x) const {
        tensor<float> fmap = feature_stack_forward(tape, x, cfg_.feature_layers, params_.fe);
        return tokens_from_chw(tape, fmap);
    }

    tensor<float> encode_tokens(grad_tape<float>* tape, const tensor<float>& tokens, bool training,
                                rng* r, std::vector<tensor<float>>* attn_out = nullptr) const {
        if (tokens.dim(0) > cfg_.max_tokens)
            throw capacity_error("token count " + std::to_string(tokens.dim(0)) +
                                 " exceeds max_tokens " + std::to_string(cfg_.max_tokens));
        tensor<float> pe_slice({tokens.dim(0), cfg_.d_model});
        std::copy(pe_.data(), pe_.data() + tokens.numel(), pe_slice.data());
        tensor<float> embedded = add(tape, tokens, pe_slice);
        return encoder_forward(tape, embedded, params_.layers, cfg_.dropout_rate, r, training, attn_out);
    }

    tensor<float> classify_anchors(grad_tape<float>* tape, const tensor<float>& encoded) const {
        return add_bias_row(tape, matmul(tape, encoded, params_.cls_w), params_.cls_b);
    }

    struct forward_result {
        tensor<float> logits; // [tokens x 2], column 1 = path class
        anchor_grid grid;
    };

    forward_result forward(grad_tape<float>* tape, const costmap& map, const point2& start,
                           const point2& goal, bool training = false, rng* r = nullptr) const {
        anchor_grid grid = grid_for(map);
        if (grid.tokens() > cfg_.max_tokens)
            throw capacity_error("map of " + std::to_string(grid.tokens()) +
                                 " tokens exceeds max_tokens " + std::to_string(cfg_.max_tokens));
        tensor<float> x = encode_query(map, start, goal, cfg_.patch_px, grid.crop_h, grid.crop_w);
        tensor<float> tokens = extract_features(tape, x);
        tensor<float> encoded = encode_tokens(tape, tokens, training, r);
        return {classify_anchors(tape, encoded), grid};
    }

    // Per-token P(path) from logits.
    static std::vector<double> path_probabilities(const tensor<float>& logits) {
        std::vector<double> p(logits.dim(0));
        for (int64_t t = 0; t < logits.dim(0); ++t) {
            const double a = logits.at(t, 0), b = logits.at(t, 1);
            const double m = std::max(a, b);
            const double ea = std::exp(a - m), eb = std::exp(b - m);
            p[t] = eb / (ea + eb);
        }
        return p;
    }

private:
    tensor<float> grad_zeros(shape_t s) {
        auto t = tensor<float>::zeros(std::move(s));
        t.set_requires_grad(true);
        return t;
    }
    tensor<float> grad_full(shape_t s, float v) {
        auto t = tensor<float>::full(std::move(s), v);
        t.set_requires_grad(true);
        return t;
    }
    void reg(const std::string& name, const tensor<float>& t) {
        names_.push_back(name);
        by_name_.emplace(name, t); // handle copy, shares storage
    }

    model_config cfg_;
    model_params<float> params_;
    tensor<float> pe_;
    std::vector<std::string> names_;
    std::map<std::string, tensor<float>> by_name_;
};

// Anchor selection: P(path) >= tau, mask = union of p x p patches at the
// selected anchors plus the forced start and goal patches. Forcing the
// endpoints costs nothing — planners still collision-check the real map —
// and removes the failure mode where a missing patch disconnects the region.
inline mask_grid build_mask(const std::vector<double>& path_probs, const anchor_grid& grid, double tau,
                            const point2& start, const point2& goal, int64_t p_px, double resolution) {
    if (tau <= 0.0 || tau >= 1.0) throw config_error("tau must be in (0,1)");
    mask_grid m;
    m.height = grid.map_h;
    m.width = grid.map_w;
    m.tau = tau;
    m.bits.assign(static_cast<size_t>(m.height) * m.width, 0);
    for (int64_t t = 0; t < grid.tokens(); ++t) {
        if (path_probs[t] >= tau) {
            m.selected_anchors.push_back(t);
            detail::stamp_patch(m.bits, m.height, m.width, grid.anchor_row_px(t), grid.anchor_col_px(t), p_px);
        }
    }
    const int64_t sr = static_cast<int64_t>(std::floor(start.y / resolution));
    const int64_t sc = static_cast<int64_t>(std::floor(start.x / resolution));
    const int64_t gr = static_cast<int64_t>(std::floor(goal.y / resolution));
    const int64_t gc = static_cast<int64_t>(std::floor(goal.x / resolution));
    detail::stamp_patch(m.bits, m.height, m.width, sr, sc, p_px);
    detail::stamp_patch(m.bits, m.height, m.width, gr, gc, p_px);
    return m;
}

// Mask from an explicit anchor set (used by the oracle-mask pipeline).
inline mask_grid build_mask_from_anchors(const std::vector<int64_t>& anchors, const anchor_grid& grid,
                                         const point2& start, const point2& goal, int64_t p_px,
                                         double resolution) {
    std::vector<double> probs(grid.tokens(), 0.0);
    for (int64_t t : anchors) probs.at(t) = 1.0;
    mask_grid m = build_mask(probs, grid, 0.5, start, goal, p_px, resolution);
    return m;
}

// 8-bit probability map: each pixel takes the P(path) of its nearest anchor
// (patch-tile upsampling), scaled to round(255 * p).
inline gray_image probability_pgm(const std::vector<double>& path_probs, const anchor_grid& grid) {
    gray_image img;
    img.width = static_cast<int>(grid.map_w);
    img.height = static_cast<int>(grid.map_h);
    img.pixels.resize(static_cast<size_t>(img.width) * img.height);
    for (int64_t r = 0; r < grid.map_h; ++r)
        for (int64_t c = 0; c < grid.map_w; ++c) {
            const int64_t tr = std::clamp<int64_t>(r / grid.stride_px, 0, grid.rows - 1);
            const int64_t tc = std::clamp<int64_t>(c / grid.stride_px, 0, grid.cols - 1);
            const double p = path_probs[tr * grid.cols + tc];
            img.pixels[static_cast<size_t>(r) * img.width + c] =
                static_cast<uint8_t>(std::lround(255.0 * p));
        }
    return img;
}

inline gray_image mask_to_pgm(const mask_grid& m) {
    gray_image img;
    img.width = static_cast<int>(m.width);
    img.height = static_cast<int>(m.height);
    img.pixels.resize(m.bits.size());
    for (size_t i = 0; i < m.bits.size(); ++i) img.pixels[i] = m.bits[i] ? 255 : 0;
    return img;
}

inline mask_grid mask_from_pgm(const gray_image& img) {
    mask_grid m;
    m.height = img.height;
    m.width = img.width;
    m.bits.resize(img.pixels.size());
    for (size_t i = 0; i < img.pixels.size(); ++i) m.bits[i] = img.pixels[i] >= 128 ? 1 : 0;
    return m;
}

struct inference_result {
    mask_grid mask;
    std::vector<double> path_probs;
    anchor_grid grid;
    double inference_time_s = 0.0;
};

inline inference_result infer_mask(const mpt_model& model, const costmap& map, const point2& start,
                                   const point2& goal, double tau) {
    const auto t0 = std::chrono::steady_clock::now();
    auto fw = model.forward(nullptr, map, start, goal, false, nullptr);
    inference_result res;
    res.path_probs = mpt_model::path_probabilities(fw.logits);
    res.grid = fw.grid;
    res.mask = build_mask(res.path_probs, fw.grid, tau, start, goal, model.config().patch_px, map.resolution);
    res.inference_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

} // namespace mpt
