#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mpt/blocks.hpp"
#include "mpt/tensor.hpp"

namespace mpt {

struct gradcheck_result {
    std::string op;
    double max_rel_err = 0.0;
    int trials = 0;
    int64_t coords_checked = 0;
    int64_t coords_skipped = 0; // +-h straddled a relu/pool kink
    bool pass = false;
};

// Compares reverse-mode gradients of the 32-bit implementation against
// central finite differences (h = 1e-3) of the same computation instantiated
// in 64-bit. Coordinates whose +-h evaluations land on different linear
// pieces of a relu/maxpool are skipped — the two-sided quotient is not a
// derivative estimate there — and the check fails if skips dominate.
class gradcheck_suite {
public:
    static constexpr double kFdStep = 1e-3;
    static constexpr double kTolerance = 1e-4;

    gradcheck_suite() { register_default_cases(); }

    std::vector<std::string> op_names() const {
        std::vector<std::string> names;
        for (const auto& c : cases_) names.push_back(c.name);
        return names;
    }

    gradcheck_result check(const std::string& op_id, int trial_count, uint64_t seed) const {
        for (const auto& c : cases_)
            if (c.name == op_id) return run_case(c, trial_count, seed);
        throw config_error("gradcheck: unknown op '" + op_id + "'");
    }

    std::vector<gradcheck_result> check_all(int trial_count, uint64_t seed) const {
        std::vector<gradcheck_result> out;
        for (const auto& c : cases_) out.push_back(run_case(c, trial_count, seed));
        return out;
    }

private:
    struct case_t {
        std::string name;
        std::vector<shape_t> shapes;
        double scale = 1.0;
        std::function<tensor<float>(grad_tape<float>*, std::vector<tensor<float>>&)> f32;
        std::function<tensor<double>(grad_tape<double>*, std::vector<tensor<double>>&)> f64;
    };

    template <class F>
    void add(std::string name, std::vector<shape_t> shapes, F f, double scale = 1.0) {
        case_t c;
        c.name = std::move(name);
        c.shapes = std::move(shapes);
        c.scale = scale;
        c.f32 = [f](grad_tape<float>* t, std::vector<tensor<float>>& in) { return f(t, in); };
        c.f64 = [f](grad_tape<double>* t, std::vector<tensor<double>>& in) { return f(t, in); };
        cases_.push_back(std::move(c));
    }

    static std::vector<std::vector<double>> draw_inputs(const case_t& c, rng& r) {
        std::vector<std::vector<double>> vals;
        for (const auto& s : c.shapes) {
            std::vector<double> v(numel_of(s));
            for (auto& x : v) x = r.uniform(-c.scale, c.scale);
            vals.push_back(std::move(v));
        }
        return vals;
    }

    template <class T>
    static std::vector<tensor<T>> to_tensors(const case_t& c, const std::vector<std::vector<double>>& vals) {
        std::vector<tensor<T>> ts;
        for (size_t i = 0; i < c.shapes.size(); ++i) {
            std::vector<T> data(vals[i].begin(), vals[i].end());
            ts.emplace_back(c.shapes[i], std::move(data));
            ts.back().set_requires_grad(true);
        }
        return ts;
    }

    gradcheck_result run_case(const case_t& c, int trial_count, uint64_t seed) const {
        gradcheck_result res;
        res.op = c.name;
        res.trials = trial_count;
        for (int trial = 0; trial < trial_count; ++trial) {
            rng r(derive_seed(seed, c.name, static_cast<uint64_t>(trial)));
            const auto vals = draw_inputs(c, r);

            // Reverse-mode gradients in 32-bit.
            auto ins32 = to_tensors<float>(c, vals);
            grad_tape<float> tape;
            tensor<float> out32 = c.f32(&tape, ins32);
            std::vector<double> w(out32.numel());
            for (auto& x : w) x = r.uniform(-1.0, 1.0);
            std::vector<float> w32(w.begin(), w.end());
            tensor<float> loss32 = weighted_sum(&tape, out32, w32);
            tape.backward(loss32);

            // 64-bit evaluation with the activation-pattern signature.
            auto loss64 = [&](const std::vector<std::vector<double>>& v, uint64_t& sig) {
                auto ins = to_tensors<double>(c, v);
                detail::kink_tracking_enabled = true;
                detail::kink_signature = 0;
                tensor<double> out = c.f64(nullptr, ins);
                detail::kink_tracking_enabled = false;
                sig = detail::kink_signature;
                double acc = 0.0;
                for (int64_t i = 0; i < out.numel(); ++i) acc += out[i] * w[i];
                return acc;
            };
            uint64_t sig0 = 0;
            loss64(vals, sig0);

            for (size_t i = 0; i < c.shapes.size(); ++i) {
                const auto* g = tape.find_grad(ins32[i]);
                const int64_t n = static_cast<int64_t>(vals[i].size());
                const int64_t ncheck = std::min<int64_t>(n, 128);
                for (int64_t s = 0; s < ncheck; ++s) {
                    const int64_t j = s * n / ncheck;
                    auto vp = vals;
                    vp[i][j] += kFdStep;
                    uint64_t sp = 0, sm = 0;
                    const double fp = loss64(vp, sp);
                    vp[i][j] = vals[i][j] - kFdStep;
                    const double fm = loss64(vp, sm);
                    if (sp != sig0 || sm != sig0) {
                        ++res.coords_skipped;
                        continue;
                    }
                    ++res.coords_checked;
                    const double fd = (fp - fm) / (2.0 * kFdStep);
                    const double gv = g ? static_cast<double>((*g)[j]) : 0.0;
                    const double rel = std::abs(gv - fd) / std::max(1.0, std::abs(fd));
                    if (rel > res.max_rel_err) res.max_rel_err = rel;
                }
            }
        }
        // A healthy case checks the vast majority of its coordinates.
        const bool coverage_ok = res.coords_checked > 0 && res.coords_checked >= 4 * res.coords_skipped;
        res.pass = coverage_ok && res.max_rel_err < kTolerance;
        return res;
    }

    void register_default_cases();

    std::vector<case_t> cases_;
};

inline void gradcheck_suite::register_default_cases() {
    add("matmul", {{3, 4}, {4, 2}},
        [](auto* t, auto& in) { return matmul(t, in[0], in[1]); });
    add("transpose", {{3, 5}},
        [](auto* t, auto& in) { return transpose(t, in[0]); });
    add("add", {{4, 3}, {4, 3}},
        [](auto* t, auto& in) { return mpt::add(t, in[0], in[1]); });
    add("add_bias_row", {{4, 3}, {3}},
        [](auto* t, auto& in) { return add_bias_row(t, in[0], in[1]); });
    add("scale", {{3, 4}},
        [](auto* t, auto& in) {
            using T = std::decay_t<decltype(in[0][0])>;
            return scale(t, in[0], T(0.37));
        });
    add("relu", {{4, 6}},
        [](auto* t, auto& in) { return relu(t, in[0]); });
    add("softmax_rows", {{3, 6}},
        [](auto* t, auto& in) { return softmax(t, in[0], 1); });
    add("softmax_cols", {{3, 6}},
        [](auto* t, auto& in) { return softmax(t, in[0], 0); });
    add("layernorm", {{3, 8}, {8}, {8}},
        [](auto* t, auto& in) { return layernorm(t, in[0], in[1], in[2]); });
    add("dropout", {{4, 5}},
        [](auto* t, auto& in) {
            rng r(1234567);
            return dropout(t, in[0], 0.3, r, true);
        });
    add("conv2d", {{2, 9, 9}, {3, 2, 3, 3}, {3}},
        [](auto* t, auto& in) { return conv2d(t, in[0], in[1], in[2], 1); });
    add("conv2d_stride2", {{1, 7, 7}, {2, 1, 3, 3}, {2}},
        [](auto* t, auto& in) { return conv2d(t, in[0], in[1], in[2], 2); });
    add("maxpool2d", {{1, 6, 6}},
        [](auto* t, auto& in) { return maxpool2d(t, in[0], 2); });
    add("tokens_from_chw", {{3, 2, 4}},
        [](auto* t, auto& in) { return tokens_from_chw(t, in[0]); });
    add("concat_cols", {{3, 2}, {3, 4}},
        [](auto* t, auto& in) {
            std::vector parts{in[0], in[1]};
            return concat_cols(t, parts);
        });
    add("gather_rows", {{6, 3}},
        [](auto* t, auto& in) { return gather_rows(t, in[0], {4, 0, 2, 2}); });
    add("cross_entropy", {{5, 2}},
        [](auto* t, auto& in) { return cross_entropy(t, in[0], {0, 1, 1, 0, 1}); });

    // Assembled blocks (small widths, same code paths as the full model).
    auto make_msa = [](auto& in, size_t n_heads) {
        using T = std::decay_t<decltype(in[0][0])>;
        msa_params<T> p;
        size_t i = 1;
        for (size_t h = 0; h < n_heads; ++h) {
            p.wq.push_back(in[i++]);
            p.bq.push_back(in[i++]);
            p.wk.push_back(in[i++]);
            p.bk.push_back(in[i++]);
            p.wv.push_back(in[i++]);
            p.bv.push_back(in[i++]);
        }
        p.wo = in[i++];
        p.bo = in[i++];
        return p;
    };
    // x[4 x 6], two heads with d_k=5, d_v=3 -> concat 6 -> back to d_model 6.
    add("msa_block",
        {{4, 6}, {6, 5}, {5}, {6, 5}, {5}, {6, 3}, {3}, {6, 5}, {5}, {6, 5}, {5}, {6, 3}, {3}, {6, 6}, {6}},
        [make_msa](auto* t, auto& in) { return msa_forward(t, in[0], make_msa(in, 2)); });
    add("mlp_block", {{4, 6}, {6, 10}, {10}, {10, 6}, {6}},
        [](auto* t, auto& in) { return mlp_forward(t, in[0], in[1], in[2], in[3], in[4]); });
    add("encoder_layer",
        {{4, 6}, {6, 5}, {5}, {6, 5}, {5}, {6, 3}, {3}, {3, 6}, {6}, // x + single-head msa
         {6}, {6},                                                   // ln1
         {6, 10}, {10}, {10, 6}, {6},                                // mlp
         {6}, {6}},                                                  // ln2
        [make_msa](auto* t, auto& in) {
            using T = std::decay_t<decltype(in[0][0])>;
            encoder_layer_params<T> p;
            p.msa = make_msa(in, 1);
            size_t i = 9;
            p.ln1_gain = in[i++];
            p.ln1_bias = in[i++];
            p.mlp_w1 = in[i++];
            p.mlp_b1 = in[i++];
            p.mlp_w2 = in[i++];
            p.mlp_b2 = in[i++];
            p.ln2_gain = in[i++];
            p.ln2_bias = in[i++];
            return encoder_layer_forward(t, in[0], p, 0.0, nullptr, false);
        });
    // Same topology as the production stack, narrow channels: conv k3 s1 ->
    // pool2 -> relu -> conv k3 s1 -> pool2 -> relu -> conv k3 s3.
    add("feature_extractor",
        {{2, 18, 18}, {3, 2, 3, 3}, {3}, {4, 3, 3, 3}, {4}, {5, 4, 3, 3}, {5}},
        [](auto* t, auto& in) {
            using T = std::decay_t<decltype(in[0][0])>;
            std::vector<fe_layer_spec> specs = {
                fe_layer_spec::make_conv(2, 3, 3, 1), fe_layer_spec::make_pool(2),
                fe_layer_spec::make_relu(),           fe_layer_spec::make_conv(3, 4, 3, 1),
                fe_layer_spec::make_pool(2),          fe_layer_spec::make_relu(),
                fe_layer_spec::make_conv(4, 5, 3, 3)};
            feature_params<T> p;
            p.conv_w = {in[1], in[3], in[5]};
            p.conv_b = {in[2], in[4], in[6]};
            return feature_stack_forward(t, in[0], specs, p);
        },
        0.5);
}

} // namespace mpt
