#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

#include "mpt/costmap.hpp"
#include "mpt/errors.hpp"
#include "mpt/model.hpp"
#include "mpt/planner.hpp"
#include "mpt/rng.hpp"

namespace mpt {

struct anchor_labels {
    std::vector<int64_t> positive;
    std::vector<int64_t> negative;
};

// An anchor is positive when its center lies within radius_m (meters) of any
// segment of the demonstration path; distances use position only.
inline anchor_labels label_anchors(const std::vector<se2_state>& path, const anchor_grid& grid,
                                   double resolution, double radius_m = 0.7) {
    if (path.empty()) throw labeling_error("cannot label anchors from an empty path");
    anchor_labels out;
    auto seg_dist = [](const point2& p, const point2& a, const point2& b) {
        const double vx = b.x - a.x, vy = b.y - a.y;
        const double len2 = vx * vx + vy * vy;
        double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
    };
    for (int64_t t = 0; t < grid.tokens(); ++t) {
        const point2 c = grid.anchor_center_m(t, resolution);
        double dmin = std::numeric_limits<double>::infinity();
        if (path.size() == 1) {
            dmin = dist2d(c, path[0].pos());
        } else {
            for (size_t i = 0; i + 1 < path.size(); ++i)
                dmin = std::min(dmin, seg_dist(c, path[i].pos(), path[i + 1].pos()));
        }
        (dmin <= radius_m ? out.positive : out.negative).push_back(t);
    }
    return out;
}

struct anchor_batch {
    std::vector<int64_t> token_ids;
    std::vector<int> targets; // 1 = path, 0 = background
    bool negatives_with_replacement = false;
};

// 1:2 positive:negative sampling. Positives are capped at max_pos; negatives
// are drawn without replacement when possible, with replacement (flagged)
// when fewer exist. No positives -> the problem is skipped.
inline std::optional<anchor_batch> sample_batch(const anchor_labels& labels, rng& r, int64_t max_pos) {
    if (labels.positive.empty() || labels.negative.empty()) return std::nullopt;
    anchor_batch batch;
    const int64_t n_pos = std::min<int64_t>(static_cast<int64_t>(labels.positive.size()), max_pos);

    auto sample_without_replacement = [&](const std::vector<int64_t>& pool, int64_t k) {
        std::vector<int64_t> idx(pool.size());
        for (size_t i = 0; i < pool.size(); ++i) idx[i] = static_cast<int64_t>(i);
        for (int64_t i = 0; i < k; ++i) {
            const int64_t j = i + r.uniform_int(static_cast<int64_t>(idx.size()) - i);
            std::swap(idx[i], idx[j]);
        }
        std::vector<int64_t> out(k);
        for (int64_t i = 0; i < k; ++i) out[i] = pool[idx[i]];
        return out;
    };

    const auto pos = n_pos == static_cast<int64_t>(labels.positive.size())
                         ? labels.positive
                         : sample_without_replacement(labels.positive, n_pos);
    for (int64_t id : pos) {
        batch.token_ids.push_back(id);
        batch.targets.push_back(1);
    }
    const int64_t n_neg = 2 * n_pos;
    std::vector<int64_t> neg;
    if (static_cast<int64_t>(labels.negative.size()) >= n_neg) {
        neg = sample_without_replacement(labels.negative, n_neg);
    } else {
        batch.negatives_with_replacement = true;
        for (int64_t i = 0; i < n_neg; ++i)
            neg.push_back(labels.negative[r.uniform_int(static_cast<int64_t>(labels.negative.size()))]);
    }
    for (int64_t id : neg) {
        batch.token_ids.push_back(id);
        batch.targets.push_back(0);
    }
    return batch;
}

// Transformer learning-rate schedule: d^-0.5 * min(step^-0.5, step * warmup^-1.5).
inline double lr_at(int64_t step, int64_t d_model, int64_t warmup) {
    if (step < 1) throw training_error("lr_at requires step >= 1");
    const double s = static_cast<double>(step);
    const double w = static_cast<double>(warmup);
    return std::pow(static_cast<double>(d_model), -0.5) * std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

struct train_config {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double epsilon = 1e-9;
    int64_t warmup_steps = 3200;
    int64_t problems_per_step = 8;
    int64_t max_pos = 32;
    int64_t total_steps = 2000;
    double label_radius_m = 0.7;
    double holdout_frac = 0.1;
    int64_t eval_every = 200;
    double eval_tau = 0.5;
    uint64_t seed = 0;
    int threads = 1;

    void validate() const {
        if (beta1 <= 0 || beta2 <= 0 || epsilon <= 0 || warmup_steps < 1 || problems_per_step < 1 ||
            max_pos < 1 || total_steps < 0 || holdout_frac < 0 || holdout_frac >= 1)
            throw config_error("invalid training configuration");
    }
};

struct adam_state {
    std::vector<std::vector<float>> m, v; // per parameter, in registry order
    int64_t t = 0;
};

// Bias-corrected Adam over the model's registered parameters.
inline void adam_step(mpt_model& model, const std::vector<std::vector<float>>& grads, adam_state& state,
                      double lr, const train_config& cfg) {
    const auto& names = model.param_names();
    if (state.m.empty()) {
        for (const auto& name : names) {
            state.m.emplace_back(model.param(name).numel(), 0.0f);
            state.v.emplace_back(model.param(name).numel(), 0.0f);
        }
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (size_t p = 0; p < names.size(); ++p) {
        auto& param = model.param(names[p]);
        auto& m = state.m[p];
        auto& v = state.v[p];
        const auto& g = grads[p];
        for (int64_t i = 0; i < param.numel(); ++i) {
            m[i] = static_cast<float>(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i]);
            v[i] = static_cast<float>(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i]);
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            param[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg.epsilon));
        }
    }
}

struct train_problem {
    int32_t map_index = 0;
    point2 start, goal;
    std::vector<se2_state> path;
};

struct training_set {
    std::vector<costmap> maps;
    std::vector<train_problem> problems;
};

struct step_record {
    int64_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
    double wall_ms = 0.0;
};

struct eval_record {
    int64_t step = 0;
    double precision = 0.0;
    double recall = 0.0;
    double tau = 0.5;
};

struct train_log {
    std::vector<step_record> steps;
    std::vector<eval_record> evals;       // held-out split
    std::vector<eval_record> train_evals; // training split, same cadence
};

struct anchor_metrics {
    double precision = 0.0;
    double recall = 0.0;
    int64_t true_pos = 0, false_pos = 0, false_neg = 0;
};

// Anchor-level precision/recall of thresholded path probabilities against
// the labeling rule, dropout off.
inline anchor_metrics eval_anchor_metrics(const mpt_model& model, const training_set& data,
                                          const std::vector<size_t>& problem_ids, double tau,
                                          double label_radius_m = 0.7) {
    anchor_metrics m;
    for (size_t pid : problem_ids) {
        const auto& prob = data.problems[pid];
        const auto& map = data.maps[prob.map_index];
        auto fw = model.forward(nullptr, map, prob.start, prob.goal, false, nullptr);
        const auto probs = mpt_model::path_probabilities(fw.logits);
        const auto labels = label_anchors(prob.path, fw.grid, map.resolution, label_radius_m);
        std::vector<uint8_t> is_pos(fw.grid.tokens(), 0);
        for (int64_t t : labels.positive) is_pos[t] = 1;
        for (int64_t t = 0; t < fw.grid.tokens(); ++t) {
            const bool pred = probs[t] >= tau;
            if (pred && is_pos[t]) ++m.true_pos;
            else if (pred && !is_pos[t]) ++m.false_pos;
            else if (!pred && is_pos[t]) ++m.false_neg;
        }
    }
    m.precision = m.true_pos + m.false_pos > 0
                      ? static_cast<double>(m.true_pos) / (m.true_pos + m.false_pos)
                      : 0.0;
    m.recall = m.true_pos + m.false_neg > 0
                   ? static_cast<double>(m.true_pos) / (m.true_pos + m.false_neg)
                   : 0.0;
    return m;
}

namespace detail {

struct problem_cache {
    tensor<float> encoded; // query channels, cropped
    anchor_labels labels;
    bool usable = false;
};

} // namespace detail

// Training loop: every optimizer step accumulates gradients from
// problems_per_step forward/backward passes (averaged), then applies Adam
// with the warm-up schedule. Per-problem work is derived from
// (seed, step, slot) alone and reduced in slot order, so results are
// identical for any thread count.
inline train_log train(const training_set& data, mpt_model& model, const train_config& cfg,
                       const std::function<bool(const step_record&)>& on_step = {},
                       const std::function<void(const eval_record&, bool holdout)>& on_eval = {}) {
    cfg.validate();
    if (data.problems.empty()) throw training_error("training set is empty");

    // Holdout split by seeded shuffle.
    std::vector<size_t> order(data.problems.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng shuffle_rng(derive_seed(cfg.seed, "holdout-split"));
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.uniform_int(static_cast<int64_t>(i))]);
    const size_t n_holdout = std::min(data.problems.size() - 1,
                                      static_cast<size_t>(std::llround(cfg.holdout_frac * order.size())));
    std::vector<size_t> holdout_ids(order.begin(), order.begin() + n_holdout);
    std::vector<size_t> train_ids(order.begin() + n_holdout, order.end());

    // Precompute query encodings and labels once per problem.
    std::vector<detail::problem_cache> cache(data.problems.size());
    std::vector<size_t> usable_train;
    for (size_t pid : train_ids) {
        const auto& prob = data.problems[pid];
        const auto& map = data.maps[prob.map_index];
        const anchor_grid grid = model.grid_for(map);
        auto& c = cache[pid];
        c.encoded = encode_query(map, prob.start, prob.goal, model.config().patch_px, grid.crop_h, grid.crop_w);
        c.labels = label_anchors(prob.path, grid, map.resolution, cfg.label_radius_m);
        c.usable = !c.labels.positive.empty() && !c.labels.negative.empty();
        if (c.usable) usable_train.push_back(pid);
    }
    if (usable_train.empty()) throw training_error("no training problem has positive anchors");

    const auto& names = model.param_names();
    adam_state opt;
    train_log log;

    struct slot_result {
        std::vector<std::vector<float>> grads;
        double loss = 0.0;
        bool skipped = false;
    };

    for (int64_t step = 1; step <= cfg.total_steps; ++step) {
        const auto step_start = std::chrono::steady_clock::now();
        std::vector<slot_result> slots(cfg.problems_per_step);

        auto run_slot = [&](int64_t slot) {
            rng sr(derive_seed(cfg.seed, "step-slot", static_cast<uint64_t>(step) * 10007 + slot));
            const size_t pid = usable_train[sr.uniform_int(static_cast<int64_t>(usable_train.size()))];
            auto& c = cache[pid];
            auto batch = sample_batch(c.labels, sr, cfg.max_pos);
            auto& out = slots[slot];
            if (!batch) {
                out.skipped = true;
                return;
            }
            grad_tape<float> tape;
            rng dropout_rng(derive_seed(cfg.seed, "dropout", static_cast<uint64_t>(step) * 10007 + slot));
            tensor<float> tokens = model.extract_features(&tape, c.encoded);
            tensor<float> encoded = model.encode_tokens(&tape, tokens, true, &dropout_rng);
            tensor<float> logits = model.classify_anchors(&tape, encoded);
            tensor<float> picked = gather_rows(&tape, logits, batch->token_ids);
            tensor<float> loss = cross_entropy(&tape, picked, batch->targets);
            tape.backward(loss);
            out.loss = loss[0];
            out.grads.reserve(names.size());
            for (const auto& name : names) {
                const auto* g = tape.find_grad(model.param(name));
                if (g)
                    out.grads.push_back(*g);
                else
                    out.grads.emplace_back(model.param(name).numel(), 0.0f);
            }
        };

        if (cfg.threads > 1) {
            std::atomic<int64_t> next{0};
            std::vector<std::thread> workers;
            const int nw = std::min<int>(cfg.threads, static_cast<int>(cfg.problems_per_step));
            for (int w = 0; w < nw; ++w)
                workers.emplace_back([&]() {
                    for (int64_t s = next.fetch_add(1); s < cfg.problems_per_step; s = next.fetch_add(1))
                        run_slot(s);
                });
            for (auto& w : workers) w.join();
        } else {
            for (int64_t s = 0; s < cfg.problems_per_step; ++s) run_slot(s);
        }

        // Fixed-order reduction over slots.
        std::vector<std::vector<float>> grads;
        for (const auto& name : names) grads.emplace_back(model.param(name).numel(), 0.0f);
        double loss_sum = 0.0;
        int64_t n_used = 0;
        for (const auto& slot : slots) {
            if (slot.skipped) continue;
            ++n_used;
            loss_sum += slot.loss;
            for (size_t p = 0; p < grads.size(); ++p)
                for (size_t i = 0; i < grads[p].size(); ++i) grads[p][i] += slot.grads[p][i];
        }
        if (n_used == 0) continue;
        for (auto& g : grads)
            for (auto& v : g) v /= static_cast<float>(n_used);

        const double loss = loss_sum / n_used;
        if (!std::isfinite(loss))
            throw training_error("loss became non-finite at step " + std::to_string(step));

        const double lr = lr_at(step, model.config().d_model, cfg.warmup_steps);
        adam_step(model, grads, opt, lr, cfg);

        step_record rec{step, lr, loss,
                        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                  step_start)
                            .count()};
        log.steps.push_back(rec);

        if (cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == cfg.total_steps)) {
            if (!holdout_ids.empty()) {
                const auto m = eval_anchor_metrics(model, data, holdout_ids, cfg.eval_tau, cfg.label_radius_m);
                eval_record er{step, m.precision, m.recall, cfg.eval_tau};
                log.evals.push_back(er);
                if (on_eval) on_eval(er, true);
            }
            const auto mt = eval_anchor_metrics(model, data, usable_train, cfg.eval_tau, cfg.label_radius_m);
            eval_record ert{step, mt.precision, mt.recall, cfg.eval_tau};
            log.train_evals.push_back(ert);
            if (on_eval) on_eval(ert, false);
        }

        if (on_step && on_step(rec)) break;
    }
    return log;
}

} // namespace mpt
