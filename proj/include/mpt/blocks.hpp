#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "mpt/tensor.hpp"

namespace mpt {

// ---------------------------------------------------------------------------
// Multi-headed self-attention
// ---------------------------------------------------------------------------

// Per-head projection widths are independent of d_model: each head projects
// queries/keys to d_k and values to d_v, the head outputs are concatenated
// (n_heads * d_v) and projected back to d_model.
template <class T>
struct msa_params {
    std::vector<tensor<T>> wq, bq; // per head: [d_model x d_k], [d_k]
    std::vector<tensor<T>> wk, bk;
    std::vector<tensor<T>> wv, bv; // [d_model x d_v], [d_v]
    tensor<T> wo, bo;              // [n_heads*d_v x d_model], [d_model]
};

template <class T>
tensor<T> msa_forward(grad_tape<T>* tape, const tensor<T>& x, const msa_params<T>& p,
                      std::vector<tensor<T>>* attn_out = nullptr) {
    const size_t n_heads = p.wq.size();
    std::vector<tensor<T>> heads;
    heads.reserve(n_heads);
    for (size_t h = 0; h < n_heads; ++h) {
        const int64_t d_k = p.wq[h].dim(1);
        tensor<T> q = add_bias_row(tape, matmul(tape, x, p.wq[h]), p.bq[h]);
        tensor<T> k = add_bias_row(tape, matmul(tape, x, p.wk[h]), p.bk[h]);
        tensor<T> v = add_bias_row(tape, matmul(tape, x, p.wv[h]), p.bv[h]);
        tensor<T> scores =
            scale(tape, matmul(tape, q, transpose(tape, k)), T(1) / std::sqrt(static_cast<T>(d_k)));
        tensor<T> attn = softmax(tape, scores, 1);
        if (attn_out) attn_out->push_back(attn);
        heads.push_back(matmul(tape, attn, v));
    }
    tensor<T> cat = n_heads == 1 ? heads[0] : concat_cols(tape, heads);
    return add_bias_row(tape, matmul(tape, cat, p.wo), p.bo);
}

// Two linear layers with a ReLU in between.
template <class T>
tensor<T> mlp_forward(grad_tape<T>* tape, const tensor<T>& x, const tensor<T>& w1, const tensor<T>& b1,
                      const tensor<T>& w2, const tensor<T>& b2) {
    tensor<T> h = relu(tape, add_bias_row(tape, matmul(tape, x, w1), b1));
    return add_bias_row(tape, matmul(tape, h, w2), b2);
}

template <class T>
struct encoder_layer_params {
    msa_params<T> msa;
    tensor<T> ln1_gain, ln1_bias;
    tensor<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    tensor<T> ln2_gain, ln2_bias;
};

// One encoder block: MSA -> dropout -> residual -> layernorm, then
// MLP -> dropout -> residual -> layernorm. Inference (training=false)
// consumes no rng draws.
template <class T>
tensor<T> encoder_layer_forward(grad_tape<T>* tape, const tensor<T>& x, const encoder_layer_params<T>& p,
                                double dropout_rate, rng* r, bool training,
                                std::vector<tensor<T>>* attn_out = nullptr) {
    tensor<T> a = msa_forward(tape, x, p.msa, attn_out);
    if (training && r) a = dropout(tape, a, dropout_rate, *r, true);
    tensor<T> y = layernorm(tape, add(tape, x, a), p.ln1_gain, p.ln1_bias);
    tensor<T> m = mlp_forward(tape, y, p.mlp_w1, p.mlp_b1, p.mlp_w2, p.mlp_b2);
    if (training && r) m = dropout(tape, m, dropout_rate, *r, true);
    return layernorm(tape, add(tape, y, m), p.ln2_gain, p.ln2_bias);
}

template <class T>
tensor<T> encoder_forward(grad_tape<T>* tape, const tensor<T>& tokens,
                          const std::vector<encoder_layer_params<T>>& layers, double dropout_rate,
                          rng* r, bool training, std::vector<tensor<T>>* attn_out = nullptr) {
    tensor<T> x = tokens;
    for (const auto& layer : layers)
        x = encoder_layer_forward(tape, x, layer, dropout_rate, r, training, attn_out);
    return x;
}

// ---------------------------------------------------------------------------
// Convolutional feature extractor
// ---------------------------------------------------------------------------

struct fe_layer_spec {
    enum kind_t { conv, pool, relu_act } kind = conv;
    int64_t in_ch = 0, out_ch = 0, kernel = 0, stride = 1; // conv
    int64_t pool_k = 0;                                    // pool

    static fe_layer_spec make_conv(int64_t in, int64_t out, int64_t k, int64_t s) {
        fe_layer_spec l;
        l.kind = conv;
        l.in_ch = in;
        l.out_ch = out;
        l.kernel = k;
        l.stride = s;
        return l;
    }
    static fe_layer_spec make_pool(int64_t k) {
        fe_layer_spec l;
        l.kind = pool;
        l.pool_k = k;
        return l;
    }
    static fe_layer_spec make_relu() {
        fe_layer_spec l;
        l.kind = relu_act;
        return l;
    }
};

// Spatial extent after the stack; throws if the input is too small or a pool
// does not divide evenly (callers crop to a compatible extent first).
inline int64_t fe_output_extent(const std::vector<fe_layer_spec>& layers, int64_t n) {
    for (const auto& l : layers) {
        if (l.kind == fe_layer_spec::conv) {
            if (n < l.kernel)
                throw shape_error("feature extractor input extent " + std::to_string(n) +
                                  " smaller than kernel " + std::to_string(l.kernel));
            n = (n - l.kernel) / l.stride + 1;
        } else if (l.kind == fe_layer_spec::pool) {
            if (n % l.pool_k != 0)
                throw shape_error("pool extent " + std::to_string(n) + " not divisible by " +
                                  std::to_string(l.pool_k));
            n /= l.pool_k;
        }
    }
    return n;
}

inline bool fe_extent_compatible(const std::vector<fe_layer_spec>& layers, int64_t n) {
    for (const auto& l : layers) {
        if (l.kind == fe_layer_spec::conv) {
            if (n < l.kernel) return false;
            n = (n - l.kernel) / l.stride + 1;
        } else if (l.kind == fe_layer_spec::pool) {
            if (n % l.pool_k != 0) return false;
            n /= l.pool_k;
        }
    }
    return true;
}

// Largest n' <= n the stack accepts without padding or uneven pooling.
inline int64_t fe_compatible_extent(const std::vector<fe_layer_spec>& layers, int64_t n) {
    for (int64_t c = n; c >= 1; --c)
        if (fe_extent_compatible(layers, c)) return c;
    throw shape_error("map extent " + std::to_string(n) + " too small for the feature extractor");
}

inline int64_t fe_total_stride(const std::vector<fe_layer_spec>& layers) {
    int64_t s = 1;
    for (const auto& l : layers) {
        if (l.kind == fe_layer_spec::conv) s *= l.stride;
        if (l.kind == fe_layer_spec::pool) s *= l.pool_k;
    }
    return s;
}

// Receptive field of one output cell, folded back through the stack:
// r_in = (r_out - 1) * stride + kernel.
inline int64_t fe_receptive_field(const std::vector<fe_layer_spec>& layers) {
    int64_t r = 1;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
        if (it->kind == fe_layer_spec::conv) r = (r - 1) * it->stride + it->kernel;
        if (it->kind == fe_layer_spec::pool) r = (r - 1) * it->pool_k + it->pool_k;
    }
    return r;
}

template <class T>
struct feature_params {
    std::vector<tensor<T>> conv_w, conv_b; // one entry per conv layer, in order
};

template <class T>
tensor<T> feature_stack_forward(grad_tape<T>* tape, const tensor<T>& x,
                                const std::vector<fe_layer_spec>& layers, const feature_params<T>& p) {
    tensor<T> h = x;
    size_t ci = 0;
    for (const auto& l : layers) {
        switch (l.kind) {
            case fe_layer_spec::conv:
                h = conv2d(tape, h, p.conv_w.at(ci), p.conv_b.at(ci), l.stride);
                ++ci;
                break;
            case fe_layer_spec::pool:
                h = maxpool2d(tape, h, l.pool_k);
                break;
            case fe_layer_spec::relu_act:
                h = relu(tape, h);
                break;
        }
    }
    return h;
}

} // namespace mpt
