#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mpt/errors.hpp"
#include "mpt/rng.hpp"

namespace mpt {

using shape_t = std::vector<int64_t>;

inline int64_t numel_of(const shape_t& s) {
    return std::accumulate(s.begin(), s.end(), int64_t{1}, std::multiplies<>());
}

inline std::string shape_str(const shape_t& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

namespace detail {

// Gradcheck instrumentation: when enabled, piecewise-linear ops (relu,
// maxpool) fold their branch decisions into a running signature. Two forward
// passes with the same signature lie on the same linear piece, so a central
// difference between them is a valid derivative estimate.
inline thread_local bool kink_tracking_enabled = false;
inline thread_local uint64_t kink_signature = 0;

inline void note_branch(uint64_t v) {
    kink_signature = (kink_signature ^ (v + 0x9e3779b97f4a7c15ULL)) * 0x100000001b3ULL;
}

} // namespace detail

// Dense row-major array, shared-storage value handle. Values are written
// once per forward op; gradients live on the tape, not the tensor.
template <class T>
class tensor {
public:
    tensor() = default;

    explicit tensor(shape_t shape, T fill = T(0))
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(check_numel(shape_), fill)) {}

    tensor(shape_t shape, std::vector<T> values) : shape_(std::move(shape)) {
        if (static_cast<int64_t>(values.size()) != check_numel(shape_))
            throw shape_error("data length " + std::to_string(values.size()) +
                              " does not match shape " + shape_str(shape_));
        data_ = std::make_shared<std::vector<T>>(std::move(values));
    }

    static tensor zeros(shape_t shape) { return tensor(std::move(shape), T(0)); }

    static tensor full(shape_t shape, T v) { return tensor(std::move(shape), v); }

    static tensor uniform(shape_t shape, rng& r, double lo, double hi, bool requires_grad = false) {
        tensor t(std::move(shape));
        for (auto& v : *t.data_) v = static_cast<T>(r.uniform(lo, hi));
        t.requires_grad_ = requires_grad;
        return t;
    }

    bool defined() const { return static_cast<bool>(data_); }
    const shape_t& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_.at(i); }
    size_t ndim() const { return shape_.size(); }
    int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

    T* data() { return data_->data(); }
    const T* data() const { return data_->data(); }
    std::vector<T>& vec() { return *data_; }
    const std::vector<T>& vec() const { return *data_; }

    T& operator[](int64_t i) { return (*data_)[i]; }
    const T& operator[](int64_t i) const { return (*data_)[i]; }

    T& at(int64_t i, int64_t j) { return (*data_)[i * shape_[1] + j]; }
    const T& at(int64_t i, int64_t j) const { return (*data_)[i * shape_[1] + j]; }

    bool requires_grad() const { return requires_grad_; }
    tensor& set_requires_grad(bool b) {
        requires_grad_ = b;
        return *this;
    }

    // Identity of the underlying buffer; used as the tape's gradient key.
    const void* key() const { return data_.get(); }

    tensor clone() const {
        tensor t;
        t.shape_ = shape_;
        t.data_ = std::make_shared<std::vector<T>>(*data_);
        t.requires_grad_ = requires_grad_;
        return t;
    }

private:
    int64_t check_numel(const shape_t& s) const {
        for (auto e : s)
            if (e <= 0) throw shape_error("non-positive extent in shape " + shape_str(s));
        return numel_of(s);
    }

    shape_t shape_;
    std::shared_ptr<std::vector<T>> data_;
    bool requires_grad_ = false;
};

// Reverse-mode tape. Ops append closures in execution order; backward()
// replays them strictly in reverse. Gradient buffers are owned by the tape
// and keyed by storage identity, so concurrent tapes over the same frozen
// parameters never touch each other.
template <class T>
class grad_tape {
public:
    bool tracks(const tensor<T>& t) const { return t.requires_grad(); }

    std::vector<T>& grad(const tensor<T>& t) {
        auto it = grads_.find(t.key());
        if (it == grads_.end()) {
            auto buf = std::make_shared<std::vector<T>>(t.numel(), T(0));
            it = grads_.emplace(t.key(), std::move(buf)).first;
        }
        return *it->second;
    }

    const std::vector<T>* find_grad(const tensor<T>& t) const {
        auto it = grads_.find(t.key());
        return it == grads_.end() ? nullptr : it->second.get();
    }

    void record(std::function<void()> fn) { steps_.emplace_back(std::move(fn)); }

    size_t size() const { return steps_.size(); }

    // Seeds d(loss)/d(loss) = 1 for every element of `loss` (callers use
    // scalar losses) and accumulates into every tracked tensor reachable
    // backwards from it.
    void backward(const tensor<T>& loss) {
        auto& g = grad(loss);
        std::fill(g.begin(), g.end(), T(1));
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> steps_;
    std::unordered_map<const void*, std::shared_ptr<std::vector<T>>> grads_;
};

namespace detail {

template <class T>
inline void check_finite(const tensor<T>& t, const char* op) {
#ifndef NDEBUG
    for (int64_t i = 0; i < t.numel(); ++i)
        if (!std::isfinite(static_cast<double>(t[i])))
            throw std::runtime_error(std::string("non-finite output of ") + op);
#else
    (void)t;
    (void)op;
#endif
}

// C[m x n] += A[m x k] * B[k x n], row-major. i-k-j order keeps the inner
// loop contiguous for the vectorizer.
template <class T>
inline void gemm_acc(int64_t m, int64_t k, int64_t n, const T* a, const T* b, T* c) {
    for (int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x n] += A^T[m x k] * B[k x n] where A is stored [k x m].
template <class T>
inline void gemm_at_b_acc(int64_t m, int64_t k, int64_t n, const T* a, const T* b, T* c) {
    for (int64_t p = 0; p < k; ++p) {
        const T* arow = a + p * m;
        const T* brow = b + p * n;
        for (int64_t i = 0; i < m; ++i) {
            const T av = arow[i];
            if (av == T(0)) continue;
            T* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x n] += A[m x k] * B^T[k x n] where B is stored [n x k].
template <class T>
inline void gemm_a_bt_acc(int64_t m, int64_t k, int64_t n, const T* a, const T* b, T* c) {
    for (int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            T acc = T(0);
            for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise / linear algebra ops
// ---------------------------------------------------------------------------

template <class T>
tensor<T> matmul(grad_tape<T>* tape, const tensor<T>& a, const tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw shape_error("matmul expects 2-d operands, got " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()));
    if (a.dim(1) != b.dim(0))
        throw shape_error("matmul inner dims differ: " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    tensor<T> out({m, n});
    detail::gemm_acc(m, k, n, a.data(), b.data(), out.data());
    detail::check_finite(out, "matmul");
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tensor<T> ac = a, bc = b, oc = out;
        tape->record([tape, ac, bc, oc, m, k, n]() {
            const auto& g = tape->grad(oc);
            if (ac.requires_grad()) // da = g * b^T
                detail::gemm_a_bt_acc(m, n, k, g.data(), bc.data(), tape->grad(ac).data());
            if (bc.requires_grad()) // db = a^T * g
                detail::gemm_at_b_acc(k, m, n, ac.data(), g.data(), tape->grad(bc).data());
        });
    }
    return out;
}

template <class T>
tensor<T> transpose(grad_tape<T>* tape, const tensor<T>& a) {
    if (a.ndim() != 2) throw shape_error("transpose expects 2-d tensor");
    const int64_t m = a.dim(0), n = a.dim(1);
    tensor<T> out({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        tensor<T> ac = a, oc = out;
        tape->record([tape, ac, oc, m, n]() {
            const auto& g = tape->grad(oc);
            auto& ga = tape->grad(ac);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
        });
    }
    return out;
}

template <class T>
tensor<T> add(grad_tape<T>* tape, const tensor<T>& a, const tensor<T>& b) {
    if (a.shape() != b.shape())
        throw shape_error("add shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    tensor<T> out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tensor<T> ac = a, bc = b, oc = out;
        tape->record([tape, ac, bc, oc]() {
            const auto& g = tape->grad(oc);
            if (ac.requires_grad()) {
                auto& ga = tape->grad(ac);
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bc.requires_grad()) {
                auto& gb = tape->grad(bc);
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

// a[n x d] + row vector b[d], broadcast over rows.
template <class T>
tensor<T> add_bias_row(grad_tape<T>* tape, const tensor<T>& a, const tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 1 || a.dim(1) != b.dim(0))
        throw shape_error("add_bias_row expects [n x d] + [d]");
    const int64_t n = a.dim(0), d = a.dim(1);
    tensor<T> out({n, d});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) out.at(i, j) = a.at(i, j) + b[j];
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tensor<T> ac = a, bc = b, oc = out;
        tape->record([tape, ac, bc, oc, n, d]() {
            const auto& g = tape->grad(oc);
            if (ac.requires_grad()) {
                auto& ga = tape->grad(ac);
                for (int64_t i = 0; i < n * d; ++i) ga[i] += g[i];
            }
            if (bc.requires_grad()) {
                auto& gb = tape->grad(bc);
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
            }
        });
    }
    return out;
}

template <class T>
tensor<T> scale(grad_tape<T>* tape, const tensor<T>& a, T c) {
    tensor<T> out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * c;
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        tensor<T> ac = a, oc = out;
        tape->record([tape, ac, oc, c]() {
            const auto& g = tape->grad(oc);
            auto& ga = tape->grad(ac);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
        });
    }
    return out;
}

template <class T>
tensor<T> relu(grad_tape<T>* tape, const tensor<T>& a) {
    tensor<T> out(a.shape());
    const bool kt = detail::kink_tracking_enabled;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const bool on = a[i] > T(0);
        if (kt) detail::note_branch(on);
        out[i] = on ? a[i] : T(0);
    }
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        tensor<T> ac = a, oc = out;
        tape->record([tape, ac, oc]() {
            const auto& g = tape->grad(oc);
            auto& ga = tape->grad(ac);
            for (int64_t i = 0; i < ac.numel(); ++i)
                if (ac[i] > T(0)) ga[i] += g[i];
        });
    }
    return out;
}

// Softmax over `axis` of a 2-d tensor (axis 1 = per row).
template <class T>
tensor<T> softmax(grad_tape<T>* tape, const tensor<T>& a, int axis = 1) {
    if (a.ndim() != 2 || (axis != 0 && axis != 1)) throw shape_error("softmax expects 2-d tensor, axis 0/1");
    const int64_t rows = axis == 1 ? a.dim(0) : a.dim(1);
    const int64_t cols = axis == 1 ? a.dim(1) : a.dim(0);
    const int64_t rs = axis == 1 ? a.dim(1) : 1;       // stride between lanes of one group
    const int64_t cs = axis == 1 ? 1 : a.dim(1);       // stride within a group
    tensor<T> out(a.shape());
    for (int64_t r = 0; r < rows; ++r) {
        const T* in = a.data() + r * rs;
        T* o = out.data() + r * rs;
        T mx = in[0];
        for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, in[c * cs]);
        T sum = T(0);
        for (int64_t c = 0; c < cols; ++c) {
            const T e = std::exp(in[c * cs] - mx);
            o[c * cs] = e;
            sum += e;
        }
        for (int64_t c = 0; c < cols; ++c) o[c * cs] /= sum;
    }
    detail::check_finite(out, "softmax");
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        tensor<T> ac = a, oc = out;
        tape->record([tape, ac, oc, rows, cols, rs, cs]() {
            const auto& g = tape->grad(oc);
            auto& ga = tape->grad(ac);
            for (int64_t r = 0; r < rows; ++r) {
                const T* y = oc.data() + r * rs;
                const T* gr = g.data() + r * rs;
                T dot = T(0);
                for (int64_t c = 0; c < cols; ++c) dot += y[c * cs] * gr[c * cs];
                for (int64_t c = 0; c < cols; ++c)
                    ga[r * rs + c * cs] += y[c * cs] * (gr[c * cs] - dot);
            }
        });
    }
    return out;
}

// Layer normalization over the feature axis (axis 1) of [n x d], followed by
// the per-feature affine (gain, bias). Epsilon 1e-5.
template <class T>
tensor<T> layernorm(grad_tape<T>* tape, const tensor<T>& a, const tensor<T>& gain, const tensor<T>& bias) {
    if (a.ndim() != 2 || gain.ndim() != 1 || bias.ndim() != 1 || gain.dim(0) != a.dim(1) ||
        bias.dim(0) != a.dim(1))
        throw shape_error("layernorm expects x[n x d], gain[d], bias[d]");
    const int64_t n = a.dim(0), d = a.dim(1);
    const T eps = T(1e-5);
    tensor<T> out({n, d});
    tensor<T> xhat({n, d});
    std::vector<T> inv_std(n);
    for (int64_t i = 0; i < n; ++i) {
        const T* x = a.data() + i * d;
        T mean = T(0);
        for (int64_t j = 0; j < d; ++j) mean += x[j];
        mean /= static_cast<T>(d);
        T var = T(0);
        for (int64_t j = 0; j < d; ++j) {
            const T c = x[j] - mean;
            var += c * c;
        }
        var /= static_cast<T>(d);
        const T is = T(1) / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int64_t j = 0; j < d; ++j) {
            const T h = (x[j] - mean) * is;
            xhat.at(i, j) = h;
            out.at(i, j) = h * gain[j] + bias[j];
        }
    }
    detail::check_finite(out, "layernorm");
    if (tape && (a.requires_grad() || gain.requires_grad() || bias.requires_grad())) {
        out.set_requires_grad(true);
        tensor<T> ac = a, gc = gain, bc = bias, oc = out, xh = xhat;
        auto istd = std::make_shared<std::vector<T>>(std::move(inv_std));
        tape->record([tape, ac, gc, bc, oc, xh, istd, n, d]() {
            const auto& g = tape->grad(oc);
            if (gc.requires_grad()) {
                auto& gg = tape->grad(gc);
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * xh.at(i, j);
            }
            if (bc.requires_grad()) {
                auto& gb = tape->grad(bc);
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
            }
            if (ac.requires_grad()) {
                auto& ga = tape->grad(ac);
                for (int64_t i = 0; i < n; ++i) {
                    // dxhat = g * gain; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat)) * inv_std
                    T s1 = T(0), s2 = T(0);
                    for (int64_t j = 0; j < d; ++j) {
                        const T dxh = g[i * d + j] * gc[j];
                        s1 += dxh;
                        s2 += dxh * xh.at(i, j);
                    }
                    s1 /= static_cast<T>(d);
                    s2 /= static_cast<T>(d);
                    for (int64_t j = 0; j < d; ++j) {
                        const T dxh = g[i * d + j] * gc[j];
                        ga[i * d + j] += (dxh - s1 - xh.at(i, j) * s2) * (*istd)[i];
                    }
                }
            }
        });
    }
    return out;
}

// Inverted dropout: kept units scale by 1/(1-rate) during training, identity
// otherwise. The mask is a pure function of the rng stream.
template <class T>
tensor<T> dropout(grad_tape<T>* tape, const tensor<T>& a, double rate, rng& r, bool training) {
    if (rate < 0.0 || rate >= 1.0) throw config_error("dropout rate must be in [0,1)");
    if (!training || rate == 0.0) return a;
    tensor<T> out(a.shape());
    auto mask = std::make_shared<std::vector<uint8_t>>(a.numel());
    const T s = T(1.0 / (1.0 - rate));
    for (int64_t i = 0; i < a.numel(); ++i) {
        const bool keep = r.uniform() >= rate;
        (*mask)[i] = keep;
        out[i] = keep ? a[i] * s : T(0);
    }
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        tensor<T> ac = a, oc = out;
        tape->record([tape, ac, oc, mask, s]() {
            const auto& g = tape->grad(oc);
            auto& ga = tape->grad(ac);
            for (size_t i = 0; i < g.size(); ++i)
                if ((*mask)[i]) ga[i] += g[i] * s;
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Convolution stack ops
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void im2col(const T* x, int64_t cin, int64_t h, int64_t w, int64_t k, int64_t stride, int64_t oh,
            int64_t ow, T* col) {
    // col layout: [cin*k*k][oh*ow]
    const int64_t plane = oh * ow;
    for (int64_t c = 0; c < cin; ++c)
        for (int64_t ky = 0; ky < k; ++ky)
            for (int64_t kx = 0; kx < k; ++kx) {
                T* dst = col + ((c * k + ky) * k + kx) * plane;
                for (int64_t oy = 0; oy < oh; ++oy) {
                    const T* src = x + c * h * w + (oy * stride + ky) * w + kx;
                    for (int64_t ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = src[ox * stride];
                }
            }
}

template <class T>
void col2im_acc(const T* col, int64_t cin, int64_t h, int64_t w, int64_t k, int64_t stride,
                int64_t oh, int64_t ow, T* x) {
    const int64_t plane = oh * ow;
    for (int64_t c = 0; c < cin; ++c)
        for (int64_t ky = 0; ky < k; ++ky)
            for (int64_t kx = 0; kx < k; ++kx) {
                const T* src = col + ((c * k + ky) * k + kx) * plane;
                for (int64_t oy = 0; oy < oh; ++oy) {
                    T* dst = x + c * h * w + (oy * stride + ky) * w + kx;
                    for (int64_t ox = 0; ox < ow; ++ox) dst[ox * stride] += src[oy * ow + ox];
                }
            }
}

} // namespace detail

// Valid (unpadded) 2-d convolution: x[cin x h x w], w[cout x cin x k x k],
// b[cout], output [cout x h' x w'] with h' = floor((h-k)/stride)+1.
template <class T>
tensor<T> conv2d(grad_tape<T>* tape, const tensor<T>& x, const tensor<T>& w, const tensor<T>& b,
                 int64_t stride) {
    if (x.ndim() != 3 || w.ndim() != 4 || b.ndim() != 1)
        throw shape_error("conv2d expects x[c x h x w], w[o x c x k x k], b[o]");
    const int64_t cin = x.dim(0), h = x.dim(1), ww = x.dim(2);
    const int64_t cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != cin || w.dim(3) != k || b.dim(0) != cout)
        throw shape_error("conv2d weight/bias shapes inconsistent with input");
    if (stride < 1) throw shape_error("conv2d stride must be >= 1");
    if (h < k || ww < k)
        throw shape_error("conv2d kernel " + std::to_string(k) + " larger than input " +
                          shape_str(x.shape()));
    const int64_t oh = (h - k) / stride + 1;
    const int64_t ow = (ww - k) / stride + 1;
    const int64_t ck2 = cin * k * k, plane = oh * ow;

    auto col = std::make_shared<std::vector<T>>(ck2 * plane);
    detail::im2col(x.data(), cin, h, ww, k, stride, oh, ow, col->data());

    tensor<T> out({cout, oh, ow});
    for (int64_t o = 0; o < cout; ++o) {
        T* dst = out.data() + o * plane;
        const T bv = b[o];
        for (int64_t i = 0; i < plane; ++i) dst[i] = bv;
    }
    detail::gemm_acc(cout, ck2, plane, w.data(), col->data(), out.data());
    detail::check_finite(out, "conv2d");

    if (tape && (x.requires_grad() || w.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tensor<T> xc = x, wc = w, bc = b, oc = out;
        tape->record([tape, xc, wc, bc, oc, col, cin, h, ww, k, stride, oh, ow, cout, ck2, plane]() {
            const auto& g = tape->grad(oc);
            if (bc.requires_grad()) {
                auto& gb = tape->grad(bc);
                for (int64_t o = 0; o < cout; ++o)
                    for (int64_t i = 0; i < plane; ++i) gb[o] += g[o * plane + i];
            }
            if (wc.requires_grad()) // dw = g[cout x plane] * col^T[plane x ck2]
                detail::gemm_a_bt_acc(cout, plane, ck2, g.data(), col->data(), tape->grad(wc).data());
            if (xc.requires_grad()) { // dcol = w^T * g, then scatter back
                std::vector<T> dcol(ck2 * plane, T(0));
                detail::gemm_at_b_acc(ck2, cout, plane, wc.data(), g.data(), dcol.data());
                detail::col2im_acc(dcol.data(), cin, h, ww, k, stride, oh, ow, tape->grad(xc).data());
            }
        });
    }
    return out;
}

// Max pooling with window k, stride k. Extents must be divisible by k; the
// caller crops beforehand. Ties route the gradient to the first element in
// row-major window order.
template <class T>
tensor<T> maxpool2d(grad_tape<T>* tape, const tensor<T>& x, int64_t k) {
    if (x.ndim() != 3) throw shape_error("maxpool2d expects x[c x h x w]");
    const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (k < 1 || h % k != 0 || w % k != 0)
        throw shape_error("maxpool2d extents " + shape_str(x.shape()) + " not divisible by " +
                          std::to_string(k));
    const int64_t oh = h / k, ow = w / k;
    tensor<T> out({c, oh, ow});
    auto argmax = std::make_shared<std::vector<int64_t>>(c * oh * ow);
    const bool kt = detail::kink_tracking_enabled;
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                T best = -std::numeric_limits<T>::infinity();
                int64_t best_idx = -1;
                for (int64_t ky = 0; ky < k; ++ky)
                    for (int64_t kx = 0; kx < k; ++kx) {
                        const int64_t idx = ch * h * w + (oy * k + ky) * w + (ox * k + kx);
                        if (x[idx] > best) {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                if (kt) detail::note_branch(static_cast<uint64_t>(best_idx));
                out[(ch * oh + oy) * ow + ox] = best;
                (*argmax)[(ch * oh + oy) * ow + ox] = best_idx;
            }
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tensor<T> xc = x, oc = out;
        tape->record([tape, xc, oc, argmax]() {
            const auto& g = tape->grad(oc);
            auto& gx = tape->grad(xc);
            for (size_t i = 0; i < g.size(); ++i) gx[(*argmax)[i]] += g[i];
        });
    }
    return out;
}

// [c x h x w] -> [(h*w) x c]: row t holds the channel vector of grid cell t
// in row-major order.
template <class T>
tensor<T> tokens_from_chw(grad_tape<T>* tape, const tensor<T>& x) {
    if (x.ndim() != 3) throw shape_error("tokens_from_chw expects x[c x h x w]");
    const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2), n = h * w;
    tensor<T> out({n, c});
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t t = 0; t < n; ++t) out[t * c + ch] = x[ch * n + t];
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tensor<T> xc = x, oc = out;
        tape->record([tape, xc, oc, c, n]() {
            const auto& g = tape->grad(oc);
            auto& gx = tape->grad(xc);
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t t = 0; t < n; ++t) gx[ch * n + t] += g[t * c + ch];
        });
    }
    return out;
}

// Column-wise concatenation of [n x d_i] blocks.
template <class T>
tensor<T> concat_cols(grad_tape<T>* tape, const std::vector<tensor<T>>& parts) {
    if (parts.empty()) throw shape_error("concat_cols needs at least one input");
    const int64_t n = parts[0].dim(0);
    int64_t total = 0;
    bool track = false;
    for (const auto& p : parts) {
        if (p.ndim() != 2 || p.dim(0) != n) throw shape_error("concat_cols row counts differ");
        total += p.dim(1);
        track = track || p.requires_grad();
    }
    tensor<T> out({n, total});
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t d = p.dim(1);
        for (int64_t i = 0; i < n; ++i)
            std::copy(p.data() + i * d, p.data() + (i + 1) * d, out.data() + i * total + off);
        off += d;
    }
    if (tape && track) {
        out.set_requires_grad(true);
        auto pc = parts;
        tensor<T> oc = out;
        tape->record([tape, pc, oc, n, total]() {
            const auto& g = tape->grad(oc);
            int64_t off = 0;
            for (const auto& p : pc) {
                const int64_t d = p.dim(1);
                if (p.requires_grad()) {
                    auto& gp = tape->grad(p);
                    for (int64_t i = 0; i < n; ++i)
                        for (int64_t j = 0; j < d; ++j) gp[i * d + j] += g[i * total + off + j];
                }
                off += d;
            }
        });
    }
    return out;
}

// Row gather: out[i] = x[ids[i]]. Backward scatter-adds.
template <class T>
tensor<T> gather_rows(grad_tape<T>* tape, const tensor<T>& x, const std::vector<int64_t>& ids) {
    if (x.ndim() != 2) throw shape_error("gather_rows expects 2-d tensor");
    const int64_t d = x.dim(1);
    for (auto id : ids)
        if (id < 0 || id >= x.dim(0)) throw shape_error("gather_rows index out of range");
    tensor<T> out({static_cast<int64_t>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy(x.data() + ids[i] * d, x.data() + (ids[i] + 1) * d, out.data() + i * d);
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tensor<T> xc = x, oc = out;
        auto idc = std::make_shared<std::vector<int64_t>>(ids);
        tape->record([tape, xc, oc, idc, d]() {
            const auto& g = tape->grad(oc);
            auto& gx = tape->grad(xc);
            for (size_t i = 0; i < idc->size(); ++i)
                for (int64_t j = 0; j < d; ++j) gx[(*idc)[i] * d + j] += g[i * d + j];
        });
    }
    return out;
}

// Mean over rows of -log softmax(logits)[target]. Stable log-sum-exp form.
template <class T>
tensor<T> cross_entropy(grad_tape<T>* tape, const tensor<T>& logits, const std::vector<int>& targets) {
    if (logits.ndim() != 2) throw shape_error("cross_entropy expects logits[n x c]");
    const int64_t n = logits.dim(0), c = logits.dim(1);
    if (static_cast<int64_t>(targets.size()) != n)
        throw shape_error("cross_entropy targets length mismatch");
    for (int t : targets)
        if (t < 0 || t >= c) throw shape_error("cross_entropy target out of range");
    tensor<T> out({1});
    T loss = T(0);
    for (int64_t i = 0; i < n; ++i) {
        const T* row = logits.data() + i * c;
        T mx = row[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        T sum = T(0);
        for (int64_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
        loss += (mx + std::log(sum)) - row[targets[i]];
    }
    out[0] = loss / static_cast<T>(n);
    detail::check_finite(out, "cross_entropy");
    if (tape && logits.requires_grad()) {
        out.set_requires_grad(true);
        tensor<T> lc = logits, oc = out;
        auto tc = std::make_shared<std::vector<int>>(targets);
        tape->record([tape, lc, oc, tc, n, c]() {
            const T go = tape->grad(oc)[0];
            auto& gl = tape->grad(lc);
            for (int64_t i = 0; i < n; ++i) {
                const T* row = lc.data() + i * c;
                T mx = row[0];
                for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
                T sum = T(0);
                for (int64_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
                for (int64_t j = 0; j < c; ++j) {
                    const T p = std::exp(row[j] - mx) / sum;
                    gl[i * c + j] += go * (p - (j == (*tc)[i] ? T(1) : T(0))) / static_cast<T>(n);
                }
            }
        });
    }
    return out;
}

// Scalar dot(x, w) used by the gradient checker to turn any op output into a
// generic scalar objective.
template <class T>
tensor<T> weighted_sum(grad_tape<T>* tape, const tensor<T>& x, const std::vector<T>& w) {
    if (static_cast<int64_t>(w.size()) != x.numel())
        throw shape_error("weighted_sum weight length mismatch");
    tensor<T> out({1});
    T acc = T(0);
    for (int64_t i = 0; i < x.numel(); ++i) acc += x[i] * w[i];
    out[0] = acc;
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tensor<T> xc = x, oc = out;
        auto wc = std::make_shared<std::vector<T>>(w);
        tape->record([tape, xc, oc, wc]() {
            const T go = tape->grad(oc)[0];
            auto& gx = tape->grad(xc);
            for (size_t i = 0; i < wc->size(); ++i) gx[i] += go * (*wc)[i];
        });
    }
    return out;
}

template <class T>
tensor<T> sum_all(grad_tape<T>* tape, const tensor<T>& x) {
    return weighted_sum(tape, x, std::vector<T>(x.numel(), T(1)));
}

} // namespace mpt
