#pragma once

// Reverse-mode autodiff over dense double-precision tensors.
//
// Values are shared_ptr<Tensor>; operations compute eagerly and, when a tape
// is active and an input requires gradients, push a backward closure onto it.
// One tape per training step, single writer.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "slime/errors.hpp"

namespace slime {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

struct Tensor {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a backward pass touches it
    bool requires_grad = false;

    std::size_t size() const { return data.size(); }
    bool is_scalar() const { return data.size() == 1; }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
    void zero_grad() { grad.clear(); }
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (shape_numel(shape) != data.size())
        throw DimensionError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    t->requires_grad = requires_grad;
    return t;
}

inline TensorPtr zeros(Shape shape, bool requires_grad = false) {
    std::size_t n = shape_numel(shape);
    return make_tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

inline TensorPtr full(Shape shape, double value, bool requires_grad = false) {
    std::size_t n = shape_numel(shape);
    return make_tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

inline TensorPtr ones(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 1.0, requires_grad);
}

inline TensorPtr scalar(double value, bool requires_grad = false) {
    return make_tensor({1}, {value}, requires_grad);
}

inline TensorPtr randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0,
                       bool requires_grad = false) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    for (auto& v : data) v = dist(rng);
    return make_tensor(std::move(shape), std::move(data), requires_grad);
}

// ---------------------------------------------------------------------------
// Tape

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::function<void()> backward_fn) {
        entries_.push_back(std::move(backward_fn));
    }

    // Populates grad buffers of all requires_grad leaves reachable from loss.
    void backward(const TensorPtr& loss) {
        if (!loss->is_scalar())
            throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss->shape));
        if (consumed_)
            throw ContractError("backward called twice on the same tape without reset");
        consumed_ = true;
        loss->ensure_grad();
        loss->grad[0] = 1.0;
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    }

    void reset() {
        entries_.clear();
        consumed_ = false;
    }

    std::size_t num_entries() const { return entries_.size(); }

    static Tape* active() { return active_tape(); }

private:
    static Tape*& active_tape() {
        static thread_local Tape* t = nullptr;
        return t;
    }

    std::vector<std::function<void()>> entries_;
    bool consumed_ = false;
    friend class TapeScope;
};

// RAII activation of a tape; ops record only while a tape is active.
class TapeScope {
public:
    explicit TapeScope(Tape& tape) : prev_(Tape::active_tape()) { Tape::active_tape() = &tape; }
    ~TapeScope() { Tape::active_tape() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

namespace detail {

inline bool tracing(std::initializer_list<TensorPtr> inputs) {
    if (!Tape::active()) return false;
    for (const auto& t : inputs)
        if (t->requires_grad) return true;
    return false;
}

inline void mark_output(const TensorPtr& out) { out->requires_grad = true; }

// True when b's shape is a strict suffix of a's (row-wise broadcast, e.g. bias
// [d] against activations [N x d]).
inline bool suffix_broadcast(const Shape& a, const Shape& b) {
    if (b.size() >= a.size()) return false;
    std::size_t off = a.size() - b.size();
    for (std::size_t i = 0; i < b.size(); ++i)
        if (a[off + i] != b[i]) return false;
    return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (same shape, or second operand a broadcastable suffix)

enum class BinaryKind { Add, Sub, Mul };

inline TensorPtr binary_op(BinaryKind kind, const TensorPtr& a, const TensorPtr& b) {
    const bool same = a->shape == b->shape;
    const bool bcast = !same && detail::suffix_broadcast(a->shape, b->shape);
    if (!same && !bcast)
        throw DimensionError("elementwise operands " + shape_str(a->shape) + " vs " +
                             shape_str(b->shape));
    const std::size_t n = a->size();
    const std::size_t bn = b->size();
    std::vector<double> out(n);
    switch (kind) {
        case BinaryKind::Add:
            for (std::size_t i = 0; i < n; ++i) out[i] = a->data[i] + b->data[i % bn];
            break;
        case BinaryKind::Sub:
            for (std::size_t i = 0; i < n; ++i) out[i] = a->data[i] - b->data[i % bn];
            break;
        case BinaryKind::Mul:
            for (std::size_t i = 0; i < n; ++i) out[i] = a->data[i] * b->data[i % bn];
            break;
    }
    auto res = make_tensor(a->shape, std::move(out));
    if (detail::tracing({a, b})) {
        detail::mark_output(res);
        Tape::active()->record([kind, a, b, res, n, bn]() {
            if (res->grad.empty()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) {
                    double g = res->grad[i];
                    a->grad[i] += (kind == BinaryKind::Mul) ? g * b->data[i % bn] : g;
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) {
                    double g = res->grad[i];
                    switch (kind) {
                        case BinaryKind::Add: b->grad[i % bn] += g; break;
                        case BinaryKind::Sub: b->grad[i % bn] -= g; break;
                        case BinaryKind::Mul: b->grad[i % bn] += g * a->data[i]; break;
                    }
                }
            }
        });
    }
    return res;
}

inline TensorPtr add(const TensorPtr& a, const TensorPtr& b) { return binary_op(BinaryKind::Add, a, b); }
inline TensorPtr sub(const TensorPtr& a, const TensorPtr& b) { return binary_op(BinaryKind::Sub, a, b); }
inline TensorPtr mul(const TensorPtr& a, const TensorPtr& b) { return binary_op(BinaryKind::Mul, a, b); }

inline TensorPtr scale(const TensorPtr& a, double c) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * c;
    auto res = make_tensor(a->shape, std::move(out));
    if (detail::tracing({a})) {
        detail::mark_output(res);
        Tape::active()->record([a, res, c]() {
            if (res->grad.empty() || !a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += c * res->grad[i];
        });
    }
    return res;
}

inline TensorPtr add_scalar(const TensorPtr& a, double c) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + c;
    auto res = make_tensor(a->shape, std::move(out));
    if (detail::tracing({a})) {
        detail::mark_output(res);
        Tape::active()->record([a, res]() {
            if (res->grad.empty() || !a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += res->grad[i];
        });
    }
    return res;
}

// c - a, elementwise.
inline TensorPtr rsub_scalar(double c, const TensorPtr& a) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c - a->data[i];
    auto res = make_tensor(a->shape, std::move(out));
    if (detail::tracing({a})) {
        detail::mark_output(res);
        Tape::active()->record([a, res]() {
            if (res->grad.empty() || !a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] -= res->grad[i];
        });
    }
    return res;
}

// ---------------------------------------------------------------------------
// Reductions and unary ops

inline TensorPtr sum(const TensorPtr& a) {
    double s = std::accumulate(a->data.begin(), a->data.end(), 0.0);
    auto res = scalar(s);
    if (detail::tracing({a})) {
        detail::mark_output(res);
        Tape::active()->record([a, res]() {
            if (res->grad.empty() || !a->requires_grad) return;
            a->ensure_grad();
            double g = res->grad[0];
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += g;
        });
    }
    return res;
}

// Sum of scalar tensors as a single tape entry.
inline TensorPtr add_many(const std::vector<TensorPtr>& xs) {
    if (xs.empty()) throw ContractError("add_many on empty list");
    double s = 0.0;
    bool any_grad = false;
    for (const auto& x : xs) {
        if (!x->is_scalar()) throw DimensionError("add_many expects scalar terms");
        s += x->data[0];
        any_grad = any_grad || x->requires_grad;
    }
    auto res = scalar(s);
    if (Tape::active() && any_grad) {
        detail::mark_output(res);
        Tape::active()->record([xs, res]() {
            if (res->grad.empty()) return;
            double g = res->grad[0];
            for (const auto& x : xs) {
                if (!x->requires_grad) continue;
                x->ensure_grad();
                x->grad[0] += g;
            }
        });
    }
    return res;
}

inline TensorPtr log_op(const TensorPtr& a) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a->data[i]);
    auto res = make_tensor(a->shape, std::move(out));
    if (detail::tracing({a})) {
        detail::mark_output(res);
        Tape::active()->record([a, res]() {
            if (res->grad.empty() || !a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += res->grad[i] / a->data[i];
        });
    }
    return res;
}

inline TensorPtr exp_op(const TensorPtr& a) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a->data[i]);
    auto res = make_tensor(a->shape, std::move(out));
    if (detail::tracing({a})) {
        detail::mark_output(res);
        Tape::active()->record([a, res]() {
            if (res->grad.empty() || !a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += res->grad[i] * res->data[i];
        });
    }
    return res;
}

// Values clamped to [lo, hi]; clamped positions block gradient flow.
inline TensorPtr clamp(const TensorPtr& a, double lo, double hi) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, a->data[i]));
    auto res = make_tensor(a->shape, std::move(out));
    if (detail::tracing({a})) {
        detail::mark_output(res);
        Tape::active()->record([a, res, lo, hi]() {
            if (res->grad.empty() || !a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i)
                if (a->data[i] > lo && a->data[i] < hi) a->grad[i] += res->grad[i];
        });
    }
    return res;
}

// Exact Gaussian-CDF GELU: x * Phi(x).
inline TensorPtr gelu(const TensorPtr& a) {
    static constexpr double kInvSqrt2 = 0.7071067811865475244;
    static constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double x = a->data[i];
        out[i] = x * 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    }
    auto res = make_tensor(a->shape, std::move(out));
    if (detail::tracing({a})) {
        detail::mark_output(res);
        Tape::active()->record([a, res]() {
            if (res->grad.empty() || !a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) {
                double x = a->data[i];
                double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                a->grad[i] += res->grad[i] * (phi + x * pdf);
            }
        });
    }
    return res;
}

// ---------------------------------------------------------------------------
// Matrix multiply [m x k] . [k x n] -> [m x n]

inline TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2)
        throw DimensionError("matmul expects 2-D operands");
    std::size_t m = a->shape[0], k = a->shape[1];
    if (b->shape[0] != k)
        throw DimensionError("matmul inner dimensions " + shape_str(a->shape) + " . " +
                             shape_str(b->shape));
    std::size_t n = b->shape[1];
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            double av = a->data[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b->data[p * n + j];
        }
    auto res = make_tensor({m, n}, std::move(out));
    if (detail::tracing({a, b})) {
        detail::mark_output(res);
        Tape::active()->record([a, b, res, m, k, n]() {
            if (res->grad.empty()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < n; ++j)
                            s += res->grad[i * n + j] * b->data[p * n + j];
                        a->grad[i * k + p] += s;
                    }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < m; ++i)
                            s += a->data[i * k + p] * res->grad[i * n + j];
                        b->grad[p * n + j] += s;
                    }
            }
        });
    }
    return res;
}

// Dot product of two equal-length vectors, one tape entry.
inline TensorPtr dot(const TensorPtr& a, const TensorPtr& b) {
    if (a->size() != b->size())
        throw DimensionError("dot operands " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    double s = 0.0;
    for (std::size_t i = 0; i < a->size(); ++i) s += a->data[i] * b->data[i];
    auto res = scalar(s);
    if (detail::tracing({a, b})) {
        detail::mark_output(res);
        Tape::active()->record([a, b, res]() {
            if (res->grad.empty()) return;
            double g = res->grad[0];
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += g * b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += g * a->data[i];
            }
        });
    }
    return res;
}

// ---------------------------------------------------------------------------
// Layer normalization over the last dimension, then affine.

inline TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias,
                            double eps = 1e-12) {
    if (x->shape.empty()) throw DimensionError("layer_norm on scalar");
    std::size_t d = x->shape.back();
    if (d == 0) throw DimensionError("layer_norm with zero-width last dimension");
    if (gain->size() != d || bias->size() != d)
        throw DimensionError("layer_norm gain/bias must have length " + std::to_string(d));
    std::size_t rows = x->size() / d;
    std::vector<double> out(x->size());
    std::vector<double> means(rows), istds(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x->data.data() + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<double>(d);
        double istd = 1.0 / std::sqrt(var + eps);
        means[r] = mean;
        istds[r] = istd;
        for (std::size_t j = 0; j < d; ++j)
            out[r * d + j] = (xr[j] - mean) * istd * gain->data[j] + bias->data[j];
    }
    auto res = make_tensor(x->shape, std::move(out));
    if (detail::tracing({x, gain, bias})) {
        detail::mark_output(res);
        Tape::active()->record([x, gain, bias, res, d, rows, means, istds]() {
            if (res->grad.empty()) return;
            for (std::size_t r = 0; r < rows; ++r) {
                const double* xr = x->data.data() + r * d;
                const double* gr = res->grad.data() + r * d;
                double mean = means[r], istd = istds[r];
                if (gain->requires_grad || bias->requires_grad) {
                    if (gain->requires_grad) gain->ensure_grad();
                    if (bias->requires_grad) bias->ensure_grad();
                    for (std::size_t j = 0; j < d; ++j) {
                        double xhat = (xr[j] - mean) * istd;
                        if (gain->requires_grad) gain->grad[j] += gr[j] * xhat;
                        if (bias->requires_grad) bias->grad[j] += gr[j];
                    }
                }
                if (x->requires_grad) {
                    x->ensure_grad();
                    // dL/dxhat_j = gr_j * gain_j; standard layernorm backward
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        double gh = gr[j] * gain->data[j];
                        double xhat = (xr[j] - mean) * istd;
                        sum_g += gh;
                        sum_gx += gh * xhat;
                    }
                    double inv_d = 1.0 / static_cast<double>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                        double gh = gr[j] * gain->data[j];
                        double xhat = (xr[j] - mean) * istd;
                        x->grad[r * d + j] += istd * (gh - inv_d * sum_g - inv_d * xhat * sum_gx);
                    }
                }
            }
        });
    }
    return res;
}

// ---------------------------------------------------------------------------
// Dropout (inverted; eval mode is the identity)

inline TensorPtr dropout(const TensorPtr& x, double rate, std::mt19937_64& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double keep = 1.0 - rate;
    auto mask = std::make_shared<std::vector<double>>(x->size());
    std::vector<double> out(x->size());
    for (std::size_t i = 0; i < x->size(); ++i) {
        (*mask)[i] = (unif(rng) < keep) ? 1.0 / keep : 0.0;
        out[i] = x->data[i] * (*mask)[i];
    }
    auto res = make_tensor(x->shape, std::move(out));
    if (detail::tracing({x})) {
        detail::mark_output(res);
        Tape::active()->record([x, res, mask]() {
            if (res->grad.empty() || !x->requires_grad) return;
            x->ensure_grad();
            for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += res->grad[i] * (*mask)[i];
        });
    }
    return res;
}

// ---------------------------------------------------------------------------
// Row gather / slice

// Gathers rows of table [V x d] by index; backward scatter-adds, so repeated
// indices accumulate.
inline TensorPtr gather_rows(const TensorPtr& table, const std::vector<int>& indices) {
    if (table->shape.size() != 2) throw DimensionError("gather_rows expects a 2-D table");
    std::size_t v = table->shape[0], d = table->shape[1];
    std::vector<double> out(indices.size() * d);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        int idx = indices[r];
        if (idx < 0 || static_cast<std::size_t>(idx) >= v)
            throw DataError("item index " + std::to_string(idx) + " out of range for vocab " +
                            std::to_string(v));
        std::copy_n(table->data.begin() + idx * d, d, out.begin() + r * d);
    }
    auto res = make_tensor({indices.size(), d}, std::move(out));
    if (detail::tracing({table})) {
        detail::mark_output(res);
        Tape::active()->record([table, res, indices, d]() {
            if (res->grad.empty() || !table->requires_grad) return;
            table->ensure_grad();
            for (std::size_t r = 0; r < indices.size(); ++r)
                for (std::size_t j = 0; j < d; ++j)
                    table->grad[indices[r] * d + j] += res->grad[r * d + j];
        });
    }
    return res;
}

// Single row of a 2-D tensor as a [d] vector.
inline TensorPtr row(const TensorPtr& x, std::size_t r) {
    if (x->shape.size() != 2) throw DimensionError("row expects a 2-D tensor");
    std::size_t d = x->shape[1];
    if (r >= x->shape[0]) throw DimensionError("row index out of range");
    std::vector<double> out(x->data.begin() + r * d, x->data.begin() + (r + 1) * d);
    auto res = make_tensor({d}, std::move(out));
    if (detail::tracing({x})) {
        detail::mark_output(res);
        Tape::active()->record([x, res, r, d]() {
            if (res->grad.empty() || !x->requires_grad) return;
            x->ensure_grad();
            for (std::size_t j = 0; j < d; ++j) x->grad[r * d + j] += res->grad[j];
        });
    }
    return res;
}

// ---------------------------------------------------------------------------
// Masked softmax over a vector; masked positions get probability exactly 0.

inline TensorPtr masked_softmax(const TensorPtr& logits, const std::vector<bool>& masked) {
    std::size_t n = logits->size();
    if (!masked.empty() && masked.size() != n)
        throw DimensionError("softmax mask length mismatch");
    double maxv = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        if (masked.empty() || !masked[i]) maxv = std::max(maxv, logits->data[i]);
    if (!std::isfinite(maxv)) throw ContractError("softmax with all positions masked");
    std::vector<double> out(n, 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!masked.empty() && masked[i]) continue;
        out[i] = std::exp(logits->data[i] - maxv);
        z += out[i];
    }
    for (auto& v : out) v /= z;
    auto res = make_tensor(logits->shape, std::move(out));
    if (detail::tracing({logits})) {
        detail::mark_output(res);
        Tape::active()->record([logits, res, n]() {
            if (res->grad.empty() || !logits->requires_grad) return;
            logits->ensure_grad();
            double gy = 0.0;
            for (std::size_t i = 0; i < n; ++i) gy += res->grad[i] * res->data[i];
            for (std::size_t i = 0; i < n; ++i)
                logits->grad[i] += res->data[i] * (res->grad[i] - gy);
        });
    }
    return res;
}

inline TensorPtr softmax(const TensorPtr& logits) { return masked_softmax(logits, {}); }

// ---------------------------------------------------------------------------
// Complex tensors as split real/imaginary planes.

struct ComplexTensor {
    TensorPtr real;
    TensorPtr imag;

    ComplexTensor() = default;
    ComplexTensor(TensorPtr re, TensorPtr im) : real(std::move(re)), imag(std::move(im)) {
        if (real->shape != imag->shape)
            throw DimensionError("complex planes must share a shape");
    }

    const Shape& shape() const { return real->shape; }
    std::size_t size() const { return real->size(); }
};

inline ComplexTensor complex_zeros(Shape shape, bool requires_grad = false) {
    return {zeros(shape, requires_grad), zeros(shape, requires_grad)};
}

inline ComplexTensor complex_randn(Shape shape, std::mt19937_64& rng, double stddev,
                                   bool requires_grad = false) {
    auto re = randn(shape, rng, stddev, requires_grad);
    auto im = randn(shape, rng, stddev, requires_grad);
    return {re, im};
}

// (a+bi)(c+di) = (ac - bd) + (ad + bc)i
inline ComplexTensor complex_mul(const ComplexTensor& a, const ComplexTensor& b) {
    auto re = sub(mul(a.real, b.real), mul(a.imag, b.imag));
    auto im = add(mul(a.real, b.imag), mul(a.imag, b.real));
    return {re, im};
}

inline ComplexTensor complex_add(const ComplexTensor& a, const ComplexTensor& b) {
    return {add(a.real, b.real), add(a.imag, b.imag)};
}

inline ComplexTensor complex_scale(const ComplexTensor& a, double c) {
    return {scale(a.real, c), scale(a.imag, c)};
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    bool ok(double tol) const { return max_rel_err < tol; }
};

// Compares tape gradients of f() against central differences on each leaf.
// f must rebuild the graph from current leaf data on every call and be
// deterministic; non-determinism raises OracleError.
inline GradCheckReport grad_check(const std::function<TensorPtr()>& f,
                                  const std::vector<std::pair<std::string, TensorPtr>>& leaves,
                                  double h = 1e-5) {
    auto eval = [&]() {
        auto out = f();
        if (!out->is_scalar()) throw ContractError("grad_check target must be scalar");
        return out->data[0];
    };
    double v1 = eval();
    double v2 = eval();
    if (v1 != v2) throw OracleError("grad_check function is not deterministic");

    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        TapeScope scope(tape);
        auto loss = f();
        tape.backward(loss);
        for (const auto& [name, leaf] : leaves) {
            leaf->ensure_grad();
            analytic.push_back(leaf->grad);
            leaf->zero_grad();
        }
    }

    GradCheckReport report;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        const auto& leaf = leaves[li].second;
        GradCheckEntry entry{leaves[li].first, 0.0};
        for (std::size_t i = 0; i < leaf->size(); ++i) {
            double saved = leaf->data[i];
            leaf->data[i] = saved + h;
            double fp = eval();
            leaf->data[i] = saved - h;
            double fm = eval();
            leaf->data[i] = saved;
            double numeric = (fp - fm) / (2.0 * h);
            double a = analytic[li][i];
            double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace slime
