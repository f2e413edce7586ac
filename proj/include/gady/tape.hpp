#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "gady/tensor.hpp"

namespace gady {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
    Tape* tape = nullptr;
    std::int32_t id = -1;

    const Tensor& val() const;
    bool valid() const { return tape != nullptr && id >= 0; }
};

/// Record of a differentiable computation. Ops append nodes in topological
/// order (inputs always precede outputs); backward() replays the record in
/// reverse, visiting each node exactly once. A tape is single-use: backward
/// on a consumed tape is an error.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = false) {
        return push(std::move(value), requires_grad, nullptr);
    }

    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var scalar_const(double v) { return constant(Tensor::scalar(v)); }

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
    std::size_t node_count() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    /// Reverse pass from a scalar loss. Gradients accumulate additively;
    /// leaves that do not participate keep an exact zero gradient.
    void backward(Var loss) {
        if (consumed_) throw error("backward: tape already consumed");
        if (!value(loss).is_scalar()) throw error("backward: loss must be scalar");
        consumed_ = true;
        for (auto& n : nodes_) n.grad = Tensor::zeros(n.value.shape);
        nodes_[loss.id].grad.values[0] = 1.0;
        for (std::int32_t i = loss.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.requires_grad && n.pull) n.pull(*this, i);
        }
    }

    // Internals shared with the op free functions.
    using PullFn = std::function<void(Tape&, std::int32_t)>;

    Var push(Tensor value, bool requires_grad, PullFn pull) {
        nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, std::move(pull)});
        return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    Tensor& grad_ref(std::int32_t id) { return nodes_[id].grad; }
    const Tensor& val_ref(std::int32_t id) const { return nodes_[id].value; }
    bool needs(std::int32_t id) const { return nodes_[id].requires_grad; }

    static Tape* same_tape(Var a, Var b) {
        if (a.tape == nullptr || a.tape != b.tape) throw error("op: operands from different tapes");
        return a.tape;
    }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        PullFn pull;
    };

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

inline const Tensor& Var::val() const { return tape->value(*this); }

namespace detail {

// Shape contract for the generic elementwise binaries: identical shapes, or
// one side a rank-0 scalar. No other broadcasting.
enum class Bcast { Same, ScalarLeft, ScalarRight };

inline Bcast binary_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.same_shape(b)) return Bcast::Same;
    if (a.is_scalar()) return Bcast::ScalarLeft;
    if (b.is_scalar()) return Bcast::ScalarRight;
    throw error(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

inline void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw error(std::string(op) + ": expected matrix, got " + shape_str(t));
}

inline void require_vector(const Tensor& t, const char* op) {
    if (t.rank() != 1) throw error(std::string(op) + ": expected vector, got " + shape_str(t));
}

constexpr double kLogFloor = 1e-12;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binaries (same shape, or scalar against tensor)
// ---------------------------------------------------------------------------

inline Var add(Var a, Var b) {
    Tape* t = Tape::same_tape(a, b);
    const Tensor &av = t->value(a), &bv = t->value(b);
    auto k = detail::binary_kind(av, bv, "add");
    Tensor out = (k == detail::Bcast::ScalarLeft) ? bv : av;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (k == detail::Bcast::ScalarLeft ? av[0] : av[i]) +
                 (k == detail::Bcast::ScalarRight ? bv[0] : bv[i]);
    std::int32_t ai = a.id, bi = b.id;
    return t->push(std::move(out), t->needs(ai) || t->needs(bi),
                   [ai, bi, k](Tape& tp, std::int32_t self) {
                       const Tensor& g = tp.grad_ref(self);
                       if (tp.needs(ai)) {
                           Tensor& ga = tp.grad_ref(ai);
                           if (k == detail::Bcast::ScalarLeft)
                               for (double gv : g.values) ga[0] += gv;
                           else
                               for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                       }
                       if (tp.needs(bi)) {
                           Tensor& gb = tp.grad_ref(bi);
                           if (k == detail::Bcast::ScalarRight)
                               for (double gv : g.values) gb[0] += gv;
                           else
                               for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                       }
                   });
}

inline Var sub(Var a, Var b) {
    Tape* t = Tape::same_tape(a, b);
    const Tensor &av = t->value(a), &bv = t->value(b);
    auto k = detail::binary_kind(av, bv, "sub");
    Tensor out = (k == detail::Bcast::ScalarLeft) ? bv : av;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (k == detail::Bcast::ScalarLeft ? av[0] : av[i]) -
                 (k == detail::Bcast::ScalarRight ? bv[0] : bv[i]);
    std::int32_t ai = a.id, bi = b.id;
    return t->push(std::move(out), t->needs(ai) || t->needs(bi),
                   [ai, bi, k](Tape& tp, std::int32_t self) {
                       const Tensor& g = tp.grad_ref(self);
                       if (tp.needs(ai)) {
                           Tensor& ga = tp.grad_ref(ai);
                           if (k == detail::Bcast::ScalarLeft)
                               for (double gv : g.values) ga[0] += gv;
                           else
                               for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                       }
                       if (tp.needs(bi)) {
                           Tensor& gb = tp.grad_ref(bi);
                           if (k == detail::Bcast::ScalarRight)
                               for (double gv : g.values) gb[0] -= gv;
                           else
                               for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                       }
                   });
}

inline Var mul(Var a, Var b) {
    Tape* t = Tape::same_tape(a, b);
    const Tensor &av = t->value(a), &bv = t->value(b);
    auto k = detail::binary_kind(av, bv, "mul");
    Tensor out = (k == detail::Bcast::ScalarLeft) ? bv : av;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (k == detail::Bcast::ScalarLeft ? av[0] : av[i]) *
                 (k == detail::Bcast::ScalarRight ? bv[0] : bv[i]);
    std::int32_t ai = a.id, bi = b.id;
    return t->push(std::move(out), t->needs(ai) || t->needs(bi),
                   [ai, bi, k](Tape& tp, std::int32_t self) {
                       const Tensor& g = tp.grad_ref(self);
                       const Tensor &av2 = tp.val_ref(ai), &bv2 = tp.val_ref(bi);
                       if (tp.needs(ai)) {
                           Tensor& ga = tp.grad_ref(ai);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                               double bb = (k == detail::Bcast::ScalarRight) ? bv2[0] : bv2[i];
                               if (k == detail::Bcast::ScalarLeft)
                                   ga[0] += g[i] * bv2[i];
                               else
                                   ga[i] += g[i] * bb;
                           }
                       }
                       if (tp.needs(bi)) {
                           Tensor& gb = tp.grad_ref(bi);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                               double aa = (k == detail::Bcast::ScalarLeft) ? av2[0] : av2[i];
                               if (k == detail::Bcast::ScalarRight)
                                   gb[0] += g[i] * av2[i];
                               else
                                   gb[i] += g[i] * aa;
                           }
                       }
                   });
}

inline Var div(Var a, Var b) {
    Tape* t = Tape::same_tape(a, b);
    const Tensor &av = t->value(a), &bv = t->value(b);
    auto k = detail::binary_kind(av, bv, "div");
    Tensor out = (k == detail::Bcast::ScalarLeft) ? bv : av;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (k == detail::Bcast::ScalarLeft ? av[0] : av[i]) /
                 (k == detail::Bcast::ScalarRight ? bv[0] : bv[i]);
    std::int32_t ai = a.id, bi = b.id;
    return t->push(std::move(out), t->needs(ai) || t->needs(bi),
                   [ai, bi, k](Tape& tp, std::int32_t self) {
                       const Tensor& g = tp.grad_ref(self);
                       const Tensor &av2 = tp.val_ref(ai), &bv2 = tp.val_ref(bi);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                           double aa = (k == detail::Bcast::ScalarLeft) ? av2[0] : av2[i];
                           double bb = (k == detail::Bcast::ScalarRight) ? bv2[0] : bv2[i];
                           if (tp.needs(ai)) {
                               Tensor& ga = tp.grad_ref(ai);
                               if (k == detail::Bcast::ScalarLeft)
                                   ga[0] += g[i] / bb;
                               else
                                   ga[i] += g[i] / bb;
                           }
                           if (tp.needs(bi)) {
                               Tensor& gb = tp.grad_ref(bi);
                               if (k == detail::Bcast::ScalarRight)
                                   gb[0] += -g[i] * aa / (bb * bb);
                               else
                                   gb[i] += -g[i] * aa / (bb * bb);
                           }
                       }
                   });
}

inline Var neg(Var a) {
    Tape* t = a.tape;
    Tensor out = t->value(a);
    for (auto& v : out.values) v = -v;
    std::int32_t ai = a.id;
    return t->push(std::move(out), t->needs(ai), [ai](Tape& tp, std::int32_t self) {
        if (!tp.needs(ai)) return;
        const Tensor& g = tp.grad_ref(self);
        Tensor& ga = tp.grad_ref(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
    });
}

inline Var add_scalar(Var a, double c) {
    Tape* t = a.tape;
    Tensor out = t->value(a);
    for (auto& v : out.values) v += c;
    std::int32_t ai = a.id;
    return t->push(std::move(out), t->needs(ai), [ai](Tape& tp, std::int32_t self) {
        if (!tp.needs(ai)) return;
        const Tensor& g = tp.grad_ref(self);
        Tensor& ga = tp.grad_ref(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

inline Var mul_scalar(Var a, double c) {
    Tape* t = a.tape;
    Tensor out = t->value(a);
    for (auto& v : out.values) v *= c;
    std::int32_t ai = a.id;
    return t->push(std::move(out), t->needs(ai), [ai, c](Tape& tp, std::int32_t self) {
        if (!tp.needs(ai)) return;
        const Tensor& g = tp.grad_ref(self);
        Tensor& ga = tp.grad_ref(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

namespace detail {

// C += A(m,k) * B(k,n); ikj order keeps the inner loop stride-1 on both sides.
inline void gemm_acc(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A(m,k) * B(n,k)^T
inline void gemm_bt_acc(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C += A(k,m)^T * B(k,n)
inline void gemm_at_acc(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
    Tape* t = Tape::same_tape(a, b);
    const Tensor &av = t->value(a), &bv = t->value(b);
    detail::require_matrix(av, "matmul");
    detail::require_matrix(bv, "matmul");
    if (av.shape[1] != bv.shape[0])
        throw error("matmul: shape mismatch " + shape_str(av) + " x " + shape_str(bv));
    std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
    Tensor out({m, n});
    detail::gemm_acc(av.values.data(), bv.values.data(), out.values.data(), m, k, n);
    std::int32_t ai = a.id, bi = b.id;
    return t->push(std::move(out), t->needs(ai) || t->needs(bi),
                   [ai, bi, m, k, n](Tape& tp, std::int32_t self) {
                       const Tensor& g = tp.grad_ref(self);
                       if (tp.needs(ai))  // dA += g * B^T
                           detail::gemm_bt_acc(g.values.data(), tp.val_ref(bi).values.data(),
                                               tp.grad_ref(ai).values.data(), m, n, k);
                       if (tp.needs(bi))  // dB += A^T * g
                           detail::gemm_at_acc(tp.val_ref(ai).values.data(), g.values.data(),
                                               tp.grad_ref(bi).values.data(), k, m, n);
                   });
}

/// y = x*W + b applied per row. x is {R,C} or {C}; W is {C,H}; b is {H}.
inline Var linear(Var x, Var w, Var b) {
    Tape* t = Tape::same_tape(x, w);
    Tape::same_tape(w, b);
    const Tensor &xv = t->value(x), &wv = t->value(w), &bv = t->value(b);
    detail::require_matrix(wv, "linear");
    detail::require_vector(bv, "linear");
    bool vector_in = xv.rank() == 1;
    std::size_t rows = vector_in ? 1 : xv.shape[0];
    std::size_t in = vector_in ? xv.shape[0] : xv.shape[1];
    std::size_t h = wv.shape[1];
    if (wv.shape[0] != in || bv.shape[0] != h)
        throw error("linear: shape mismatch x" + shape_str(xv) + " W" + shape_str(wv) + " b" +
                    shape_str(bv));
    Tensor out(vector_in ? std::vector<std::size_t>{h} : std::vector<std::size_t>{rows, h});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < h; ++j) out.values[r * h + j] = bv[j];
    detail::gemm_acc(xv.values.data(), wv.values.data(), out.values.data(), rows, in, h);
    std::int32_t xi = x.id, wi = w.id, bi = b.id;
    return t->push(std::move(out), t->needs(xi) || t->needs(wi) || t->needs(bi),
                   [xi, wi, bi, rows, in, h](Tape& tp, std::int32_t self) {
                       const Tensor& g = tp.grad_ref(self);
                       if (tp.needs(xi))  // dx += g * W^T
                           detail::gemm_bt_acc(g.values.data(), tp.val_ref(wi).values.data(),
                                               tp.grad_ref(xi).values.data(), rows, h, in);
                       if (tp.needs(wi))  // dW += x^T * g
                           detail::gemm_at_acc(tp.val_ref(xi).values.data(), g.values.data(),
                                               tp.grad_ref(wi).values.data(), in, rows, h);
                       if (tp.needs(bi)) {
                           Tensor& gb = tp.grad_ref(bi);
                           for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t j = 0; j < h; ++j) gb[j] += g.values[r * h + j];
                       }
                   });
}

// ---------------------------------------------------------------------------
// Concatenation and structural ops
// ---------------------------------------------------------------------------

/// Concat vectors (axis 0) or matrices (axis 0 = by rows, axis 1 = by cols).
inline Var concat(const std::vector<Var>& parts, int axis = 0) {
    if (parts.empty()) throw error("concat: no inputs");
    Tape* t = parts[0].tape;
    bool any_grad = false;
    std::size_t rank = t->value(parts[0]).rank();
    for (Var p : parts) {
        Tape::same_tape(parts[0], p);
        any_grad = any_grad || t->needs(p.id);
        if (t->value(p).rank() != rank) throw error("concat: mixed ranks");
    }
    std::vector<std::int32_t> ids;
    ids.reserve(parts.size());
    for (Var p : parts) ids.push_back(p.id);

    Tensor out;
    if (rank == 1 || (rank == 2 && axis == 0)) {
        std::size_t total = 0, cols = rank == 2 ? t->value(parts[0]).shape[1] : 0;
        for (Var p : parts) {
            const Tensor& v = t->value(p);
            if (rank == 2 && v.shape[1] != cols)
                throw error("concat: column mismatch " + shape_str(v));
            total += rank == 2 ? v.shape[0] : v.shape[0];
        }
        out = rank == 2 ? Tensor({total, cols}) : Tensor({total});
        std::size_t off = 0;
        for (Var p : parts) {
            const Tensor& v = t->value(p);
            std::copy(v.values.begin(), v.values.end(), out.values.begin() + off);
            off += v.size();
        }
        return t->push(std::move(out), any_grad, [ids](Tape& tp, std::int32_t self) {
            const Tensor& g = tp.grad_ref(self);
            std::size_t off = 0;
            for (std::int32_t id : ids) {
                std::size_t n = tp.val_ref(id).size();
                if (tp.needs(id)) {
                    Tensor& gp = tp.grad_ref(id);
                    for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
                }
                off += n;
            }
        });
    }
    if (rank != 2 || axis != 1) throw error("concat: unsupported rank/axis");
    std::size_t rows = t->value(parts[0]).shape[0], total_cols = 0;
    std::vector<std::size_t> widths;
    for (Var p : parts) {
        const Tensor& v = t->value(p);
        if (v.shape[0] != rows) throw error("concat: row mismatch " + shape_str(v));
        widths.push_back(v.shape[1]);
        total_cols += v.shape[1];
    }
    out = Tensor({rows, total_cols});
    std::size_t coff = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const Tensor& v = t->value(parts[pi]);
        for (std::size_t r = 0; r < rows; ++r)
            std::copy(v.values.begin() + r * widths[pi], v.values.begin() + (r + 1) * widths[pi],
                      out.values.begin() + r * total_cols + coff);
        coff += widths[pi];
    }
    return t->push(std::move(out), any_grad,
                   [ids, widths, rows, total_cols](Tape& tp, std::int32_t self) {
                       const Tensor& g = tp.grad_ref(self);
                       std::size_t coff = 0;
                       for (std::size_t pi = 0; pi < ids.size(); ++pi) {
                           if (tp.needs(ids[pi])) {
                               Tensor& gp = tp.grad_ref(ids[pi]);
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t c = 0; c < widths[pi]; ++c)
                                       gp.values[r * widths[pi] + c] +=
                                           g.values[r * total_cols + coff + c];
                           }
                           coff += widths[pi];
                       }
                   });
}

inline Var reshape(Var a, std::vector<std::size_t> shape) {
    Tape* t = a.tape;
    const Tensor& av = t->value(a);
    if (Tensor::count(shape) != av.size())
        throw error("reshape: size mismatch " + shape_str(av) + " -> " + shape_str(shape));
    Tensor out(std::move(shape), av.values);
    std::int32_t ai = a.id;
    return t->push(std::move(out), t->needs(ai), [ai](Tape& tp, std::int32_t self) {
        if (!tp.needs(ai)) return;
        const Tensor& g = tp.grad_ref(self);
        Tensor& ga = tp.grad_ref(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

inline Var gather_rows(Var m, std::vector<std::size_t> idx) {
    Tape* t = m.tape;
    const Tensor& mv = t->value(m);
    detail::require_matrix(mv, "gather_rows");
    std::size_t c = mv.shape[1];
    Tensor out({idx.size(), c});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= mv.shape[0]) throw error("gather_rows: index out of range");
        std::copy(mv.values.begin() + idx[i] * c, mv.values.begin() + (idx[i] + 1) * c,
                  out.values.begin() + i * c);
    }
    std::int32_t mi = m.id;
    return t->push(std::move(out), t->needs(mi),
                   [mi, idx = std::move(idx), c](Tape& tp, std::int32_t self) {
                       if (!tp.needs(mi)) return;
                       const Tensor& g = tp.grad_ref(self);
                       Tensor& gm = tp.grad_ref(mi);
                       for (std::size_t i = 0; i < idx.size(); ++i)
                           for (std::size_t j = 0; j < c; ++j)
                               gm.values[idx[i] * c + j] += g.values[i * c + j];
                   });
}

inline Var gather_elems(Var v, std::vector<std::size_t> idx) {
    Tape* t = v.tape;
    const Tensor& vv = t->value(v);
    detail::require_vector(vv, "gather_elems");
    Tensor out({idx.size()});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= vv.size()) throw error("gather_elems: index out of range");
        out[i] = vv[idx[i]];
    }
    std::int32_t vi = v.id;
    return t->push(std::move(out), t->needs(vi),
                   [vi, idx = std::move(idx)](Tape& tp, std::int32_t self) {
                       if (!tp.needs(vi)) return;
                       const Tensor& g = tp.grad_ref(self);
                       Tensor& gv = tp.grad_ref(vi);
                       for (std::size_t i = 0; i < idx.size(); ++i) gv[idx[i]] += g[i];
                   });
}

/// Stack equal-length vectors into a matrix, one per row.
inline Var stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw error("stack_rows: no inputs");
    Tape* t = rows[0].tape;
    std::size_t c = t->value(rows[0]).size();
    bool any_grad = false;
    std::vector<std::int32_t> ids;
    ids.reserve(rows.size());
    for (Var r : rows) {
        Tape::same_tape(rows[0], r);
        detail::require_vector(t->value(r), "stack_rows");
        if (t->value(r).size() != c) throw error("stack_rows: width mismatch");
        any_grad = any_grad || t->needs(r.id);
        ids.push_back(r.id);
    }
    Tensor out({rows.size(), c});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(t->value(rows[i]).values.begin(), t->value(rows[i]).values.end(),
                  out.values.begin() + i * c);
    return t->push(std::move(out), any_grad, [ids, c](Tape& tp, std::int32_t self) {
        const Tensor& g = tp.grad_ref(self);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (!tp.needs(ids[i])) continue;
            Tensor& gr = tp.grad_ref(ids[i]);
            for (std::size_t j = 0; j < c; ++j) gr[j] += g.values[i * c + j];
        }
    });
}

/// Copy of `base` with rows idx[i] replaced by rows of `rows`. Indices must
/// be distinct.
inline Var scatter_rows(Var base, std::vector<std::size_t> idx, Var rows) {
    Tape* t = Tape::same_tape(base, rows);
    const Tensor &bv = t->value(base), &rv = t->value(rows);
    detail::require_matrix(bv, "scatter_rows");
    detail::require_matrix(rv, "scatter_rows");
    if (rv.shape[0] != idx.size() || rv.shape[1] != bv.shape[1])
        throw error("scatter_rows: shape mismatch");
    std::size_t c = bv.shape[1];
    Tensor out = bv;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= bv.shape[0]) throw error("scatter_rows: index out of range");
        std::copy(rv.values.begin() + i * c, rv.values.begin() + (i + 1) * c,
                  out.values.begin() + idx[i] * c);
    }
    std::int32_t bi = base.id, ri = rows.id;
    return t->push(std::move(out), t->needs(bi) || t->needs(ri),
                   [bi, ri, idx = std::move(idx), c](Tape& tp, std::int32_t self) {
                       const Tensor& g = tp.grad_ref(self);
                       if (tp.needs(ri)) {
                           Tensor& gr = tp.grad_ref(ri);
                           for (std::size_t i = 0; i < idx.size(); ++i)
                               for (std::size_t j = 0; j < c; ++j)
                                   gr.values[i * c + j] += g.values[idx[i] * c + j];
                       }
                       if (tp.needs(bi)) {
                           Tensor& gb = tp.grad_ref(bi);
                           std::vector<bool> replaced(tp.val_ref(bi).shape[0], false);
                           for (std::size_t i : idx) replaced[i] = true;
                           for (std::size_t r = 0; r < replaced.size(); ++r)
                               if (!replaced[r])
                                   for (std::size_t j = 0; j < c; ++j)
                                       gb.values[r * c + j] += g.values[r * c + j];
                       }
                   });
}

/// Scale row i of m by col[i].
inline Var mul_colvec(Var m, Var col) {
    Tape* t = Tape::same_tape(m, col);
    const Tensor &mv = t->value(m), &cv = t->value(col);
    detail::require_matrix(mv, "mul_colvec");
    detail::require_vector(cv, "mul_colvec");
    if (cv.shape[0] != mv.shape[0]) throw error("mul_colvec: length mismatch");
    std::size_t r = mv.shape[0], c = mv.shape[1];
    Tensor out({r, c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.values[i * c + j] = mv.values[i * c + j] * cv[i];
    std::int32_t mi = m.id, ci = col.id;
    return t->push(std::move(out), t->needs(mi) || t->needs(ci),
                   [mi, ci, r, c](Tape& tp, std::int32_t self) {
                       const Tensor& g = tp.grad_ref(self);
                       const Tensor &mv2 = tp.val_ref(mi), &cv2 = tp.val_ref(ci);
                       if (tp.needs(mi)) {
                           Tensor& gm = tp.grad_ref(mi);
                           for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < c; ++j)
                                   gm.values[i * c + j] += g.values[i * c + j] * cv2[i];
                       }
                       if (tp.needs(ci)) {
                           Tensor& gc = tp.grad_ref(ci);
                           for (std::size_t i = 0; i < r; ++i) {
                               double acc = 0.0;
                               for (std::size_t j = 0; j < c; ++j)
                                   acc += g.values[i * c + j] * mv2.values[i * c + j];
                               gc[i] += acc;
                           }
                       }
                   });
}

/// Subtract vector `row` from every row of m.
inline Var sub_rowvec(Var m, Var row) {
    Tape* t = Tape::same_tape(m, row);
    const Tensor &mv = t->value(m), &rv = t->value(row);
    detail::require_matrix(mv, "sub_rowvec");
    detail::require_vector(rv, "sub_rowvec");
    if (rv.shape[0] != mv.shape[1]) throw error("sub_rowvec: width mismatch");
    std::size_t r = mv.shape[0], c = mv.shape[1];
    Tensor out({r, c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.values[i * c + j] = mv.values[i * c + j] - rv[j];
    std::int32_t mi = m.id, ri = row.id;
    return t->push(std::move(out), t->needs(mi) || t->needs(ri),
                   [mi, ri, r, c](Tape& tp, std::int32_t self) {
                       const Tensor& g = tp.grad_ref(self);
                       if (tp.needs(mi)) {
                           Tensor& gm = tp.grad_ref(mi);
                           for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
                       }
                       if (tp.needs(ri)) {
                           Tensor& gr = tp.grad_ref(ri);
                           for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < c; ++j) gr[j] -= g.values[i * c + j];
                       }
                   });
}

/// Sum consecutive groups of `group` rows: {G*group, C} -> {G, C}.
inline Var group_sum_rows(Var m, std::size_t group) {
    Tape* t = m.tape;
    const Tensor& mv = t->value(m);
    detail::require_matrix(mv, "group_sum_rows");
    if (group == 0 || mv.shape[0] % group != 0)
        throw error("group_sum_rows: rows not divisible by group");
    std::size_t gcount = mv.shape[0] / group, c = mv.shape[1];
    Tensor out({gcount, c});
    for (std::size_t q = 0; q < gcount; ++q)
        for (std::size_t i = 0; i < group; ++i)
            for (std::size_t j = 0; j < c; ++j)
                out.values[q * c + j] += mv.values[(q * group + i) * c + j];
    std::int32_t mi = m.id;
    return t->push(std::move(out), t->needs(mi),
                   [mi, group, gcount, c](Tape& tp, std::int32_t self) {
                       if (!tp.needs(mi)) return;
                       const Tensor& g = tp.grad_ref(self);
                       Tensor& gm = tp.grad_ref(mi);
                       for (std::size_t q = 0; q < gcount; ++q)
                           for (std::size_t i = 0; i < group; ++i)
                               for (std::size_t j = 0; j < c; ++j)
                                   gm.values[(q * group + i) * c + j] += g.values[q * c + j];
                   });
}

// ---------------------------------------------------------------------------
// Elementwise unaries
// ---------------------------------------------------------------------------

inline Var tanh_(Var a) {
    Tape* t = a.tape;
    Tensor out = t->value(a);
    for (auto& v : out.values) v = std::tanh(v);
    std::int32_t ai = a.id;
    return t->push(std::move(out), t->needs(ai), [ai](Tape& tp, std::int32_t self) {
        if (!tp.needs(ai)) return;
        const Tensor &g = tp.grad_ref(self), &y = tp.val_ref(self);
        Tensor& ga = tp.grad_ref(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

inline Var sigmoid_(Var a) {
    Tape* t = a.tape;
    Tensor out = t->value(a);
    for (auto& v : out.values) v = 1.0 / (1.0 + std::exp(-v));
    std::int32_t ai = a.id;
    return t->push(std::move(out), t->needs(ai), [ai](Tape& tp, std::int32_t self) {
        if (!tp.needs(ai)) return;
        const Tensor &g = tp.grad_ref(self), &y = tp.val_ref(self);
        Tensor& ga = tp.grad_ref(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

inline Var relu_(Var a) {
    Tape* t = a.tape;
    Tensor out = t->value(a);
    for (auto& v : out.values) v = v > 0.0 ? v : 0.0;
    std::int32_t ai = a.id;
    return t->push(std::move(out), t->needs(ai), [ai](Tape& tp, std::int32_t self) {
        if (!tp.needs(ai)) return;
        const Tensor& g = tp.grad_ref(self);
        const Tensor& x = tp.val_ref(ai);
        Tensor& ga = tp.grad_ref(ai);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) ga[i] += g[i];  // subgradient 0 at the kink
    });
}

/// log with inputs clamped to >= 1e-12, so no loss in this library can
/// produce a NaN on the backward pass.
inline Var log_(Var a) {
    Tape* t = a.tape;
    Tensor out = t->value(a);
    for (auto& v : out.values) v = std::log(v < detail::kLogFloor ? detail::kLogFloor : v);
    std::int32_t ai = a.id;
    return t->push(std::move(out), t->needs(ai), [ai](Tape& tp, std::int32_t self) {
        if (!tp.needs(ai)) return;
        const Tensor& g = tp.grad_ref(self);
        const Tensor& x = tp.val_ref(ai);
        Tensor& ga = tp.grad_ref(ai);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > detail::kLogFloor) ga[i] += g[i] / x[i];
    });
}

inline Var abs_(Var a) {
    Tape* t = a.tape;
    Tensor out = t->value(a);
    for (auto& v : out.values) v = std::fabs(v);
    std::int32_t ai = a.id;
    return t->push(std::move(out), t->needs(ai), [ai](Tape& tp, std::int32_t self) {
        if (!tp.needs(ai)) return;
        const Tensor& g = tp.grad_ref(self);
        const Tensor& x = tp.val_ref(ai);
        Tensor& ga = tp.grad_ref(ai);
        for (std::size_t i = 0; i < g.size(); ++i) {
            double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);  // d|x|/dx at 0 := 0
            ga[i] += g[i] * s;
        }
    });
}

inline Var clamp(Var a, double lo, double hi) {
    Tape* t = a.tape;
    Tensor out = t->value(a);
    for (auto& v : out.values) v = v < lo ? lo : (v > hi ? hi : v);
    std::int32_t ai = a.id;
    return t->push(std::move(out), t->needs(ai), [ai, lo, hi](Tape& tp, std::int32_t self) {
        if (!tp.needs(ai)) return;
        const Tensor& g = tp.grad_ref(self);
        const Tensor& x = tp.val_ref(ai);
        Tensor& ga = tp.grad_ref(ai);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > lo && x[i] < hi) ga[i] += g[i];
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Var sum(Var a) {
    Tape* t = a.tape;
    double acc = 0.0;
    for (double v : t->value(a).values) acc += v;
    std::int32_t ai = a.id;
    return t->push(Tensor::scalar(acc), t->needs(ai), [ai](Tape& tp, std::int32_t self) {
        if (!tp.needs(ai)) return;
        double g = tp.grad_ref(self)[0];
        Tensor& ga = tp.grad_ref(ai);
        for (auto& v : ga.values) v += g;
    });
}

inline Var mean(Var a) {
    Tape* t = a.tape;
    const Tensor& av = t->value(a);
    if (av.size() == 0) throw error("mean: empty tensor");
    double acc = 0.0;
    for (double v : av.values) acc += v;
    double n = static_cast<double>(av.size());
    std::int32_t ai = a.id;
    return t->push(Tensor::scalar(acc / n), t->needs(ai), [ai, n](Tape& tp, std::int32_t self) {
        if (!tp.needs(ai)) return;
        double g = tp.grad_ref(self)[0] / n;
        Tensor& ga = tp.grad_ref(ai);
        for (auto& v : ga.values) v += g;
    });
}

/// axis 0: column reduction {R,C}->{C}; axis 1: row reduction {R,C}->{R}.
inline Var sum_axis(Var a, int axis) {
    Tape* t = a.tape;
    const Tensor& av = t->value(a);
    detail::require_matrix(av, "sum_axis");
    std::size_t r = av.shape[0], c = av.shape[1];
    Tensor out(axis == 0 ? std::vector<std::size_t>{c} : std::vector<std::size_t>{r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += av.values[i * c + j];
    std::int32_t ai = a.id;
    return t->push(std::move(out), t->needs(ai), [ai, axis, r, c](Tape& tp, std::int32_t self) {
        if (!tp.needs(ai)) return;
        const Tensor& g = tp.grad_ref(self);
        Tensor& ga = tp.grad_ref(ai);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ga.values[i * c + j] += g[axis == 0 ? j : i];
    });
}

inline Var mean_axis(Var a, int axis) {
    Tape* t = a.tape;
    const Tensor& av = t->value(a);
    detail::require_matrix(av, "mean_axis");
    double n = static_cast<double>(axis == 0 ? av.shape[0] : av.shape[1]);
    return mul_scalar(sum_axis(a, axis), 1.0 / n);
}

inline Var l2_norm(Var a) {
    Tape* t = a.tape;
    double acc = 0.0;
    for (double v : t->value(a).values) acc += v * v;
    double norm = std::sqrt(acc);
    std::int32_t ai = a.id;
    return t->push(Tensor::scalar(norm), t->needs(ai), [ai, norm](Tape& tp, std::int32_t self) {
        if (!tp.needs(ai)) return;
        double g = tp.grad_ref(self)[0];
        double d = norm < 1e-12 ? 1e-12 : norm;
        const Tensor& x = tp.val_ref(ai);
        Tensor& ga = tp.grad_ref(ai);
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g * x[i] / d;
    });
}

/// axis 1: per-row L2 norms {R,C}->{R}; axis 0: per-column norms {R,C}->{C}.
inline Var l2_norm_axis(Var a, int axis) {
    Tape* t = a.tape;
    const Tensor& av = t->value(a);
    detail::require_matrix(av, "l2_norm_axis");
    std::size_t r = av.shape[0], c = av.shape[1];
    Tensor out(axis == 1 ? std::vector<std::size_t>{r} : std::vector<std::size_t>{c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            double v = av.values[i * c + j];
            out[axis == 1 ? i : j] += v * v;
        }
    for (auto& v : out.values) v = std::sqrt(v);
    std::int32_t ai = a.id;
    return t->push(std::move(out), t->needs(ai), [ai, axis, r, c](Tape& tp, std::int32_t self) {
        if (!tp.needs(ai)) return;
        const Tensor& g = tp.grad_ref(self);
        const Tensor& y = tp.val_ref(self);
        const Tensor& x = tp.val_ref(ai);
        Tensor& ga = tp.grad_ref(ai);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                std::size_t k = axis == 1 ? i : j;
                double d = y[k] < 1e-12 ? 1e-12 : y[k];
                ga.values[i * c + j] += g[k] * x.values[i * c + j] / d;
            }
    });
}

// ---------------------------------------------------------------------------
// Time encoding and the straight-through estimator
// ---------------------------------------------------------------------------

/// cos(omega * dt + phi) for a single time delta; omega, phi are {D}.
inline Var time_encode(Var omega, Var phi, double dt) {
    Tape* t = Tape::same_tape(omega, phi);
    const Tensor &ov = t->value(omega), &pv = t->value(phi);
    detail::require_vector(ov, "time_encode");
    if (!ov.same_shape(pv)) throw error("time_encode: omega/phi shape mismatch");
    Tensor out({ov.shape[0]});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::cos(ov[i] * dt + pv[i]);
    std::int32_t oi = omega.id, pi = phi.id;
    return t->push(std::move(out), t->needs(oi) || t->needs(pi),
                   [oi, pi, dt](Tape& tp, std::int32_t self) {
                       const Tensor& g = tp.grad_ref(self);
                       const Tensor &ov2 = tp.val_ref(oi), &pv2 = tp.val_ref(pi);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                           double s = -std::sin(ov2[i] * dt + pv2[i]) * g[i];
                           if (tp.needs(oi)) tp.grad_ref(oi)[i] += s * dt;
                           if (tp.needs(pi)) tp.grad_ref(pi)[i] += s;
                       }
                   });
}

/// Row r of the output is cos(omega * dt[r] + phi); dt is a {R} vector node,
/// so gradients flow into generated timestamps as well as omega/phi.
inline Var time_encode_rows(Var omega, Var phi, Var dt) {
    Tape* t = Tape::same_tape(omega, phi);
    Tape::same_tape(phi, dt);
    const Tensor &ov = t->value(omega), &pv = t->value(phi), &dv = t->value(dt);
    detail::require_vector(ov, "time_encode_rows");
    detail::require_vector(dv, "time_encode_rows");
    if (!ov.same_shape(pv)) throw error("time_encode_rows: omega/phi shape mismatch");
    std::size_t r = dv.shape[0], d = ov.shape[0];
    Tensor out({r, d});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < d; ++j) out.values[i * d + j] = std::cos(ov[j] * dv[i] + pv[j]);
    std::int32_t oi = omega.id, pi = phi.id, di = dt.id;
    return t->push(std::move(out), t->needs(oi) || t->needs(pi) || t->needs(di),
                   [oi, pi, di, r, d](Tape& tp, std::int32_t self) {
                       const Tensor& g = tp.grad_ref(self);
                       const Tensor &ov2 = tp.val_ref(oi), &pv2 = tp.val_ref(pi),
                                    &dv2 = tp.val_ref(di);
                       for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < d; ++j) {
                               double s = -std::sin(ov2[j] * dv2[i] + pv2[j]) * g.values[i * d + j];
                               if (tp.needs(oi)) tp.grad_ref(oi)[j] += s * dv2[i];
                               if (tp.needs(pi)) tp.grad_ref(pi)[j] += s;
                               if (tp.needs(di)) tp.grad_ref(di)[i] += s * ov2[j];
                           }
                   });
}

/// Forward takes the externally discretized values; backward treats the
/// discretization as identity on the continuous input.
inline Var straight_through(Var x, Tensor mapped) {
    Tape* t = x.tape;
    if (!t->value(x).same_shape(mapped))
        throw error("straight_through: shape mismatch " + shape_str(t->value(x)) + " vs " +
                    shape_str(mapped));
    std::int32_t xi = x.id;
    return t->push(std::move(mapped), t->needs(xi), [xi](Tape& tp, std::int32_t self) {
        if (!tp.needs(xi)) return;
        const Tensor& g = tp.grad_ref(self);
        Tensor& gx = tp.grad_ref(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

}  // namespace gady
