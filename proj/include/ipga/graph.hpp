#pragma once

#include "ipga/kernels.hpp"
#include "ipga/mat.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipga {

// Reverse-mode tape over Mat<T>. A graph is built per forward pass and
// discarded (or clear()ed) afterwards; backward() walks the tape once in
// reverse. Only first-order gradients are supported.
//
// Broadcasting: binary elementwise ops accept a second operand that is
// either the same shape, a 1x1 scalar, a 1xc row, or an rx1 column.
template <class T>
class Graph {
public:
    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    // ----------------------------------------------------------- leaves --

    // Differentiable leaf.
    Var input(Mat<T> value) { return push(std::move(value), true, {}); }

    // Non-differentiable leaf. Backward never flows into it.
    Var constant(Mat<T> value) { return push(std::move(value), false, {}); }

    // Non-owning constant leaf: the pointed-to matrix must outlive the
    // graph. Saves the copy for parameter snapshots bound per pass.
    Var constant_ref(const Mat<T>* value) {
        Node n;
        n.ext = value;
        n.needs_grad = false;
        int id = static_cast<int>(nodes_.size());
        nodes_.push_back(std::move(n));
        return Var{id};
    }

    Var constant_scalar(T x) { return constant(Mat<T>::scalar(x)); }

    // ----------------------------------------------------------- access --

    const Mat<T>& val(Var x) const {
        const Node& n = nodes_[check(x)];
        return n.ext ? *n.ext : n.val;
    }
    T scalar_val(Var x) const {
        const Mat<T>& m = val(x);
        if (m.size() != 1) throw std::logic_error("graph: scalar_val on non-scalar");
        return m.v[0];
    }
    const Mat<T>& grad(Var x) const {
        const Node& n = nodes_[check(x)];
        if (!n.needs_grad) throw std::logic_error("graph: grad of non-differentiable node");
        return n.grad;
    }
    bool needs_grad(Var x) const { return nodes_[check(x)].needs_grad; }
    std::size_t num_nodes() const { return nodes_.size(); }

    void clear() { nodes_.clear(); ran_backward_ = false; }

    // --------------------------------------------------------- backward --

    void backward(Var loss) {
        Node& ln = nodes_[check(loss)];
        if (ln.val.size() != 1) throw std::invalid_argument("graph: backward needs a scalar loss");
        if (!ln.needs_grad) throw std::invalid_argument("graph: loss does not depend on any input");
        if (ran_backward_) throw std::logic_error("graph: backward ran twice on one tape");
        ran_backward_ = true;
        ln.grad.v[0] = T(1);
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            if (nodes_[i].back && nodes_[i].needs_grad) nodes_[i].back(*this);
        }
    }

    // ------------------------------------------------------ elementwise --

    Var add(Var a, Var b) { return binary(a, b, BinOp::add); }
    Var sub(Var a, Var b) { return binary(a, b, BinOp::sub); }
    Var mul(Var a, Var b) { return binary(a, b, BinOp::mul); }
    Var div(Var a, Var b) { return binary(a, b, BinOp::div); }

    Var scale(Var a, T s) {
        Mat<T> out(val(a).r, val(a).c);
        kernels::scale(out.size(), s, val(a).data(), out.data());
        int pa = a.id;
        return push1(std::move(out), pa, [pa, s](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            kernels::axpy(g.nodes_[self].grad.size(), s, g.nodes_[self].grad.data(),
                          g.nodes_[pa].grad.data());
        });
    }

    Var add_const(Var a, T s) {
        Mat<T> out = val(a);
        for (auto& e : out.v) e += s;
        int pa = a.id;
        return push1(std::move(out), pa, [pa](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            kernels::add(g.nodes_[self].grad.size(), g.nodes_[self].grad.data(),
                         g.nodes_[pa].grad.data(), g.nodes_[pa].grad.data());
        });
    }

    // ----------------------------------------------------------- linear --

    // (m,k) x (k,n) -> (m,n)
    Var matmul(Var a, Var b) {
        const Mat<T>& A = val(a);
        const Mat<T>& B = val(b);
        if (A.c != B.r) throw std::invalid_argument("graph: matmul shape mismatch");
        Mat<T> out(A.r, B.c);
        mm_nn(A, B, out, false);
        int pa = a.id, pb = b.id;
        return push2(std::move(out), pa, pb, [pa, pb](Graph& g, int self) {
            const Mat<T>& dC = g.nodes_[self].grad;
            if (g.nodes_[pa].needs_grad) mm_nt(dC, g.node_val(pb), g.nodes_[pa].grad, true);
            if (g.nodes_[pb].needs_grad) mm_tn(g.node_val(pa), dC, g.nodes_[pb].grad, true);
        });
    }

    // (m,k) x (n,k)^T -> (m,n)
    Var matmul_nt(Var a, Var b) {
        const Mat<T>& A = val(a);
        const Mat<T>& B = val(b);
        if (A.c != B.c) throw std::invalid_argument("graph: matmul_nt shape mismatch");
        Mat<T> out(A.r, B.r);
        mm_nt(A, B, out, false);
        int pa = a.id, pb = b.id;
        return push2(std::move(out), pa, pb, [pa, pb](Graph& g, int self) {
            const Mat<T>& dC = g.nodes_[self].grad;
            if (g.nodes_[pa].needs_grad) mm_nn(dC, g.node_val(pb), g.nodes_[pa].grad, true);
            if (g.nodes_[pb].needs_grad) mm_tn(dC, g.node_val(pa), g.nodes_[pb].grad, true);
        });
    }

    Var transpose(Var a) {
        const Mat<T>& A = val(a);
        Mat<T> out(A.c, A.r);
        for (int i = 0; i < A.r; ++i)
            for (int j = 0; j < A.c; ++j) out.at(j, i) = A.at(i, j);
        int pa = a.id;
        return push1(std::move(out), pa, [pa](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            const Mat<T>& dY = g.nodes_[self].grad;
            Mat<T>& dA = g.nodes_[pa].grad;
            for (int i = 0; i < dY.r; ++i)
                for (int j = 0; j < dY.c; ++j) dA.at(j, i) += dY.at(i, j);
        });
    }

    // ---------------------------------------------------- shape surgery --

    Var concat_rows(const std::vector<Var>& parts) {
        if (parts.empty()) throw std::invalid_argument("graph: concat_rows of nothing");
        int cols = val(parts[0]).c;
        int rows = 0;
        for (Var p : parts) {
            if (val(p).c != cols) throw std::invalid_argument("graph: concat_rows column mismatch");
            rows += val(p).r;
        }
        Mat<T> out(rows, cols);
        int at = 0;
        bool ng = false;
        std::vector<int> ids;
        ids.reserve(parts.size());
        for (Var p : parts) {
            const Mat<T>& m = val(p);
            std::copy(m.v.begin(), m.v.end(), out.v.begin() + static_cast<std::size_t>(at) * cols);
            at += m.r;
            ng = ng || nodes_[p.id].needs_grad;
            ids.push_back(p.id);
        }
        return push(std::move(out), ng, {}, [ids, cols](Graph& g, int self) {
            const Mat<T>& dY = g.nodes_[self].grad;
            int at2 = 0;
            for (int pid : ids) {
                Node& p = g.nodes_[pid];
                if (p.needs_grad) {
                    kernels::add(p.grad.size(), p.grad.data(),
                                 dY.data() + static_cast<std::size_t>(at2) * cols, p.grad.data());
                }
                at2 += g.node_val(pid).r;
            }
        });
    }

    Var slice_rows(Var a, int r0, int r1) {
        const Mat<T>& A = val(a);
        if (r0 < 0 || r1 > A.r || r0 >= r1) throw std::invalid_argument("graph: slice_rows range");
        Mat<T> out(r1 - r0, A.c);
        std::copy(A.row_ptr(r0), A.row_ptr(r0) + out.size(), out.data());
        int pa = a.id;
        return push1(std::move(out), pa, [pa, r0](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            const Mat<T>& dY = g.nodes_[self].grad;
            T* dst = g.nodes_[pa].grad.row_ptr(r0);
            kernels::add(dY.size(), dY.data(), dst, dst);
        });
    }

    Var slice_cols(Var a, int c0, int c1) {
        const Mat<T>& A = val(a);
        if (c0 < 0 || c1 > A.c || c0 >= c1) throw std::invalid_argument("graph: slice_cols range");
        Mat<T> out(A.r, c1 - c0);
        for (int i = 0; i < A.r; ++i)
            std::copy(A.row_ptr(i) + c0, A.row_ptr(i) + c1, out.row_ptr(i));
        int pa = a.id;
        return push1(std::move(out), pa, [pa, c0](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            const Mat<T>& dY = g.nodes_[self].grad;
            Mat<T>& dA = g.nodes_[pa].grad;
            for (int i = 0; i < dY.r; ++i) {
                const T* src = dY.row_ptr(i);
                T* dst = dA.row_ptr(i) + c0;
                kernels::add(dY.c, src, dst, dst);
            }
        });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        if (parts.empty()) throw std::invalid_argument("graph: concat_cols of nothing");
        int rows = val(parts[0]).r;
        int cols = 0;
        bool ng = false;
        std::vector<int> ids;
        for (Var p : parts) {
            if (val(p).r != rows) throw std::invalid_argument("graph: concat_cols row mismatch");
            cols += val(p).c;
            ng = ng || nodes_[p.id].needs_grad;
            ids.push_back(p.id);
        }
        Mat<T> out(rows, cols);
        int at = 0;
        for (Var p : parts) {
            const Mat<T>& m = val(p);
            for (int i = 0; i < rows; ++i)
                std::copy(m.row_ptr(i), m.row_ptr(i) + m.c, out.row_ptr(i) + at);
            at += m.c;
        }
        return push(std::move(out), ng, {}, [ids](Graph& g, int self) {
            const Mat<T>& dY = g.nodes_[self].grad;
            int at2 = 0;
            for (int pid : ids) {
                Node& p = g.nodes_[pid];
                if (p.needs_grad) {
                    for (int i = 0; i < dY.r; ++i) {
                        const T* src = dY.row_ptr(i) + at2;
                        T* dst = p.grad.row_ptr(i);
                        kernels::add(g.node_val(pid).c, src, dst, dst);
                    }
                }
                at2 += g.node_val(pid).c;
            }
        });
    }

    Var reshape(Var a, int r, int c) {
        const Mat<T>& A = val(a);
        if (static_cast<std::size_t>(r) * c != A.size())
            throw std::invalid_argument("graph: reshape size mismatch");
        Mat<T> out(r, c, A.v);
        int pa = a.id;
        return push1(std::move(out), pa, [pa](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            const Mat<T>& dY = g.nodes_[self].grad;
            Mat<T>& dA = g.nodes_[pa].grad;
            kernels::add(dY.size(), dY.data(), dA.data(), dA.data());
        });
    }

    // out.v[i] = a.v[idx[i]]; used for embedding lookups and patch extraction.
    Var gather(Var a, const std::vector<int>& idx, int out_r, int out_c) {
        const Mat<T>& A = val(a);
        if (idx.size() != static_cast<std::size_t>(out_r) * out_c)
            throw std::invalid_argument("graph: gather index/shape mismatch");
        Mat<T> out(out_r, out_c);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= A.size())
                throw std::invalid_argument("graph: gather index out of range");
            out.v[i] = A.v[idx[i]];
        }
        int pa = a.id;
        return push(std::move(out), nodes_[pa].needs_grad, {}, [pa, idx](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            const Mat<T>& dY = g.nodes_[self].grad;
            Mat<T>& dA = g.nodes_[pa].grad;
            for (std::size_t i = 0; i < idx.size(); ++i) dA.v[idx[i]] += dY.v[i];
        });
    }

    Var rows_gather(Var table, const std::vector<int>& row_ids) {
        const Mat<T>& A = val(table);
        Mat<T> out(static_cast<int>(row_ids.size()), A.c);
        for (std::size_t i = 0; i < row_ids.size(); ++i) {
            if (row_ids[i] < 0 || row_ids[i] >= A.r)
                throw std::invalid_argument("graph: rows_gather id out of range");
            std::copy(A.row_ptr(row_ids[i]), A.row_ptr(row_ids[i]) + A.c,
                      out.row_ptr(static_cast<int>(i)));
        }
        int pa = table.id;
        return push(std::move(out), nodes_[pa].needs_grad, {}, [pa, row_ids](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            const Mat<T>& dY = g.nodes_[self].grad;
            Mat<T>& dA = g.nodes_[pa].grad;
            for (std::size_t i = 0; i < row_ids.size(); ++i) {
                T* dst = dA.row_ptr(row_ids[i]);
                kernels::add(dY.c, dY.row_ptr(static_cast<int>(i)), dst, dst);
            }
        });
    }

    // ------------------------------------------------------- activations --

    Var relu(Var a) {
        Mat<T> out = val(a);
        for (auto& e : out.v) e = e > T(0) ? e : T(0);
        int pa = a.id;
        return push1(std::move(out), pa, [pa](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            const Mat<T>& x = g.node_val(pa);
            const Mat<T>& dY = g.nodes_[self].grad;
            Mat<T>& dX = g.nodes_[pa].grad;
            for (std::size_t i = 0; i < x.size(); ++i)
                if (x.v[i] > T(0)) dX.v[i] += dY.v[i];
        });
    }

    Var tanh_(Var a) {
        Mat<T> out = val(a);
        for (auto& e : out.v) e = std::tanh(e);
        int pa = a.id;
        return push1(std::move(out), pa, [pa](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            const Mat<T>& y = g.node_val(self);
            const Mat<T>& dY = g.nodes_[self].grad;
            Mat<T>& dX = g.nodes_[pa].grad;
            for (std::size_t i = 0; i < y.size(); ++i)
                dX.v[i] += dY.v[i] * (T(1) - y.v[i] * y.v[i]);
        });
    }

    Var gelu(Var a) {
        constexpr T k = T(0.7978845608028654);  // sqrt(2/pi)
        constexpr T c3 = T(0.044715);
        Mat<T> out = val(a);
        for (auto& e : out.v) {
            T t = std::tanh(k * (e + c3 * e * e * e));
            e = T(0.5) * e * (T(1) + t);
        }
        int pa = a.id;
        return push1(std::move(out), pa, [pa](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            const Mat<T>& x = g.node_val(pa);
            const Mat<T>& dY = g.nodes_[self].grad;
            Mat<T>& dX = g.nodes_[pa].grad;
            for (std::size_t i = 0; i < x.size(); ++i) {
                T xi = x.v[i];
                T inner = k * (xi + c3 * xi * xi * xi);
                T t = std::tanh(inner);
                T dinner = k * (T(1) + T(3) * c3 * xi * xi);
                T d = T(0.5) * (T(1) + t) + T(0.5) * xi * (T(1) - t * t) * dinner;
                dX.v[i] += dY.v[i] * d;
            }
        });
    }

    // log(1 + exp(x)), evaluated stably.
    Var softplus(Var a) {
        Mat<T> out = val(a);
        for (auto& e : out.v) {
            e = e > T(0) ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        }
        int pa = a.id;
        return push1(std::move(out), pa, [pa](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            const Mat<T>& x = g.node_val(pa);
            const Mat<T>& dY = g.nodes_[self].grad;
            Mat<T>& dX = g.nodes_[pa].grad;
            for (std::size_t i = 0; i < x.size(); ++i) {
                T xi = x.v[i];
                T s;
                if (xi >= T(0)) {
                    s = T(1) / (T(1) + std::exp(-xi));
                } else {
                    T e = std::exp(xi);
                    s = e / (T(1) + e);
                }
                dX.v[i] += dY.v[i] * s;
            }
        });
    }

    Var sqrt_(Var a) {
        Mat<T> out = val(a);
        for (auto& e : out.v) e = std::sqrt(e);
        int pa = a.id;
        return push1(std::move(out), pa, [pa](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            const Mat<T>& y = g.node_val(self);
            const Mat<T>& dY = g.nodes_[self].grad;
            Mat<T>& dX = g.nodes_[pa].grad;
            for (std::size_t i = 0; i < y.size(); ++i)
                dX.v[i] += dY.v[i] / (T(2) * y.v[i]);
        });
    }

    // ------------------------------------------------------ row-wise ops --

    Var softmax_rows(Var a) {
        const Mat<T>& A = val(a);
        Mat<T> out(A.r, A.c);
        for (int i = 0; i < A.r; ++i) {
            const T* x = A.row_ptr(i);
            T* y = out.row_ptr(i);
            T m = x[0];
            for (int j = 1; j < A.c; ++j) m = std::max(m, x[j]);
            T s = T(0);
            for (int j = 0; j < A.c; ++j) {
                y[j] = std::exp(x[j] - m);
                s += y[j];
            }
            T inv = T(1) / s;
            for (int j = 0; j < A.c; ++j) y[j] *= inv;
        }
        int pa = a.id;
        return push1(std::move(out), pa, [pa](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            const Mat<T>& p = g.node_val(self);
            const Mat<T>& dY = g.nodes_[self].grad;
            Mat<T>& dX = g.nodes_[pa].grad;
            for (int i = 0; i < p.r; ++i) {
                const T* pi = p.row_ptr(i);
                const T* gi = dY.row_ptr(i);
                T dotv = kernels::dot(static_cast<std::size_t>(p.c), gi, pi);
                T* di = dX.row_ptr(i);
                for (int j = 0; j < p.c; ++j) di[j] += pi[j] * (gi[j] - dotv);
            }
        });
    }

    Var log_softmax_rows(Var a) {
        const Mat<T>& A = val(a);
        Mat<T> out(A.r, A.c);
        for (int i = 0; i < A.r; ++i) {
            const T* x = A.row_ptr(i);
            T* y = out.row_ptr(i);
            T m = x[0];
            for (int j = 1; j < A.c; ++j) m = std::max(m, x[j]);
            T s = T(0);
            for (int j = 0; j < A.c; ++j) s += std::exp(x[j] - m);
            T lse = m + std::log(s);
            for (int j = 0; j < A.c; ++j) y[j] = x[j] - lse;
        }
        int pa = a.id;
        return push1(std::move(out), pa, [pa](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            const Mat<T>& y = g.node_val(self);
            const Mat<T>& dY = g.nodes_[self].grad;
            Mat<T>& dX = g.nodes_[pa].grad;
            for (int i = 0; i < y.r; ++i) {
                const T* yi = y.row_ptr(i);
                const T* gi = dY.row_ptr(i);
                T gs = kernels::sum(static_cast<std::size_t>(y.c), gi);
                T* di = dX.row_ptr(i);
                for (int j = 0; j < y.c; ++j) di[j] += gi[j] - std::exp(yi[j]) * gs;
            }
        });
    }

    // Fused scaled-dot-product attention over already-projected q/k/v of
    // width d split into n_heads slices. mask_bias, when valid, is an
    // additive (nq, nkv) constant shared across heads. Returns (nq, d).
    // One node instead of the per-head slice/matmul/softmax/concat chain;
    // the inner loops run on contiguous head slices through the hoisted
    // kernel table.
    Var attn_core(Var q, Var k, Var v, int n_heads, Var mask_bias) {
        const Mat<T>& Q = val(q);
        const Mat<T>& K = val(k);
        const Mat<T>& V = val(v);
        if (Q.c != K.c || K.c != V.c || K.r != V.r)
            throw std::invalid_argument("graph: attn_core shape mismatch");
        if (n_heads <= 0 || Q.c % n_heads != 0)
            throw std::invalid_argument("graph: attn_core head split");
        const int nq = Q.r, nkv = K.r, dh = Q.c / n_heads;
        const Mat<T>* mask = mask_bias.valid() ? &val(mask_bias) : nullptr;
        if (mask && (mask->r != nq || mask->c != nkv))
            throw std::invalid_argument("graph: attn_core mask shape");
        const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
        const auto& kt = kernels::active_table<T>();

        // probs: row i holds the nkv attention weights of every head,
        // head-major. Kept for the backward pass.
        Mat<T> probs(nq, n_heads * nkv);
        Mat<T> out(nq, Q.c);
        for (int h = 0; h < n_heads; ++h) {
            const int off = h * dh;
            kt.gemm_nt(nq, nkv, dh, Q.data() + off, Q.c, K.data() + off, K.c,
                       probs.data() + h * nkv, probs.c, false);
            for (int i = 0; i < nq; ++i) {
                T* prow = probs.row_ptr(i) + h * nkv;
                T mx = std::numeric_limits<T>::lowest();
                for (int j = 0; j < nkv; ++j) {
                    prow[j] *= inv_sqrt;
                    if (mask) prow[j] += mask->at(i, j);
                    mx = std::max(mx, prow[j]);
                }
                T z = T(0);
                for (int j = 0; j < nkv; ++j) {
                    prow[j] = std::exp(prow[j] - mx);
                    z += prow[j];
                }
                T inv_z = T(1) / z;
                for (int j = 0; j < nkv; ++j) prow[j] *= inv_z;
            }
            kt.gemm_nn(nq, dh, nkv, probs.data() + h * nkv, probs.c, V.data() + off, V.c,
                       out.data() + off, out.c, false);
        }

        int pq = q.id, pk = k.id, pv = v.id;
        bool ng = nodes_[pq].needs_grad || nodes_[pk].needs_grad || nodes_[pv].needs_grad;
        auto probs_keep = std::make_shared<Mat<T>>(std::move(probs));
        return push(std::move(out), ng, {},
                    [pq, pk, pv, n_heads, nq, nkv, dh, inv_sqrt, probs_keep](Graph& g, int self) {
            const auto& kt2 = kernels::active_table<T>();
            const Mat<T>& dY = g.nodes_[self].grad;
            const Mat<T>& Q2 = g.node_val(pq);
            const Mat<T>& K2 = g.node_val(pk);
            const Mat<T>& V2 = g.node_val(pv);
            const Mat<T>& P = *probs_keep;
            const bool need_q = g.nodes_[pq].needs_grad;
            const bool need_k = g.nodes_[pk].needs_grad;
            const bool need_v = g.nodes_[pv].needs_grad;
            Mat<T> ds(nq, nkv);
            for (int h = 0; h < n_heads; ++h) {
                const int off = h * dh;
                // dP = dY_h V_h^T, then row-wise softmax backward, with the
                // score scale folded in.
                kt2.gemm_nt(nq, nkv, dh, dY.data() + off, dY.c, V2.data() + off, V2.c, ds.data(),
                            nkv, false);
                for (int i = 0; i < nq; ++i) {
                    const T* prow = P.row_ptr(i) + h * nkv;
                    T* drow = ds.row_ptr(i);
                    T dot_pp = kt2.dot(nkv, drow, prow);
                    for (int j = 0; j < nkv; ++j)
                        drow[j] = prow[j] * (drow[j] - dot_pp) * inv_sqrt;
                }
                if (need_v)
                    kt2.gemm_tn(nq, dh, nkv, P.data() + h * nkv, P.c, dY.data() + off, dY.c,
                                g.nodes_[pv].grad.data() + off, V2.c, true);
                if (need_q)
                    kt2.gemm_nn(nq, dh, nkv, ds.data(), nkv, K2.data() + off, K2.c,
                                g.nodes_[pq].grad.data() + off, Q2.c, true);
                if (need_k)
                    kt2.gemm_tn(nq, dh, nkv, ds.data(), nkv, Q2.data() + off, Q2.c,
                                g.nodes_[pk].grad.data() + off, K2.c, true);
            }
        });
    }

    // Per-row layer norm with learned gain/bias rows (1 x c).
    Var layer_norm_rows(Var a, Var gain, Var bias, T eps) {
        const Mat<T>& A = val(a);
        const Mat<T>& G = val(gain);
        const Mat<T>& B = val(bias);
        if (G.r != 1 || G.c != A.c || B.r != 1 || B.c != A.c)
            throw std::invalid_argument("graph: layer_norm_rows gain/bias shape");
        Mat<T> out(A.r, A.c);
        for (int i = 0; i < A.r; ++i) {
            const T* x = A.row_ptr(i);
            T* y = out.row_ptr(i);
            T mu = kernels::sum(static_cast<std::size_t>(A.c), x) / T(A.c);
            T var = T(0);
            for (int j = 0; j < A.c; ++j) var += (x[j] - mu) * (x[j] - mu);
            var /= T(A.c);
            T inv = T(1) / std::sqrt(var + eps);
            for (int j = 0; j < A.c; ++j) y[j] = G.v[j] * ((x[j] - mu) * inv) + B.v[j];
        }
        int pa = a.id, pg = gain.id, pb = bias.id;
        bool ng = nodes_[pa].needs_grad || nodes_[pg].needs_grad || nodes_[pb].needs_grad;
        return push(std::move(out), ng, {}, [pa, pg, pb, eps](Graph& g, int self) {
            const Mat<T>& x = g.node_val(pa);
            const Mat<T>& G2 = g.node_val(pg);
            const Mat<T>& dY = g.nodes_[self].grad;
            int c = x.c;
            for (int i = 0; i < x.r; ++i) {
                const T* xi = x.row_ptr(i);
                const T* gi = dY.row_ptr(i);
                T mu = kernels::sum(static_cast<std::size_t>(c), xi) / T(c);
                T var = T(0);
                for (int j = 0; j < c; ++j) var += (xi[j] - mu) * (xi[j] - mu);
                var /= T(c);
                T inv = T(1) / std::sqrt(var + eps);
                if (g.nodes_[pg].needs_grad || g.nodes_[pb].needs_grad) {
                    for (int j = 0; j < c; ++j) {
                        T xhat = (xi[j] - mu) * inv;
                        if (g.nodes_[pg].needs_grad) g.nodes_[pg].grad.v[j] += gi[j] * xhat;
                        if (g.nodes_[pb].needs_grad) g.nodes_[pb].grad.v[j] += gi[j];
                    }
                }
                if (g.nodes_[pa].needs_grad) {
                    // dxhat = dY * gain; standard layer-norm backward.
                    T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
                    for (int j = 0; j < c; ++j) {
                        T dxhat = gi[j] * G2.v[j];
                        T xhat = (xi[j] - mu) * inv;
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                    }
                    T* di = g.nodes_[pa].grad.row_ptr(i);
                    for (int j = 0; j < c; ++j) {
                        T dxhat = gi[j] * G2.v[j];
                        T xhat = (xi[j] - mu) * inv;
                        di[j] += inv * (dxhat - (sum_dxhat + xhat * sum_dxhat_xhat) / T(c));
                    }
                }
            }
        });
    }

    // L2 norm of each row -> (r, 1).
    Var row_l2norm(Var a) {
        const Mat<T>& A = val(a);
        Mat<T> out(A.r, 1);
        for (int i = 0; i < A.r; ++i) {
            const T* x = A.row_ptr(i);
            out.v[i] = std::sqrt(kernels::dot(static_cast<std::size_t>(A.c), x, x));
        }
        int pa = a.id;
        return push1(std::move(out), pa, [pa](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            const Mat<T>& x = g.node_val(pa);
            const Mat<T>& y = g.node_val(self);
            const Mat<T>& dY = g.nodes_[self].grad;
            Mat<T>& dX = g.nodes_[pa].grad;
            for (int i = 0; i < x.r; ++i) {
                T s = dY.v[i] / y.v[i];
                kernels::axpy(static_cast<std::size_t>(x.c), s, x.row_ptr(i), dX.row_ptr(i));
            }
        });
    }

    // ------------------------------------------------------- reductions --

    Var sum_all(Var a) {
        Mat<T> out = Mat<T>::scalar(kernels::sum(val(a).size(), val(a).data()));
        int pa = a.id;
        return push1(std::move(out), pa, [pa](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            T gv = g.nodes_[self].grad.v[0];
            Mat<T>& dA = g.nodes_[pa].grad;
            for (auto& e : dA.v) e += gv;
        });
    }

    Var mean_all(Var a) {
        std::size_t n = val(a).size();
        Mat<T> out = Mat<T>::scalar(kernels::sum(n, val(a).data()) / T(n));
        int pa = a.id;
        return push1(std::move(out), pa, [pa, n](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            T gv = g.nodes_[self].grad.v[0] / T(n);
            Mat<T>& dA = g.nodes_[pa].grad;
            for (auto& e : dA.v) e += gv;
        });
    }

    // Max element. Subgradient goes to the first (lowest flat index) argmax.
    Var max_all(Var a) {
        const Mat<T>& A = val(a);
        std::size_t arg = 0;
        for (std::size_t i = 1; i < A.size(); ++i)
            if (A.v[i] > A.v[arg]) arg = i;
        Mat<T> out = Mat<T>::scalar(A.v[arg]);
        int pa = a.id;
        return push1(std::move(out), pa, [pa, arg](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            g.nodes_[pa].grad.v[arg] += g.nodes_[self].grad.v[0];
        });
    }

    // Column-wise max -> (1, c); first argmax per column.
    Var max_colwise(Var a) {
        const Mat<T>& A = val(a);
        Mat<T> out(1, A.c);
        std::vector<int> args(A.c, 0);
        for (int j = 0; j < A.c; ++j) {
            T best = A.at(0, j);
            for (int i = 1; i < A.r; ++i) {
                if (A.at(i, j) > best) {
                    best = A.at(i, j);
                    args[j] = i;
                }
            }
            out.v[j] = best;
        }
        int pa = a.id;
        return push(std::move(out), nodes_[pa].needs_grad, {}, [pa, args](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            const Mat<T>& dY = g.nodes_[self].grad;
            Mat<T>& dA = g.nodes_[pa].grad;
            for (int j = 0; j < dY.c; ++j) dA.at(args[j], j) += dY.v[j];
        });
    }

    // Mean over rows i of -logprobs[i, target[i]] -> scalar.
    Var nll_rows(Var logprobs, const std::vector<int>& targets) {
        const Mat<T>& L = val(logprobs);
        if (static_cast<int>(targets.size()) != L.r)
            throw std::invalid_argument("graph: nll_rows target count mismatch");
        T acc = T(0);
        for (int i = 0; i < L.r; ++i) {
            if (targets[i] < 0 || targets[i] >= L.c)
                throw std::invalid_argument("graph: nll_rows target out of range");
            acc -= L.at(i, targets[i]);
        }
        Mat<T> out = Mat<T>::scalar(acc / T(L.r));
        int pa = logprobs.id;
        return push(std::move(out), nodes_[pa].needs_grad, {}, [pa, targets](Graph& g, int self) {
            if (!g.nodes_[pa].needs_grad) return;
            T gv = g.nodes_[self].grad.v[0] / T(targets.size());
            Mat<T>& dA = g.nodes_[pa].grad;
            for (std::size_t i = 0; i < targets.size(); ++i)
                dA.at(static_cast<int>(i), targets[i]) -= gv;
        });
    }

private:
    struct Node {
        Mat<T> val;
        const Mat<T>* ext = nullptr;  // set for non-owning constants
        Mat<T> grad;
        bool needs_grad = false;
        std::function<void(Graph&)> back;
    };

    enum class BinOp { add, sub, mul, div };

    enum class Bcast { same, scalar, row, col };

    static Bcast classify(const Mat<T>& a, const Mat<T>& b) {
        if (a.r == b.r && a.c == b.c) return Bcast::same;
        if (b.r == 1 && b.c == 1) return Bcast::scalar;
        if (b.r == 1 && b.c == a.c) return Bcast::row;
        if (b.c == 1 && b.r == a.r) return Bcast::col;
        throw std::invalid_argument("graph: incompatible elementwise shapes");
    }

    Var binary(Var a, Var b, BinOp op) {
        const Mat<T>& A = val(a);
        const Mat<T>& B = val(b);
        Bcast bc = classify(A, B);
        Mat<T> out(A.r, A.c);
        auto bval = [&](int i, int j) -> T {
            switch (bc) {
            case Bcast::same: return B.at(i, j);
            case Bcast::scalar: return B.v[0];
            case Bcast::row: return B.v[j];
            case Bcast::col: return B.v[i];
            }
            return T(0);
        };
        if (bc == Bcast::same && op == BinOp::add) {
            kernels::add(A.size(), A.data(), B.data(), out.data());
        } else if (bc == Bcast::same && op == BinOp::sub) {
            kernels::sub(A.size(), A.data(), B.data(), out.data());
        } else if (bc == Bcast::same && op == BinOp::mul) {
            kernels::mul(A.size(), A.data(), B.data(), out.data());
        } else {
            for (int i = 0; i < A.r; ++i)
                for (int j = 0; j < A.c; ++j) {
                    T x = A.at(i, j), y = bval(i, j);
                    T z;
                    switch (op) {
                    case BinOp::add: z = x + y; break;
                    case BinOp::sub: z = x - y; break;
                    case BinOp::mul: z = x * y; break;
                    default: z = x / y; break;
                    }
                    out.at(i, j) = z;
                }
        }
        int pa = a.id, pb = b.id;
        bool ng = nodes_[pa].needs_grad || nodes_[pb].needs_grad;
        return push(std::move(out), ng, {}, [pa, pb, op, bc](Graph& g, int self) {
            const Mat<T>& A2 = g.node_val(pa);
            const Mat<T>& B2 = g.node_val(pb);
            const Mat<T>& dY = g.nodes_[self].grad;
            auto bval2 = [&](int i, int j) -> T {
                switch (bc) {
                case Bcast::same: return B2.at(i, j);
                case Bcast::scalar: return B2.v[0];
                case Bcast::row: return B2.v[j];
                case Bcast::col: return B2.v[i];
                }
                return T(0);
            };
            auto add_b_grad = [&](int i, int j, T gv) {
                Mat<T>& dB = g.nodes_[pb].grad;
                switch (bc) {
                case Bcast::same: dB.at(i, j) += gv; break;
                case Bcast::scalar: dB.v[0] += gv; break;
                case Bcast::row: dB.v[j] += gv; break;
                case Bcast::col: dB.v[i] += gv; break;
                }
            };
            bool need_a = g.nodes_[pa].needs_grad;
            bool need_b = g.nodes_[pb].needs_grad;
            for (int i = 0; i < A2.r; ++i)
                for (int j = 0; j < A2.c; ++j) {
                    T gv = dY.at(i, j);
                    switch (op) {
                    case BinOp::add:
                        if (need_a) g.nodes_[pa].grad.at(i, j) += gv;
                        if (need_b) add_b_grad(i, j, gv);
                        break;
                    case BinOp::sub:
                        if (need_a) g.nodes_[pa].grad.at(i, j) += gv;
                        if (need_b) add_b_grad(i, j, -gv);
                        break;
                    case BinOp::mul:
                        if (need_a) g.nodes_[pa].grad.at(i, j) += gv * bval2(i, j);
                        if (need_b) add_b_grad(i, j, gv * A2.at(i, j));
                        break;
                    case BinOp::div: {
                        T y = bval2(i, j);
                        if (need_a) g.nodes_[pa].grad.at(i, j) += gv / y;
                        if (need_b) add_b_grad(i, j, -gv * A2.at(i, j) / (y * y));
                        break;
                    }
                    }
                }
        });
    }

    // -------------------------------------------------- raw matmul cores --

    static void mm_nn(const Mat<T>& A, const Mat<T>& B, Mat<T>& C, bool acc) {
        if (!acc) {
            C.r = A.r;
            C.c = B.c;
            C.v.resize(static_cast<std::size_t>(A.r) * B.c);
        }
        kernels::active_table<T>().gemm_nn(A.r, B.c, A.c, A.data(), A.c, B.data(), B.c, C.data(),
                                           C.c, acc);
    }

    // C (A.r x B.r) = A * B^T
    static void mm_nt(const Mat<T>& A, const Mat<T>& B, Mat<T>& C, bool acc) {
        if (!acc) {
            C.r = A.r;
            C.c = B.r;
            C.v.resize(static_cast<std::size_t>(A.r) * B.r);
        }
        kernels::active_table<T>().gemm_nt(A.r, B.r, A.c, A.data(), A.c, B.data(), B.c, C.data(),
                                           C.c, acc);
    }

    // C (A.c x B.c) = A^T * B
    static void mm_tn(const Mat<T>& A, const Mat<T>& B, Mat<T>& C, bool acc) {
        if (!acc) {
            C.r = A.c;
            C.c = B.c;
            C.v.resize(static_cast<std::size_t>(A.c) * B.c);
        }
        kernels::active_table<T>().gemm_tn(A.r, B.c, A.c, A.data(), A.c, B.data(), B.c, C.data(),
                                           C.c, acc);
    }

    int check(Var x) const {
        if (!x.valid() || x.id >= static_cast<int>(nodes_.size()))
            throw std::logic_error("graph: invalid var");
        return x.id;
    }

    const Mat<T>& node_val(int id) const {
        const Node& n = nodes_[id];
        return n.ext ? *n.ext : n.val;
    }

    Var push(Mat<T> val, bool needs_grad, std::function<void(Graph&)> unused,
             std::function<void(Graph&, int)> back = {}) {
        (void)unused;
        Node n;
        n.val = std::move(val);
        n.needs_grad = needs_grad;
        if (needs_grad) n.grad = Mat<T>::zeros(n.val.r, n.val.c);
        int id = static_cast<int>(nodes_.size());
        if (back && needs_grad) {
            n.back = [back = std::move(back), id](Graph& g) { back(g, id); };
        }
        nodes_.push_back(std::move(n));
        return Var{id};
    }

    Var push1(Mat<T> val, int parent, std::function<void(Graph&, int)> back) {
        return push(std::move(val), nodes_[parent].needs_grad, {}, std::move(back));
    }

    Var push2(Mat<T> val, int pa, int pb, std::function<void(Graph&, int)> back) {
        bool ng = nodes_[pa].needs_grad || nodes_[pb].needs_grad;
        return push(std::move(val), ng, {}, std::move(back));
    }

    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

template <class T>
using GVar = typename Graph<T>::Var;

} // namespace ipga
