#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ncst/tensor.hpp"

namespace ncst {

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A trainable tensor. Gradients accumulate into `grad` across backward
/// passes until the optimizer consumes and clears them.
template <class Real>
struct ParamT {
    std::string name;
    TensorT<Real> value;
    TensorT<Real> grad;

    ParamT() = default;
    ParamT(std::string n, TensorT<Real> val) : name(std::move(n)), value(std::move(val)), grad(value.shape) {}

    void zero_grad() { grad.zero(); }
};

template <class Real>
struct NodeT {
    TensorT<Real> value;
    TensorT<Real> grad;  // allocated on demand during backward
    std::vector<NodeT*> parents;
    std::function<void(NodeT&)> backprop;  // pushes this->grad into parents
    ParamT<Real>* bound = nullptr;         // parameter leaf, if any
    const char* op = "";
    bool reachable = false;

    bool has_grad() const { return grad.size() == value.size() && grad.size() > 0; }
    TensorT<Real>& ensure_grad() {
        if (!has_grad()) grad = TensorT<Real>(value.shape);
        return grad;
    }
};

/// Owns every node created during one forward pass. Nodes are appended in
/// creation order, so creation order is already a topological order of the
/// graph and backward is a single reverse sweep.
template <class Real>
class TapeT {
  public:
    using Node = NodeT<Real>;
    using Var = Node*;

    TapeT() = default;
    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    /// When grads are disabled the tape still records values (single forward
    /// code path) but drops parent links and backprop closures.
    void set_grad_enabled(bool on) { grad_enabled_ = on; }
    bool grad_enabled() const { return grad_enabled_; }

    size_t size() const { return nodes_.size(); }

    void clear() {
        nodes_.clear();
        param_leaves_.clear();
    }

    Var leaf(TensorT<Real> value) {
        Var n = alloc();
        n->value = std::move(value);
        n->op = "leaf";
        return n;
    }

    Var param(ParamT<Real>& p) {
        Var n = alloc();
        n->value = p.value;
        n->op = "param";
        if (grad_enabled_) {
            n->bound = &p;
            param_leaves_.push_back(n);
        }
        return n;
    }

    Var make(TensorT<Real> value, std::vector<Var> parents, std::function<void(Node&)> backprop,
             const char* op) {
        Var n = alloc();
        n->value = std::move(value);
        n->op = op;
        if (grad_enabled_) {
            n->parents = std::move(parents);
            n->backprop = std::move(backprop);
        }
        return n;
    }

    /// Reverse-mode sweep from a scalar root. Parameter gradients are
    /// accumulated into their bound ParamT.
    void backward(Var root) {
        if (!grad_enabled_) throw NumericError("backward: gradients are disabled on this tape");
        if (root->value.size() != 1) throw NumericError("backward: root must be scalar");
        if (!std::isfinite(static_cast<double>(root->value[0])))
            throw NumericError("backward: root is not finite");

        for (auto& n : nodes_) n->reachable = false;
        root->reachable = true;
        root->ensure_grad()[0] = Real(1);

        for (size_t i = nodes_.size(); i-- > 0;) {
            Node& n = *nodes_[i];
            if (!n.reachable) continue;
            for (Node* p : n.parents) p->reachable = true;
            if (n.backprop && n.has_grad()) n.backprop(n);
        }

        for (Var leaf : param_leaves_) {
            if (!leaf->reachable || !leaf->has_grad()) continue;
            if (!leaf->grad.all_finite())
                throw NumericError("backward: non-finite gradient for parameter " + leaf->bound->name);
            add_into(leaf->bound->grad, leaf->grad);
        }
    }

  private:
    Var alloc() {
        nodes_.push_back(std::make_unique<Node>());
        return nodes_.back().get();
    }

    std::vector<std::unique_ptr<Node>> nodes_;
    std::vector<Var> param_leaves_;
    bool grad_enabled_ = true;
};

// ---------------------------------------------------------------------------
// Primitive operations. Each returns a new node on the tape.
// ---------------------------------------------------------------------------

template <class Real>
using Var = NodeT<Real>*;

namespace detail {
template <class Real>
void check_same_shape(const NodeT<Real>* a, const NodeT<Real>* b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw NumericError(std::string(op) + ": shape mismatch " + a->value.shape_str() + " vs " +
                           b->value.shape_str());
}
}  // namespace detail

template <class Real>
Var<Real> add(TapeT<Real>& t, Var<Real> a, Var<Real> b) {
    detail::check_same_shape(a, b, "add");
    TensorT<Real> out = a->value;
    add_into(out, b->value);
    return t.make(std::move(out), {a, b},
                  [a, b](NodeT<Real>& n) {
                      add_into(a->ensure_grad(), n.grad);
                      add_into(b->ensure_grad(), n.grad);
                  },
                  "add");
}

template <class Real>
Var<Real> sub(TapeT<Real>& t, Var<Real> a, Var<Real> b) {
    detail::check_same_shape(a, b, "sub");
    TensorT<Real> out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
    return t.make(std::move(out), {a, b},
                  [a, b](NodeT<Real>& n) {
                      add_into(a->ensure_grad(), n.grad);
                      auto& gb = b->ensure_grad();
                      for (int64_t i = 0; i < n.grad.size(); ++i) gb[i] -= n.grad[i];
                  },
                  "sub");
}

template <class Real>
Var<Real> mul(TapeT<Real>& t, Var<Real> a, Var<Real> b) {
    detail::check_same_shape(a, b, "mul");
    TensorT<Real> out = a->value;
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return t.make(std::move(out), {a, b},
                  [a, b](NodeT<Real>& n) {
                      auto& ga = a->ensure_grad();
                      auto& gb = b->ensure_grad();
                      for (int64_t i = 0; i < n.grad.size(); ++i) {
                          ga[i] += n.grad[i] * b->value[i];
                          gb[i] += n.grad[i] * a->value[i];
                      }
                  },
                  "mul");
}

template <class Real>
Var<Real> scale(TapeT<Real>& t, Var<Real> a, Real c) {
    TensorT<Real> out = a->value;
    for (auto& e : out.v) e *= c;
    return t.make(std::move(out), {a},
                  [a, c](NodeT<Real>& n) {
                      auto& ga = a->ensure_grad();
                      for (int64_t i = 0; i < n.grad.size(); ++i) ga[i] += c * n.grad[i];
                  },
                  "scale");
}

/// W [m,n] · x [n] -> [m]
template <class Real>
Var<Real> matvec(TapeT<Real>& t, Var<Real> W, Var<Real> x) {
    const int m = W->value.rows(), nn = W->value.cols();
    if (x->value.size() != nn) throw NumericError("matvec: dimension mismatch");
    TensorT<Real> out({m});
    const Real* w = W->value.data();
    const Real* xv = x->value.data();
    for (int i = 0; i < m; ++i) {
        const Real* row = w + static_cast<int64_t>(i) * nn;
        Real acc = 0;
        for (int j = 0; j < nn; ++j) acc += row[j] * xv[j];
        out[i] = acc;
    }
    return t.make(std::move(out), {W, x},
                  [W, x, m, nn](NodeT<Real>& n) {
                      auto& gW = W->ensure_grad();
                      auto& gx = x->ensure_grad();
                      const Real* w = W->value.data();
                      const Real* xv = x->value.data();
                      for (int i = 0; i < m; ++i) {
                          const Real gi = n.grad[i];
                          if (gi == Real(0)) continue;
                          Real* gwrow = gW.data() + static_cast<int64_t>(i) * nn;
                          const Real* wrow = w + static_cast<int64_t>(i) * nn;
                          for (int j = 0; j < nn; ++j) {
                              gwrow[j] += gi * xv[j];
                              gx[j] += gi * wrow[j];
                          }
                      }
                  },
                  "matvec");
}

/// x [m] · W [m,n] -> [n]  (i.e. Wᵀx; used for attention context sums)
template <class Real>
Var<Real> vecmat(TapeT<Real>& t, Var<Real> x, Var<Real> W) {
    const int m = W->value.rows(), nn = W->value.cols();
    if (x->value.size() != m) throw NumericError("vecmat: dimension mismatch");
    TensorT<Real> out({nn});
    for (int i = 0; i < m; ++i) {
        const Real xi = x->value[i];
        const Real* row = W->value.data() + static_cast<int64_t>(i) * nn;
        for (int j = 0; j < nn; ++j) out[j] += xi * row[j];
    }
    return t.make(std::move(out), {x, W},
                  [x, W, m, nn](NodeT<Real>& n) {
                      auto& gx = x->ensure_grad();
                      auto& gW = W->ensure_grad();
                      for (int i = 0; i < m; ++i) {
                          const Real* wrow = W->value.data() + static_cast<int64_t>(i) * nn;
                          Real* gwrow = gW.data() + static_cast<int64_t>(i) * nn;
                          const Real xi = x->value[i];
                          Real acc = 0;
                          for (int j = 0; j < nn; ++j) {
                              acc += n.grad[j] * wrow[j];
                              gwrow[j] += xi * n.grad[j];
                          }
                          gx[i] += acc;
                      }
                  },
                  "vecmat");
}

template <class Real>
Var<Real> tanh_op(TapeT<Real>& t, Var<Real> a) {
    TensorT<Real> out = a->value;
    for (auto& e : out.v) e = std::tanh(e);
    TensorT<Real> saved = out;
    return t.make(std::move(out), {a},
                  [a, saved](NodeT<Real>& n) {
                      auto& ga = a->ensure_grad();
                      for (int64_t i = 0; i < n.grad.size(); ++i)
                          ga[i] += n.grad[i] * (Real(1) - saved[i] * saved[i]);
                  },
                  "tanh");
}

template <class Real>
Var<Real> sigmoid_op(TapeT<Real>& t, Var<Real> a) {
    TensorT<Real> out = a->value;
    for (auto& e : out.v) e = Real(1) / (Real(1) + std::exp(-e));
    TensorT<Real> saved = out;
    return t.make(std::move(out), {a},
                  [a, saved](NodeT<Real>& n) {
                      auto& ga = a->ensure_grad();
                      for (int64_t i = 0; i < n.grad.size(); ++i)
                          ga[i] += n.grad[i] * saved[i] * (Real(1) - saved[i]);
                  },
                  "sigmoid");
}

template <class Real>
Var<Real> relu_op(TapeT<Real>& t, Var<Real> a) {
    TensorT<Real> out = a->value;
    for (auto& e : out.v)
        if (e < Real(0)) e = Real(0);
    return t.make(std::move(out), {a},
                  [a](NodeT<Real>& n) {
                      auto& ga = a->ensure_grad();
                      for (int64_t i = 0; i < n.grad.size(); ++i)
                          if (a->value[i] > Real(0)) ga[i] += n.grad[i];
                  },
                  "relu");
}

/// Contiguous sub-vector [off, off+len).
template <class Real>
Var<Real> slice(TapeT<Real>& t, Var<Real> a, int off, int len) {
    if (off < 0 || off + len > a->value.size()) throw NumericError("slice: out of range");
    TensorT<Real> out({len});
    for (int i = 0; i < len; ++i) out[i] = a->value[off + i];
    return t.make(std::move(out), {a},
                  [a, off, len](NodeT<Real>& n) {
                      auto& ga = a->ensure_grad();
                      for (int i = 0; i < len; ++i) ga[off + i] += n.grad[i];
                  },
                  "slice");
}

template <class Real>
Var<Real> concat(TapeT<Real>& t, const std::vector<Var<Real>>& parts) {
    if (parts.empty()) throw NumericError("concat: empty input");
    int total = 0;
    for (auto p : parts) total += static_cast<int>(p->value.size());
    TensorT<Real> out({total});
    int off = 0;
    for (auto p : parts) {
        for (int64_t i = 0; i < p->value.size(); ++i) out[off + i] = p->value[i];
        off += static_cast<int>(p->value.size());
    }
    return t.make(std::move(out), parts,
                  [parts](NodeT<Real>& n) {
                      int off = 0;
                      for (auto p : parts) {
                          auto& gp = p->ensure_grad();
                          for (int64_t i = 0; i < p->value.size(); ++i) gp[i] += n.grad[off + i];
                          off += static_cast<int>(p->value.size());
                      }
                  },
                  "concat");
}

/// Stack N vectors of equal length F into a matrix [N, F].
template <class Real>
Var<Real> stack_rows(TapeT<Real>& t, const std::vector<Var<Real>>& rows) {
    if (rows.empty()) throw NumericError("stack_rows: empty input");
    const int f = static_cast<int>(rows[0]->value.size());
    TensorT<Real> out({static_cast<int>(rows.size()), f});
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r]->value.size() != f) throw NumericError("stack_rows: ragged rows");
        for (int c = 0; c < f; ++c) out.at(static_cast<int>(r), c) = rows[r]->value[c];
    }
    return t.make(std::move(out), rows,
                  [rows, f](NodeT<Real>& n) {
                      for (size_t r = 0; r < rows.size(); ++r) {
                          auto& gr = rows[r]->ensure_grad();
                          for (int c = 0; c < f; ++c) gr[c] += n.grad.at(static_cast<int>(r), c);
                      }
                  },
                  "stack_rows");
}

template <class Real>
Var<Real> take_row(TapeT<Real>& t, Var<Real> m, int r) {
    const int cols = m->value.cols();
    TensorT<Real> out({cols});
    for (int c = 0; c < cols; ++c) out[c] = m->value.at(r, c);
    return t.make(std::move(out), {m},
                  [m, r, cols](NodeT<Real>& n) {
                      auto& gm = m->ensure_grad();
                      for (int c = 0; c < cols; ++c) gm.at(r, c) += n.grad[c];
                  },
                  "take_row");
}

template <class Real>
Var<Real> sum(TapeT<Real>& t, Var<Real> a) {
    Real acc = 0;
    for (Real e : a->value.v) acc += e;
    return t.make(TensorT<Real>::scalar(acc), {a},
                  [a](NodeT<Real>& n) {
                      auto& ga = a->ensure_grad();
                      for (auto& e : ga.v) e += n.grad[0];
                  },
                  "sum");
}

template <class Real>
Var<Real> mean(TapeT<Real>& t, Var<Real> a) {
    return scale(t, sum(t, a), Real(1) / static_cast<Real>(a->value.size()));
}

template <class Real>
Var<Real> dot(TapeT<Real>& t, Var<Real> a, Var<Real> b) {
    detail::check_same_shape(a, b, "dot");
    Real acc = 0;
    for (int64_t i = 0; i < a->value.size(); ++i) acc += a->value[i] * b->value[i];
    return t.make(TensorT<Real>::scalar(acc), {a, b},
                  [a, b](NodeT<Real>& n) {
                      auto& ga = a->ensure_grad();
                      auto& gb = b->ensure_grad();
                      const Real g = n.grad[0];
                      for (int64_t i = 0; i < a->value.size(); ++i) {
                          ga[i] += g * b->value[i];
                          gb[i] += g * a->value[i];
                      }
                  },
                  "dot");
}

/// Numerically stable softmax over a vector.
template <class Real>
Var<Real> softmax(TapeT<Real>& t, Var<Real> a) {
    TensorT<Real> out = a->value;
    Real mx = out[0];
    for (Real e : out.v) mx = std::max(mx, e);
    Real z = 0;
    for (auto& e : out.v) {
        e = std::exp(e - mx);
        z += e;
    }
    for (auto& e : out.v) e /= z;
    TensorT<Real> saved = out;
    return t.make(std::move(out), {a},
                  [a, saved](NodeT<Real>& n) {
                      auto& ga = a->ensure_grad();
                      Real gy = 0;
                      for (int64_t i = 0; i < n.grad.size(); ++i) gy += n.grad[i] * saved[i];
                      for (int64_t i = 0; i < n.grad.size(); ++i)
                          ga[i] += saved[i] * (n.grad[i] - gy);
                  },
                  "softmax");
}

template <class Real>
Var<Real> log_softmax(TapeT<Real>& t, Var<Real> a) {
    TensorT<Real> out = a->value;
    Real mx = out[0];
    for (Real e : out.v) mx = std::max(mx, e);
    Real z = 0;
    for (Real e : out.v) z += std::exp(e - mx);
    const Real lz = std::log(z) + mx;
    for (auto& e : out.v) e -= lz;
    TensorT<Real> saved = out;
    return t.make(std::move(out), {a},
                  [a, saved](NodeT<Real>& n) {
                      auto& ga = a->ensure_grad();
                      Real gs = 0;
                      for (int64_t i = 0; i < n.grad.size(); ++i) gs += n.grad[i];
                      for (int64_t i = 0; i < n.grad.size(); ++i)
                          ga[i] += n.grad[i] - std::exp(saved[i]) * gs;
                  },
                  "log_softmax");
}

template <class Real>
Var<Real> pick(TapeT<Real>& t, Var<Real> a, int idx) {
    if (idx < 0 || idx >= a->value.size()) throw NumericError("pick: index out of range");
    return t.make(TensorT<Real>::scalar(a->value[idx]), {a},
                  [a, idx](NodeT<Real>& n) { a->ensure_grad()[idx] += n.grad[0]; },
                  "pick");
}

/// Cosine similarity with round-off clamping to [-1, 1]. A zero-norm input
/// scores 0 with zero gradient; occurrences are counted for diagnostics.
inline int64_t& cosine_zero_norm_count() {
    static int64_t count = 0;
    return count;
}

template <class Real>
Var<Real> cosine(TapeT<Real>& t, Var<Real> a, Var<Real> b) {
    detail::check_same_shape(a, b, "cosine");
    Real ab = 0, aa = 0, bb = 0;
    for (int64_t i = 0; i < a->value.size(); ++i) {
        ab += a->value[i] * b->value[i];
        aa += a->value[i] * a->value[i];
        bb += b->value[i] * b->value[i];
    }
    const Real na = std::sqrt(aa), nb = std::sqrt(bb);
    if (na == Real(0) || nb == Real(0)) {
        ++cosine_zero_norm_count();
        return t.make(TensorT<Real>::scalar(Real(0)), {a, b}, {}, "cosine");
    }
    Real c = ab / (na * nb);
    c = std::min(Real(1), std::max(Real(-1), c));
    const Real cos_saved = c;
    return t.make(TensorT<Real>::scalar(c), {a, b},
                  [a, b, na, nb, cos_saved](NodeT<Real>& n) {
                      auto& ga = a->ensure_grad();
                      auto& gb = b->ensure_grad();
                      const Real g = n.grad[0];
                      for (int64_t i = 0; i < a->value.size(); ++i) {
                          ga[i] += g * (b->value[i] / (na * nb) - cos_saved * a->value[i] / (na * na));
                          gb[i] += g * (a->value[i] / (na * nb) - cos_saved * b->value[i] / (nb * nb));
                      }
                  },
                  "cosine");
}

template <class Real>
Var<Real> affine(TapeT<Real>& t, Var<Real> W, Var<Real> x, Var<Real> b) {
    return add(t, matvec(t, W, x), b);
}

}  // namespace ncst
