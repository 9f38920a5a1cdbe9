// Define-by-run reverse-mode autodiff over dense row-major matrices. A tape is
// rebuilt for every forward pass; node creation order is a topological order,
// so the backward pass is a single reverse sweep over the nodes reachable from
// the loss. Ops are free functions returning lightweight Var handles.
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gpit/tensor.hpp"

namespace gpit {

template <class S>
class TapeT;

template <class S>
struct VarT {
  TapeT<S>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const MatX<S>& value() const { return tape->value(*this); }
  int rank() const { return tape->rank(*this); }
};

using Var = VarT<double>;

template <class S>
class TapeT {
 public:
  struct Node {
    MatX<S> value;
    MatX<S> grad;  // sized lazily during backward
    bool grad_ready = false;
    bool needs_grad = false;
    int rank = 2;
    std::vector<int> parents;
    std::function<void(TapeT&, Node&)> backward;  // null for leaves / constants
  };

  VarT<S> leaf(const TensorT<S>& t) {
    check_finite(t.mat(), "leaf");
    return push(t.mat(), t.rank(), t.requires_grad, {}, nullptr);
  }

  VarT<S> leaf(MatX<S> m, bool needs_grad = false, int rank = 2) {
    check_finite(m, "leaf");
    return push(std::move(m), rank, needs_grad, {}, nullptr);
  }

  VarT<S> scalar(S v) { return push(MatX<S>::Constant(1, 1, v), 0, false, {}, nullptr); }

  VarT<S> push(MatX<S> value, int rank, bool needs_grad, std::vector<int> parents,
               std::function<void(TapeT&, Node&)> backward) {
    Node n;
    n.value = std::move(value);
    n.rank = rank;
    n.needs_grad = needs_grad;
    n.parents = std::move(parents);
    if (needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return VarT<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  const MatX<S>& value(VarT<S> v) const { return nodes_[static_cast<size_t>(v.id)].value; }
  int rank(VarT<S> v) const { return nodes_[static_cast<size_t>(v.id)].rank; }
  bool needs_grad(VarT<S> v) const { return nodes_[static_cast<size_t>(v.id)].needs_grad; }

  // Gradient accumulator for a node, zero-initialised on first touch.
  MatX<S>& grad_ref(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad_ready) {
      n.grad = MatX<S>::Zero(n.value.rows(), n.value.cols());
      n.grad_ready = true;
    }
    return n.grad;
  }

  MatX<S> grad(VarT<S> v) const {
    const Node& n = nodes_[static_cast<size_t>(v.id)];
    if (!n.grad_ready) return MatX<S>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  // Reverse sweep from a scalar loss. Fills gradients for every reachable node
  // that needs them; fan-out accumulates by summation.
  void backward(VarT<S> loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: loss from another tape");
    const Node& ln = nodes_[static_cast<size_t>(loss.id)];
    if (ln.rank != 0 || ln.value.size() != 1)
      throw std::invalid_argument("backward: loss must be a scalar");
    if (!ln.needs_grad) return;  // loss does not depend on any tracked leaf

    std::vector<char> active(nodes_.size(), 0);
    active[static_cast<size_t>(loss.id)] = 1;
    grad_ref(loss.id)(0, 0) = S(1);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!active[static_cast<size_t>(id)] || !n.needs_grad) continue;
      for (int p : n.parents)
        if (nodes_[static_cast<size_t>(p)].needs_grad) active[static_cast<size_t>(p)] = 1;
      if (n.backward) n.backward(*this, n);
    }
  }

  size_t size() const { return nodes_.size(); }

  void check_finite(const MatX<S>& m, const char* op) const {
    if (finite_checks && !m.allFinite())
      throw std::runtime_error(std::string("non-finite values in op '") + op + "'");
  }

  bool any_parent_needs_grad(const std::vector<int>& parents) const {
    for (int p : parents)
      if (nodes_[static_cast<size_t>(p)].needs_grad) return true;
    return false;
  }

  bool finite_checks = true;

 private:
  std::vector<Node> nodes_;
};

using Tape = TapeT<double>;

namespace detail {

template <class S>
void require_same_tape(VarT<S> a, VarT<S> b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape)
    throw std::invalid_argument(std::string(op) + ": operands must live on one tape");
}

inline std::string dims(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and arithmetic ops
// ---------------------------------------------------------------------------

template <class S>
VarT<S> add(VarT<S> a, VarT<S> b) {
  detail::require_same_tape(a, b, "add");
  TapeT<S>& t = *a.tape;
  const MatX<S>& av = t.value(a);
  const MatX<S>& bv = t.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols())
    throw std::invalid_argument("add: shape mismatch " + detail::dims(av.rows(), av.cols()) +
                                " vs " + detail::dims(bv.rows(), bv.cols()));
  MatX<S> out = av + bv;
  t.check_finite(out, "add");
  const int ai = a.id, bi = b.id;
  return t.push(std::move(out), t.rank(a), t.any_parent_needs_grad({ai, bi}), {ai, bi},
                [ai, bi](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  if (tp.needs_grad({&tp, ai})) tp.grad_ref(ai) += n.grad;
                  if (tp.needs_grad({&tp, bi})) tp.grad_ref(bi) += n.grad;
                });
}

template <class S>
VarT<S> sub(VarT<S> a, VarT<S> b) {
  detail::require_same_tape(a, b, "sub");
  TapeT<S>& t = *a.tape;
  const MatX<S>& av = t.value(a);
  const MatX<S>& bv = t.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols())
    throw std::invalid_argument("sub: shape mismatch");
  MatX<S> out = av - bv;
  t.check_finite(out, "sub");
  const int ai = a.id, bi = b.id;
  return t.push(std::move(out), t.rank(a), t.any_parent_needs_grad({ai, bi}), {ai, bi},
                [ai, bi](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  if (tp.needs_grad({&tp, ai})) tp.grad_ref(ai) += n.grad;
                  if (tp.needs_grad({&tp, bi})) tp.grad_ref(bi) -= n.grad;
                });
}

// Elementwise (Hadamard) product.
template <class S>
VarT<S> mul(VarT<S> a, VarT<S> b) {
  detail::require_same_tape(a, b, "mul");
  TapeT<S>& t = *a.tape;
  const MatX<S>& av = t.value(a);
  const MatX<S>& bv = t.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols())
    throw std::invalid_argument("mul: shape mismatch");
  MatX<S> out = av.cwiseProduct(bv);
  t.check_finite(out, "mul");
  const int ai = a.id, bi = b.id;
  return t.push(std::move(out), t.rank(a), t.any_parent_needs_grad({ai, bi}), {ai, bi},
                [ai, bi](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  if (tp.needs_grad({&tp, ai}))
                    tp.grad_ref(ai) += n.grad.cwiseProduct(tp.value({&tp, bi}));
                  if (tp.needs_grad({&tp, bi}))
                    tp.grad_ref(bi) += n.grad.cwiseProduct(tp.value({&tp, ai}));
                });
}

template <class S>
VarT<S> scale(VarT<S> a, S c) {
  TapeT<S>& t = *a.tape;
  MatX<S> out = t.value(a) * c;
  t.check_finite(out, "scale");
  const int ai = a.id;
  return t.push(std::move(out), t.rank(a), t.any_parent_needs_grad({ai}), {ai},
                [ai, c](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  tp.grad_ref(ai) += c * n.grad;
                });
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

template <class S>
VarT<S> matmul(VarT<S> a, VarT<S> b) {
  detail::require_same_tape(a, b, "matmul");
  TapeT<S>& t = *a.tape;
  const MatX<S>& av = t.value(a);
  const MatX<S>& bv = t.value(b);
  if (av.cols() != bv.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                detail::dims(av.rows(), av.cols()) + " * " +
                                detail::dims(bv.rows(), bv.cols()));
  MatX<S> out = av * bv;
  t.check_finite(out, "matmul");
  const int ai = a.id, bi = b.id;
  return t.push(std::move(out), 2, t.any_parent_needs_grad({ai, bi}), {ai, bi},
                [ai, bi](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  if (tp.needs_grad({&tp, ai}))
                    tp.grad_ref(ai) += n.grad * tp.value({&tp, bi}).transpose();
                  if (tp.needs_grad({&tp, bi}))
                    tp.grad_ref(bi) += tp.value({&tp, ai}).transpose() * n.grad;
                });
}

template <class S>
VarT<S> transpose(VarT<S> a) {
  TapeT<S>& t = *a.tape;
  MatX<S> out = t.value(a).transpose();
  const int ai = a.id;
  return t.push(std::move(out), 2, t.any_parent_needs_grad({ai}), {ai},
                [ai](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  tp.grad_ref(ai) += n.grad.transpose();
                });
}

template <class S>
VarT<S> reshape(VarT<S> a, Index rows, Index cols) {
  TapeT<S>& t = *a.tape;
  const MatX<S>& av = t.value(a);
  if (av.size() != rows * cols) throw std::invalid_argument("reshape: element count mismatch");
  MatX<S> out(rows, cols);
  // row-major relayout preserves the flat element order
  for (Index i = 0; i < av.size(); ++i)
    out(i / cols, i % cols) = av(i / av.cols(), i % av.cols());
  const int ai = a.id;
  return t.push(std::move(out), 2, t.any_parent_needs_grad({ai}), {ai},
                [ai](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  MatX<S>& g = tp.grad_ref(ai);
                  const MatX<S>& ng = n.grad;
                  for (Index i = 0; i < ng.size(); ++i)
                    g(i / g.cols(), i % g.cols()) += ng(i / ng.cols(), i % ng.cols());
                });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class S>
VarT<S> sum(VarT<S> a) {
  TapeT<S>& t = *a.tape;
  MatX<S> out = MatX<S>::Constant(1, 1, t.value(a).sum());
  t.check_finite(out, "sum");
  const int ai = a.id;
  return t.push(std::move(out), 0, t.any_parent_needs_grad({ai}), {ai},
                [ai](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  tp.grad_ref(ai).array() += n.grad(0, 0);
                });
}

// Sum of squared entries.
template <class S>
VarT<S> sumsq(VarT<S> a) {
  TapeT<S>& t = *a.tape;
  MatX<S> out = MatX<S>::Constant(1, 1, t.value(a).squaredNorm());
  t.check_finite(out, "sumsq");
  const int ai = a.id;
  return t.push(std::move(out), 0, t.any_parent_needs_grad({ai}), {ai},
                [ai](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  tp.grad_ref(ai) += S(2) * n.grad(0, 0) * tp.value({&tp, ai});
                });
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

template <class S>
VarT<S> leaky_relu(VarT<S> a, S slope) {
  TapeT<S>& t = *a.tape;
  const MatX<S>& av = t.value(a);
  MatX<S> out = av.unaryExpr([slope](S x) { return x > S(0) ? x : slope * x; });
  const int ai = a.id;
  return t.push(std::move(out), t.rank(a), t.any_parent_needs_grad({ai}), {ai},
                [ai, slope](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  const MatX<S>& x = tp.value({&tp, ai});
                  MatX<S>& g = tp.grad_ref(ai);
                  g += n.grad.cwiseProduct(
                      x.unaryExpr([slope](S v) { return v > S(0) ? S(1) : slope; }));
                });
}

template <class S>
VarT<S> relu(VarT<S> a) {
  return leaky_relu(a, S(0));
}

template <class S>
S stable_sigmoid(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <class S>
VarT<S> sigmoid(VarT<S> a) {
  TapeT<S>& t = *a.tape;
  MatX<S> out = t.value(a).unaryExpr([](S x) { return stable_sigmoid(x); });
  const int ai = a.id;
  return t.push(std::move(out), t.rank(a), t.any_parent_needs_grad({ai}), {ai},
                [ai](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  const MatX<S>& s = n.value;
                  tp.grad_ref(ai) +=
                      n.grad.cwiseProduct(s.cwiseProduct((MatX<S>::Ones(s.rows(), s.cols()) - s)));
                });
}

// ---------------------------------------------------------------------------
// Softmax / normalisation
// ---------------------------------------------------------------------------

// Row-wise softmax with max-subtraction. Each output row sums to 1.
template <class S>
VarT<S> softmax_rows(VarT<S> a) {
  TapeT<S>& t = *a.tape;
  const MatX<S>& av = t.value(a);
  if (av.cols() < 1) throw std::invalid_argument("softmax_rows: empty rows");
  MatX<S> out(av.rows(), av.cols());
  for (Index r = 0; r < av.rows(); ++r) {
    const S m = av.row(r).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (av.row(r).array() - m).exp();
    out.row(r) = e / e.sum();
  }
  t.check_finite(out, "softmax_rows");
  const int ai = a.id;
  return t.push(std::move(out), t.rank(a), t.any_parent_needs_grad({ai}), {ai},
                [ai](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  const MatX<S>& p = n.value;
                  MatX<S>& g = tp.grad_ref(ai);
                  for (Index r = 0; r < p.rows(); ++r) {
                    const S dot = n.grad.row(r).dot(p.row(r));
                    g.row(r) += p.row(r).cwiseProduct(
                        (n.grad.row(r).array() - dot).matrix());
                  }
                });
}

// Row-wise softmax restricted to entries where mask != 0; masked-out entries
// get probability exactly 0. Every row must have at least one admitted entry.
template <class S>
VarT<S> masked_softmax_rows(VarT<S> a, const MatX<S>& mask) {
  TapeT<S>& t = *a.tape;
  const MatX<S>& av = t.value(a);
  if (mask.rows() != av.rows() || mask.cols() != av.cols())
    throw std::invalid_argument("masked_softmax_rows: mask shape mismatch");
  MatX<S> out = MatX<S>::Zero(av.rows(), av.cols());
  for (Index r = 0; r < av.rows(); ++r) {
    S m = std::numeric_limits<S>::lowest();
    bool any = false;
    for (Index c = 0; c < av.cols(); ++c)
      if (mask(r, c) != S(0)) {
        m = std::max(m, av(r, c));
        any = true;
      }
    if (!any) throw std::invalid_argument("masked_softmax_rows: fully masked row");
    S denom = S(0);
    for (Index c = 0; c < av.cols(); ++c)
      if (mask(r, c) != S(0)) {
        out(r, c) = std::exp(av(r, c) - m);
        denom += out(r, c);
      }
    out.row(r) /= denom;
  }
  t.check_finite(out, "masked_softmax_rows");
  const int ai = a.id;
  return t.push(std::move(out), t.rank(a), t.any_parent_needs_grad({ai}), {ai},
                [ai](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  const MatX<S>& p = n.value;  // zero on masked entries
                  MatX<S>& g = tp.grad_ref(ai);
                  for (Index r = 0; r < p.rows(); ++r) {
                    const S dot = n.grad.row(r).dot(p.row(r));
                    g.row(r) += p.row(r).cwiseProduct(
                        (n.grad.row(r).array() - dot).matrix());
                  }
                });
}

// Per-row standardisation followed by a shared affine map. gain/bias are
// rank-1 (1 x n). Variance is the population variance.
template <class S>
VarT<S> layer_norm(VarT<S> x, VarT<S> gain, VarT<S> bias, S eps) {
  detail::require_same_tape(x, gain, "layer_norm");
  detail::require_same_tape(x, bias, "layer_norm");
  TapeT<S>& t = *x.tape;
  const MatX<S>& xv = t.value(x);
  const MatX<S>& gv = t.value(gain);
  const MatX<S>& bv = t.value(bias);
  if (eps <= S(0)) throw std::invalid_argument("layer_norm: eps must be positive");
  if (gv.rows() != 1 || bv.rows() != 1 || gv.cols() != xv.cols() || bv.cols() != xv.cols())
    throw std::invalid_argument("layer_norm: gain/bias must be 1x" +
                                std::to_string(xv.cols()));
  const Index n = xv.cols();
  MatX<S> xhat(xv.rows(), n);
  MatX<S> inv_std(xv.rows(), 1);
  for (Index r = 0; r < xv.rows(); ++r) {
    const S mu = xv.row(r).mean();
    const S var = (xv.row(r).array() - mu).square().sum() / static_cast<S>(n);
    const S is = S(1) / std::sqrt(var + eps);
    inv_std(r, 0) = is;
    xhat.row(r) = (xv.row(r).array() - mu).matrix() * is;
  }
  MatX<S> out = (xhat.array().rowwise() * gv.row(0).array()).matrix();
  out.rowwise() += bv.row(0);
  t.check_finite(out, "layer_norm");
  const int xi = x.id, gi = gain.id, bi = bias.id;
  return t.push(std::move(out), 2, t.any_parent_needs_grad({xi, gi, bi}), {xi, gi, bi},
                [xi, gi, bi, xhat, inv_std, n](TapeT<S>& tp, typename TapeT<S>::Node& nd) {
                  const MatX<S>& gv2 = tp.value({&tp, gi});
                  if (tp.needs_grad({&tp, gi}))
                    tp.grad_ref(gi) += (nd.grad.cwiseProduct(xhat)).colwise().sum();
                  if (tp.needs_grad({&tp, bi})) tp.grad_ref(bi) += nd.grad.colwise().sum();
                  if (tp.needs_grad({&tp, xi})) {
                    MatX<S>& gx = tp.grad_ref(xi);
                    for (Index r = 0; r < nd.grad.rows(); ++r) {
                      Eigen::Matrix<S, 1, Eigen::Dynamic> gy =
                          nd.grad.row(r).cwiseProduct(gv2.row(0));
                      const S mean_gy = gy.mean();
                      const S mean_gyx = gy.cwiseProduct(xhat.row(r)).mean();
                      gx.row(r) += inv_std(r, 0) *
                                   ((gy.array() - mean_gy) - xhat.row(r).array() * mean_gyx)
                                       .matrix();
                    }
                  }
                });
}

// ---------------------------------------------------------------------------
// Structure / indexing ops
// ---------------------------------------------------------------------------

template <class S>
VarT<S> concat_cols(VarT<S> a, VarT<S> b) {
  detail::require_same_tape(a, b, "concat_cols");
  TapeT<S>& t = *a.tape;
  const MatX<S>& av = t.value(a);
  const MatX<S>& bv = t.value(b);
  if (av.rows() != bv.rows()) throw std::invalid_argument("concat_cols: row count mismatch");
  MatX<S> out(av.rows(), av.cols() + bv.cols());
  out.leftCols(av.cols()) = av;
  out.rightCols(bv.cols()) = bv;
  const int ai = a.id, bi = b.id;
  const Index ac = av.cols(), bc = bv.cols();
  return t.push(std::move(out), 2, t.any_parent_needs_grad({ai, bi}), {ai, bi},
                [ai, bi, ac, bc](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  if (tp.needs_grad({&tp, ai})) tp.grad_ref(ai) += n.grad.leftCols(ac);
                  if (tp.needs_grad({&tp, bi})) tp.grad_ref(bi) += n.grad.rightCols(bc);
                });
}

template <class S>
VarT<S> slice_rows(VarT<S> a, Index r0, Index len) {
  TapeT<S>& t = *a.tape;
  const MatX<S>& av = t.value(a);
  if (r0 < 0 || len < 0 || r0 + len > av.rows())
    throw std::invalid_argument("slice_rows: range out of bounds");
  MatX<S> out = av.middleRows(r0, len);
  const int ai = a.id;
  return t.push(std::move(out), 2, t.any_parent_needs_grad({ai}), {ai},
                [ai, r0, len](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  tp.grad_ref(ai).middleRows(r0, len) += n.grad;
                });
}

// out.row(r) = a.row(idx[r]); rows may repeat.
template <class S>
VarT<S> gather_rows(VarT<S> a, const std::vector<int>& idx) {
  TapeT<S>& t = *a.tape;
  const MatX<S>& av = t.value(a);
  MatX<S> out(static_cast<Index>(idx.size()), av.cols());
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= av.rows())
      throw std::invalid_argument("gather_rows: index out of range");
    out.row(static_cast<Index>(r)) = av.row(idx[r]);
  }
  const int ai = a.id;
  return t.push(std::move(out), 2, t.any_parent_needs_grad({ai}), {ai},
                [ai, idx](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  MatX<S>& g = tp.grad_ref(ai);
                  for (size_t r = 0; r < idx.size(); ++r)
                    g.row(idx[r]) += n.grad.row(static_cast<Index>(r));
                });
}

// out.row(s) = sum of a.row(r) over r with seg[r] == s.
template <class S>
VarT<S> segment_sum_rows(VarT<S> a, const std::vector<int>& seg, int n_segments) {
  TapeT<S>& t = *a.tape;
  const MatX<S>& av = t.value(a);
  if (static_cast<Index>(seg.size()) != av.rows())
    throw std::invalid_argument("segment_sum_rows: segment map length mismatch");
  MatX<S> out = MatX<S>::Zero(n_segments, av.cols());
  for (size_t r = 0; r < seg.size(); ++r) {
    if (seg[r] < 0 || seg[r] >= n_segments)
      throw std::invalid_argument("segment_sum_rows: segment id out of range");
    out.row(seg[r]) += av.row(static_cast<Index>(r));
  }
  const int ai = a.id;
  return t.push(std::move(out), 2, t.any_parent_needs_grad({ai}), {ai},
                [ai, seg](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  MatX<S>& g = tp.grad_ref(ai);
                  for (size_t r = 0; r < seg.size(); ++r)
                    g.row(static_cast<Index>(r)) += n.grad.row(seg[r]);
                });
}

// out.row(r) = s(r, 0) * a.row(r); s is m x 1.
template <class S>
VarT<S> scale_rows(VarT<S> a, VarT<S> s) {
  detail::require_same_tape(a, s, "scale_rows");
  TapeT<S>& t = *a.tape;
  const MatX<S>& av = t.value(a);
  const MatX<S>& sv = t.value(s);
  if (sv.cols() != 1 || sv.rows() != av.rows())
    throw std::invalid_argument("scale_rows: scale must be rows(a) x 1");
  MatX<S> out = (av.array().colwise() * sv.col(0).array()).matrix();
  t.check_finite(out, "scale_rows");
  const int ai = a.id, si = s.id;
  return t.push(std::move(out), 2, t.any_parent_needs_grad({ai, si}), {ai, si},
                [ai, si](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  const MatX<S>& av2 = tp.value({&tp, ai});
                  const MatX<S>& sv2 = tp.value({&tp, si});
                  if (tp.needs_grad({&tp, ai}))
                    tp.grad_ref(ai) += (n.grad.array().colwise() * sv2.col(0).array()).matrix();
                  if (tp.needs_grad({&tp, si}))
                    tp.grad_ref(si).col(0) +=
                        n.grad.cwiseProduct(av2).rowwise().sum();
                });
}

// Adds a 1 x n row vector to every row of a.
template <class S>
VarT<S> add_rowvec(VarT<S> a, VarT<S> b) {
  detail::require_same_tape(a, b, "add_rowvec");
  TapeT<S>& t = *a.tape;
  const MatX<S>& av = t.value(a);
  const MatX<S>& bv = t.value(b);
  if (bv.rows() != 1 || bv.cols() != av.cols())
    throw std::invalid_argument("add_rowvec: bias must be 1 x cols(a)");
  MatX<S> out = av;
  out.rowwise() += bv.row(0);
  const int ai = a.id, bi = b.id;
  return t.push(std::move(out), 2, t.any_parent_needs_grad({ai, bi}), {ai, bi},
                [ai, bi](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  if (tp.needs_grad({&tp, ai})) tp.grad_ref(ai) += n.grad;
                  if (tp.needs_grad({&tp, bi})) tp.grad_ref(bi) += n.grad.colwise().sum();
                });
}

// out(i, j) = c(i, 0) + r(0, j).
template <class S>
VarT<S> outer_sum(VarT<S> c, VarT<S> r) {
  detail::require_same_tape(c, r, "outer_sum");
  TapeT<S>& t = *c.tape;
  const MatX<S>& cv = t.value(c);
  const MatX<S>& rv = t.value(r);
  if (cv.cols() != 1 || rv.rows() != 1)
    throw std::invalid_argument("outer_sum: expects column vector and row vector");
  MatX<S> out(cv.rows(), rv.cols());
  for (Index i = 0; i < cv.rows(); ++i)
    out.row(i) = rv.row(0).array() + cv(i, 0);
  const int ci = c.id, ri = r.id;
  return t.push(std::move(out), 2, t.any_parent_needs_grad({ci, ri}), {ci, ri},
                [ci, ri](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  if (tp.needs_grad({&tp, ci})) tp.grad_ref(ci).col(0) += n.grad.rowwise().sum();
                  if (tp.needs_grad({&tp, ri})) tp.grad_ref(ri).row(0) += n.grad.colwise().sum();
                });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Mean binary cross-entropy from logits, in the overflow-safe form
// max(x,0) - x*y + log(1 + exp(-|x|)). labels is a constant 0/1 matrix.
template <class S>
VarT<S> bce_with_logits_mean(VarT<S> logits, const MatX<S>& labels) {
  TapeT<S>& t = *logits.tape;
  const MatX<S>& x = t.value(logits);
  if (labels.rows() != x.rows() || labels.cols() != x.cols())
    throw std::invalid_argument("bce_with_logits_mean: label shape mismatch");
  S acc = S(0);
  for (Index i = 0; i < x.size(); ++i) {
    const S xi = x(i / x.cols(), i % x.cols());
    const S yi = labels(i / x.cols(), i % x.cols());
    acc += std::max(xi, S(0)) - xi * yi + std::log1p(std::exp(-std::abs(xi)));
  }
  const S count = static_cast<S>(x.size());
  MatX<S> out = MatX<S>::Constant(1, 1, acc / count);
  t.check_finite(out, "bce_with_logits_mean");
  const int li = logits.id;
  return t.push(std::move(out), 0, t.any_parent_needs_grad({li}), {li},
                [li, labels, count](TapeT<S>& tp, typename TapeT<S>::Node& n) {
                  const MatX<S>& x2 = tp.value({&tp, li});
                  MatX<S>& g = tp.grad_ref(li);
                  const S s = n.grad(0, 0) / count;
                  for (Index i = 0; i < x2.rows(); ++i)
                    for (Index j = 0; j < x2.cols(); ++j)
                      g(i, j) += s * (stable_sigmoid(x2(i, j)) - labels(i, j));
                });
}

}  // namespace gpit
