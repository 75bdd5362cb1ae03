#pragma once

#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vmav/common.hpp"

namespace vmav {

// A named parameter with persistent gradient storage. Graphs are transient;
// ParamTensors live for the whole training run and are what optimizers and
// checkpoints operate on.
template <class Scalar>
struct ParamTensor {
  std::string name;
  Mat<Scalar> value;
  Mat<Scalar> grad;

  void zero_grad() { grad.setZero(); }
};

// Registry of parameters with stable addresses.
template <class Scalar>
class ParamSet {
 public:
  // Layers hold pointers into the deque, so copying a set would silently
  // alias the original's tensors. Move is fine: deque moves keep element
  // addresses stable.
  ParamSet() = default;
  ParamSet(const ParamSet&) = delete;
  ParamSet& operator=(const ParamSet&) = delete;
  ParamSet(ParamSet&&) = default;
  ParamSet& operator=(ParamSet&&) = default;

  ParamTensor<Scalar>& add(const std::string& name, Eigen::Index rows,
                           Eigen::Index cols) {
    for (const auto& t : tensors_)
      VMAV_CHECK(t.name != name, "duplicate parameter name: " + name);
    tensors_.push_back(ParamTensor<Scalar>{
        name, Mat<Scalar>::Zero(rows, cols), Mat<Scalar>::Zero(rows, cols)});
    return tensors_.back();
  }

  ParamTensor<Scalar>* find(const std::string& name) {
    for (auto& t : tensors_)
      if (t.name == name) return &t;
    return nullptr;
  }

  std::size_t size() const { return tensors_.size(); }
  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  void zero_grads() {
    for (auto& t : tensors_) t.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_)
      n += static_cast<std::size_t>(t.value.size());
    return n;
  }

 private:
  std::deque<ParamTensor<Scalar>> tensors_;
};

// Copies parameter values between structurally identical sets (same names,
// same shapes); gradients are untouched.
template <class Scalar>
void copy_param_values(ParamSet<Scalar>& dst, const ParamSet<Scalar>& src) {
  VMAV_CHECK(dst.size() == src.size(),
             "copy_param_values: parameter count mismatch");
  for (const auto& s : src) {
    ParamTensor<Scalar>* d = dst.find(s.name);
    VMAV_CHECK(d != nullptr, "copy_param_values: missing " + s.name);
    VMAV_CHECK(d->value.rows() == s.value.rows() &&
                   d->value.cols() == s.value.cols(),
               "copy_param_values: shape mismatch for " + s.name);
    d->value = s.value;
  }
}

template <class Scalar>
class Graph;

// Lightweight handle to a node in a Graph.
template <class Scalar>
struct Var {
  Graph<Scalar>* g = nullptr;
  int id = -1;

  const Mat<Scalar>& value() const { return g->node(id).value; }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

// Dynamic computation tape. Nodes are created in topological order by the
// free functions below; backward() walks the tape in reverse.
template <class Scalar>
class Graph {
 public:
  struct Node {
    Mat<Scalar> value;
    Mat<Scalar> grad;  // sized lazily on first accumulation
    std::function<void(Graph&)> back;
    bool needs_grad = false;
  };

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Data leaf: values flow forward, no gradient is tracked.
  Var<Scalar> constant(Mat<Scalar> v) {
    nodes_.push_back(Node{std::move(v), {}, nullptr, false});
    return Var<Scalar>{this, size() - 1};
  }

  // Parameter leaf: backward accumulates into the tensor's persistent grad.
  Var<Scalar> param(ParamTensor<Scalar>& p) {
    ParamTensor<Scalar>* ptr = &p;
    nodes_.push_back(Node{p.value, {}, nullptr, true});
    int id = size() - 1;
    nodes_.back().back = [id, ptr](Graph& g) { ptr->grad += g.node(id).grad; };
    return Var<Scalar>{this, id};
  }

  // Create an interior node. `back` may be empty when the op defines its
  // backward after creation (to capture the output id).
  Var<Scalar> make(Mat<Scalar> value, std::initializer_list<int> parents) {
    bool needs = false;
    for (int p : parents) needs = needs || node(p).needs_grad;
    nodes_.push_back(Node{std::move(value), {}, {}, needs});
    return Var<Scalar>{this, size() - 1};
  }

  void set_back(Var<Scalar> v, std::function<void(Graph&)> back) {
    if (node(v.id).needs_grad) node(v.id).back = std::move(back);
  }

  Mat<Scalar>& grad_of(int id) {
    Node& n = node(id);
    if (n.grad.size() == 0)
      n.grad = Mat<Scalar>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  // Accumulate into a node's gradient if it participates in backprop.
  template <class Expr>
  void accum(int id, const Expr& e) {
    if (node(id).needs_grad) grad_of(id) += e;
  }

  void backward(Var<Scalar> loss) {
    VMAV_CHECK(loss.g == this, "backward: var from another graph");
    VMAV_CHECK(node(loss.id).value.size() == 1,
               "backward: loss must be scalar");
    grad_of(loss.id).setConstant(Scalar(1));
    for (int i = loss.id; i >= 0; --i) {
      Node& n = node(i);
      if (!n.needs_grad || !n.back) continue;
      if (n.grad.size() == 0) continue;  // not on any path to the loss
      n.back(*this);
    }
  }

 private:
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <class Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  Graph<Scalar>& g = *a.g;
  VMAV_CHECK(a.value().cols() == b.value().rows(), "matmul: shape mismatch");
  Var<Scalar> out = g.make(a.value() * b.value(), {a.id, b.id});
  int ia = a.id, ib = b.id, io = out.id;
  g.set_back(out, [ia, ib, io](Graph<Scalar>& g) {
    const Mat<Scalar>& dy = g.node(io).grad;
    g.accum(ia, dy * g.node(ib).value.transpose());
    g.accum(ib, g.node(ia).value.transpose() * dy);
  });
  return out;
}

template <class Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  Graph<Scalar>& g = *a.g;
  VMAV_CHECK(a.rows() == b.rows() && a.cols() == b.cols(),
             "add: shape mismatch");
  Var<Scalar> out = g.make(a.value() + b.value(), {a.id, b.id});
  int ia = a.id, ib = b.id, io = out.id;
  g.set_back(out, [ia, ib, io](Graph<Scalar>& g) {
    g.accum(ia, g.node(io).grad);
    g.accum(ib, g.node(io).grad);
  });
  return out;
}

// y = x + v broadcast over columns (v is Nx1, the bias idiom).
template <class Scalar>
Var<Scalar> add_colwise(Var<Scalar> x, Var<Scalar> v) {
  Graph<Scalar>& g = *x.g;
  VMAV_CHECK(v.cols() == 1 && v.rows() == x.rows(),
             "add_colwise: bias must be Nx1 matching rows");
  Mat<Scalar> y = x.value().colwise() + v.value().col(0);
  Var<Scalar> out = g.make(std::move(y), {x.id, v.id});
  int ix = x.id, iv = v.id, io = out.id;
  g.set_back(out, [ix, iv, io](Graph<Scalar>& g) {
    const Mat<Scalar>& dy = g.node(io).grad;
    g.accum(ix, dy);
    g.accum(iv, dy.rowwise().sum());
  });
  return out;
}

template <class Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  Graph<Scalar>& g = *a.g;
  VMAV_CHECK(a.rows() == b.rows() && a.cols() == b.cols(),
             "sub: shape mismatch");
  Var<Scalar> out = g.make(a.value() - b.value(), {a.id, b.id});
  int ia = a.id, ib = b.id, io = out.id;
  g.set_back(out, [ia, ib, io](Graph<Scalar>& g) {
    g.accum(ia, g.node(io).grad);
    g.accum(ib, -g.node(io).grad);
  });
  return out;
}

template <class Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  Graph<Scalar>& g = *a.g;
  VMAV_CHECK(a.rows() == b.rows() && a.cols() == b.cols(),
             "mul: shape mismatch");
  Var<Scalar> out = g.make(a.value().cwiseProduct(b.value()), {a.id, b.id});
  int ia = a.id, ib = b.id, io = out.id;
  g.set_back(out, [ia, ib, io](Graph<Scalar>& g) {
    const Mat<Scalar>& dy = g.node(io).grad;
    g.accum(ia, dy.cwiseProduct(g.node(ib).value));
    g.accum(ib, dy.cwiseProduct(g.node(ia).value));
  });
  return out;
}

// y = x * diag-broadcast(row): every row of x scaled elementwise by a 1xB row.
template <class Scalar>
Var<Scalar> mul_rowwise(Var<Scalar> x, Var<Scalar> row) {
  Graph<Scalar>& g = *x.g;
  VMAV_CHECK(row.rows() == 1 && row.cols() == x.cols(),
             "mul_rowwise: row must be 1xB matching cols");
  Mat<Scalar> y =
      (x.value().array().rowwise() * row.value().row(0).array()).matrix();
  Var<Scalar> out = g.make(std::move(y), {x.id, row.id});
  int ix = x.id, ir = row.id, io = out.id;
  g.set_back(out, [ix, ir, io](Graph<Scalar>& g) {
    const Mat<Scalar>& dy = g.node(io).grad;
    g.accum(ix, (dy.array().rowwise() * g.node(ir).value.row(0).array())
                    .matrix());
    g.accum(ir, (dy.cwiseProduct(g.node(ix).value)).colwise().sum());
  });
  return out;
}

template <class Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  Graph<Scalar>& g = *a.g;
  Var<Scalar> out = g.make(a.value() * s, {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out, [ia, io, s](Graph<Scalar>& g) {
    g.accum(ia, g.node(io).grad * s);
  });
  return out;
}

template <class Scalar>
Var<Scalar> add_scalar(Var<Scalar> a, Scalar s) {
  Graph<Scalar>& g = *a.g;
  Var<Scalar> out = g.make((a.value().array() + s).matrix(), {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out,
             [ia, io](Graph<Scalar>& g) { g.accum(ia, g.node(io).grad); });
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities
// ---------------------------------------------------------------------------

template <class Scalar>
Var<Scalar> tanh(Var<Scalar> a) {
  Graph<Scalar>& g = *a.g;
  Var<Scalar> out = g.make(a.value().array().tanh().matrix(), {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out, [ia, io](Graph<Scalar>& g) {
    const Mat<Scalar>& y = g.node(io).value;
    g.accum(ia, (g.node(io).grad.array() * (Scalar(1) - y.array().square()))
                    .matrix());
  });
  return out;
}

template <class Scalar>
Var<Scalar> sigmoid(Var<Scalar> a) {
  Graph<Scalar>& g = *a.g;
  Mat<Scalar> y =
      (Scalar(1) / (Scalar(1) + (-a.value().array()).exp())).matrix();
  Var<Scalar> out = g.make(std::move(y), {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out, [ia, io](Graph<Scalar>& g) {
    const Mat<Scalar>& y = g.node(io).value;
    g.accum(ia, (g.node(io).grad.array() * y.array() *
                 (Scalar(1) - y.array()))
                    .matrix());
  });
  return out;
}

template <class Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  Graph<Scalar>& g = *a.g;
  Var<Scalar> out = g.make(a.value().cwiseMax(Scalar(0)), {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out, [ia, io](Graph<Scalar>& g) {
    const Mat<Scalar>& x = g.node(ia).value;
    g.accum(ia, (x.array() > Scalar(0))
                    .select(g.node(io).grad, Mat<Scalar>::Zero(x.rows(),
                                                               x.cols())));
  });
  return out;
}

template <class Scalar>
Var<Scalar> exp(Var<Scalar> a) {
  Graph<Scalar>& g = *a.g;
  Var<Scalar> out = g.make(a.value().array().exp().matrix(), {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out, [ia, io](Graph<Scalar>& g) {
    g.accum(ia, g.node(io).grad.cwiseProduct(g.node(io).value));
  });
  return out;
}

template <class Scalar>
Var<Scalar> log(Var<Scalar> a) {
  Graph<Scalar>& g = *a.g;
  Var<Scalar> out = g.make(a.value().array().log().matrix(), {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out, [ia, io](Graph<Scalar>& g) {
    g.accum(ia, g.node(io).grad.cwiseQuotient(g.node(ia).value));
  });
  return out;
}

template <class Scalar>
Var<Scalar> square(Var<Scalar> a) {
  Graph<Scalar>& g = *a.g;
  Var<Scalar> out = g.make(a.value().array().square().matrix(), {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out, [ia, io](Graph<Scalar>& g) {
    g.accum(ia, Scalar(2) * g.node(io).grad.cwiseProduct(g.node(ia).value));
  });
  return out;
}

// Saturating clip with pass-through gradient on the closed interval.
template <class Scalar>
Var<Scalar> clip(Var<Scalar> a, Scalar lo, Scalar hi) {
  VMAV_CHECK(lo <= hi, "clip: lo must not exceed hi");
  Graph<Scalar>& g = *a.g;
  Var<Scalar> out = g.make(a.value().cwiseMax(lo).cwiseMin(hi), {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out, [ia, io, lo, hi](Graph<Scalar>& g) {
    const Mat<Scalar>& x = g.node(ia).value;
    Mat<Scalar> mask = ((x.array() >= lo) && (x.array() <= hi))
                           .template cast<Scalar>()
                           .matrix();
    g.accum(ia, g.node(io).grad.cwiseProduct(mask));
  });
  return out;
}

// Elementwise minimum; the gradient follows the selected branch (ties to a).
template <class Scalar>
Var<Scalar> min(Var<Scalar> a, Var<Scalar> b) {
  Graph<Scalar>& g = *a.g;
  VMAV_CHECK(a.rows() == b.rows() && a.cols() == b.cols(),
             "min: shape mismatch");
  Var<Scalar> out = g.make(a.value().cwiseMin(b.value()), {a.id, b.id});
  int ia = a.id, ib = b.id, io = out.id;
  g.set_back(out, [ia, ib, io](Graph<Scalar>& g) {
    const Mat<Scalar>& av = g.node(ia).value;
    const Mat<Scalar>& bv = g.node(ib).value;
    Mat<Scalar> take_a =
        (av.array() <= bv.array()).template cast<Scalar>().matrix();
    const Mat<Scalar>& dy = g.node(io).grad;
    g.accum(ia, dy.cwiseProduct(take_a));
    g.accum(ib, dy.cwiseProduct((Scalar(1) - take_a.array()).matrix()));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <class Scalar>
Var<Scalar> rows(Var<Scalar> a, Eigen::Index start, Eigen::Index n) {
  Graph<Scalar>& g = *a.g;
  VMAV_CHECK(start >= 0 && start + n <= a.rows(), "rows: out of range");
  Var<Scalar> out = g.make(a.value().middleRows(start, n), {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out, [ia, io, start, n](Graph<Scalar>& g) {
    if (!g.node(ia).needs_grad) return;
    g.grad_of(ia).middleRows(start, n) += g.node(io).grad;
  });
  return out;
}

template <class Scalar>
Var<Scalar> vcat(Var<Scalar> a, Var<Scalar> b) {
  Graph<Scalar>& g = *a.g;
  VMAV_CHECK(a.cols() == b.cols(), "vcat: column mismatch");
  Mat<Scalar> y(a.rows() + b.rows(), a.cols());
  y.topRows(a.rows()) = a.value();
  y.bottomRows(b.rows()) = b.value();
  Eigen::Index ra = a.rows(), rb = b.rows();
  Var<Scalar> out = g.make(std::move(y), {a.id, b.id});
  int ia = a.id, ib = b.id, io = out.id;
  g.set_back(out, [ia, ib, io, ra, rb](Graph<Scalar>& g) {
    const Mat<Scalar>& dy = g.node(io).grad;
    g.accum(ia, dy.topRows(ra));
    g.accum(ib, dy.bottomRows(rb));
  });
  return out;
}

// Y(i*times + t, :) = X(i, :) for t in [0, times).
template <class Scalar>
Var<Scalar> repeat_rows(Var<Scalar> a, Eigen::Index times) {
  Graph<Scalar>& g = *a.g;
  Eigen::Index r = a.rows();
  Mat<Scalar> y(r * times, a.cols());
  for (Eigen::Index i = 0; i < r; ++i)
    y.middleRows(i * times, times) = a.value().row(i).replicate(times, 1);
  Var<Scalar> out = g.make(std::move(y), {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out, [ia, io, times, r](Graph<Scalar>& g) {
    if (!g.node(ia).needs_grad) return;
    const Mat<Scalar>& dy = g.node(io).grad;
    Mat<Scalar>& dx = g.grad_of(ia);
    for (Eigen::Index i = 0; i < r; ++i)
      dx.row(i) += dy.middleRows(i * times, times).colwise().sum();
  });
  return out;
}

// Y(0, b) = X(idx[b], b); selects one row per column.
template <class Scalar>
Var<Scalar> gather_rows(Var<Scalar> a, std::vector<int> idx) {
  Graph<Scalar>& g = *a.g;
  VMAV_CHECK(static_cast<Eigen::Index>(idx.size()) == a.cols(),
             "gather_rows: one index per column required");
  Mat<Scalar> y(1, a.cols());
  for (Eigen::Index b = 0; b < a.cols(); ++b) {
    VMAV_CHECK(idx[static_cast<std::size_t>(b)] >= 0 &&
                   idx[static_cast<std::size_t>(b)] < a.rows(),
               "gather_rows: index out of range");
    y(0, b) = a.value()(idx[static_cast<std::size_t>(b)], b);
  }
  Var<Scalar> out = g.make(std::move(y), {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out, [ia, io, idx = std::move(idx)](Graph<Scalar>& g) {
    if (!g.node(ia).needs_grad) return;
    const Mat<Scalar>& dy = g.node(io).grad;
    Mat<Scalar>& dx = g.grad_of(ia);
    for (Eigen::Index b = 0; b < dy.cols(); ++b)
      dx(idx[static_cast<std::size_t>(b)], b) += dy(0, b);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  Graph<Scalar>& g = *a.g;
  Mat<Scalar> y(1, 1);
  y(0, 0) = a.value().sum();
  Var<Scalar> out = g.make(std::move(y), {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out, [ia, io](Graph<Scalar>& g) {
    const Mat<Scalar>& x = g.node(ia).value;
    g.accum(ia, Mat<Scalar>::Constant(x.rows(), x.cols(),
                                      g.node(io).grad(0, 0)));
  });
  return out;
}

template <class Scalar>
Var<Scalar> mean(Var<Scalar> a) {
  Scalar inv = Scalar(1) / static_cast<Scalar>(a.value().size());
  return scale(sum(a), inv);
}

// Column sums: (R x B) -> (1 x B).
template <class Scalar>
Var<Scalar> colwise_sum(Var<Scalar> a) {
  Graph<Scalar>& g = *a.g;
  Var<Scalar> out = g.make(a.value().colwise().sum(), {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out, [ia, io](Graph<Scalar>& g) {
    const Mat<Scalar>& dy = g.node(io).grad;
    g.accum(ia, dy.replicate(g.node(ia).value.rows(), 1));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Softmax family (columnwise over each sample)
// ---------------------------------------------------------------------------

template <class Scalar>
Var<Scalar> softmax_cols(Var<Scalar> a) {
  Graph<Scalar>& g = *a.g;
  Mat<Scalar> y = a.value();
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    Scalar m = y.col(c).maxCoeff();
    y.col(c) = (y.col(c).array() - m).exp();
    y.col(c) /= y.col(c).sum();
  }
  Var<Scalar> out = g.make(std::move(y), {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out, [ia, io](Graph<Scalar>& g) {
    const Mat<Scalar>& y = g.node(io).value;
    const Mat<Scalar>& dy = g.node(io).grad;
    Mat<Scalar> dot = (dy.cwiseProduct(y)).colwise().sum();  // 1xB
    g.accum(ia, y.cwiseProduct(dy - dot.replicate(y.rows(), 1)));
  });
  return out;
}

template <class Scalar>
Var<Scalar> log_softmax_cols(Var<Scalar> a) {
  Graph<Scalar>& g = *a.g;
  Mat<Scalar> y = a.value();
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    Scalar m = y.col(c).maxCoeff();
    Scalar lse = m + std::log((y.col(c).array() - m).exp().sum());
    y.col(c).array() -= lse;
  }
  Var<Scalar> out = g.make(std::move(y), {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out, [ia, io](Graph<Scalar>& g) {
    const Mat<Scalar>& y = g.node(io).value;
    const Mat<Scalar>& dy = g.node(io).grad;
    Mat<Scalar> colsum = dy.colwise().sum();  // 1xB
    g.accum(ia, dy - y.array().exp().matrix().cwiseProduct(
                         colsum.replicate(y.rows(), 1)));
  });
  return out;
}

// Grouped log-sum-exp over blocks of `group` consecutive rows:
// (G*group x B) -> (G x B). Stable.
template <class Scalar>
Var<Scalar> group_logsumexp(Var<Scalar> a, Eigen::Index group) {
  Graph<Scalar>& g = *a.g;
  VMAV_CHECK(a.rows() % group == 0, "group_logsumexp: rows not divisible");
  Eigen::Index ng = a.rows() / group;
  Mat<Scalar> y(ng, a.cols());
  const Mat<Scalar>& x = a.value();
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    for (Eigen::Index i = 0; i < ng; ++i) {
      auto blk = x.col(c).segment(i * group, group);
      Scalar m = blk.maxCoeff();
      y(i, c) = m + std::log((blk.array() - m).exp().sum());
    }
  Var<Scalar> out = g.make(std::move(y), {a.id});
  int ia = a.id, io = out.id;
  g.set_back(out, [ia, io, group, ng](Graph<Scalar>& g) {
    if (!g.node(ia).needs_grad) return;
    const Mat<Scalar>& x = g.node(ia).value;
    const Mat<Scalar>& y = g.node(io).value;
    const Mat<Scalar>& dy = g.node(io).grad;
    Mat<Scalar>& dx = g.grad_of(ia);
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      for (Eigen::Index i = 0; i < ng; ++i)
        dx.col(c).segment(i * group, group) +=
            dy(i, c) *
            (x.col(c).segment(i * group, group).array() - y(i, c)).exp()
                .matrix();
  });
  return out;
}

}  // namespace vmav
