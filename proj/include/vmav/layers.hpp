#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vmav/autodiff.hpp"
#include "vmav/common.hpp"

namespace vmav {

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

// Fan-in scaled uniform: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <class Scalar>
void init_fanin_uniform(ParamTensor<Scalar>& p, Eigen::Index fan_in,
                        Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Eigen::Index j = 0; j < p.value.cols(); ++j)
    for (Eigen::Index i = 0; i < p.value.rows(); ++i)
      p.value(i, j) = static_cast<Scalar>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------------------
// Fully connected
// ---------------------------------------------------------------------------

template <class Scalar>
struct Linear {
  ParamTensor<Scalar>* w = nullptr;  // out x in
  ParamTensor<Scalar>* b = nullptr;  // out x 1
};

template <class Scalar>
Linear<Scalar> make_linear(ParamSet<Scalar>& ps, const std::string& name,
                           Eigen::Index in, Eigen::Index out, Rng& rng) {
  Linear<Scalar> l;
  l.w = &ps.add(name + ".w", out, in);
  l.b = &ps.add(name + ".b", out, 1);
  init_fanin_uniform(*l.w, in, rng);
  return l;
}

template <class Scalar>
Var<Scalar> apply(Graph<Scalar>& g, const Linear<Scalar>& l, Var<Scalar> x) {
  return add_colwise(matmul(g.param(*l.w), x), g.param(*l.b));
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM). Images are stored one per column in
// channel-major order: index = c*H*W + y*W + x.
// ---------------------------------------------------------------------------

struct ConvShape {
  Eigen::Index cin = 0, h = 0, w = 0;
  Eigen::Index cout = 0, k = 0, stride = 1, pad = 0;

  Eigen::Index out_h() const { return (h + 2 * pad - k) / stride + 1; }
  Eigen::Index out_w() const { return (w + 2 * pad - k) / stride + 1; }
  Eigen::Index in_size() const { return cin * h * w; }
  Eigen::Index out_size() const { return cout * out_h() * out_w(); }
};

// col: (cin*k*k) x (out_h*out_w), filled from one image column.
template <class Scalar>
void im2col(const ConvShape& s, const Scalar* img, Mat<Scalar>& col) {
  const Eigen::Index oh = s.out_h(), ow = s.out_w();
  for (Eigen::Index c = 0; c < s.cin; ++c)
    for (Eigen::Index ky = 0; ky < s.k; ++ky)
      for (Eigen::Index kx = 0; kx < s.k; ++kx) {
        Eigen::Index r = (c * s.k + ky) * s.k + kx;
        for (Eigen::Index oy = 0; oy < oh; ++oy) {
          Eigen::Index y = oy * s.stride - s.pad + ky;
          for (Eigen::Index ox = 0; ox < ow; ++ox) {
            Eigen::Index x = ox * s.stride - s.pad + kx;
            Scalar v = Scalar(0);
            if (y >= 0 && y < s.h && x >= 0 && x < s.w)
              v = img[(c * s.h + y) * s.w + x];
            col(r, oy * ow + ox) = v;
          }
        }
      }
}

// Scatter-add transpose of im2col.
template <class Scalar>
void col2im(const ConvShape& s, const Mat<Scalar>& col, Scalar* img) {
  const Eigen::Index oh = s.out_h(), ow = s.out_w();
  for (Eigen::Index c = 0; c < s.cin; ++c)
    for (Eigen::Index ky = 0; ky < s.k; ++ky)
      for (Eigen::Index kx = 0; kx < s.k; ++kx) {
        Eigen::Index r = (c * s.k + ky) * s.k + kx;
        for (Eigen::Index oy = 0; oy < oh; ++oy) {
          Eigen::Index y = oy * s.stride - s.pad + ky;
          if (y < 0 || y >= s.h) continue;
          for (Eigen::Index ox = 0; ox < ow; ++ox) {
            Eigen::Index x = ox * s.stride - s.pad + kx;
            if (x < 0 || x >= s.w) continue;
            img[(c * s.h + y) * s.w + x] += col(r, oy * ow + ox);
          }
        }
      }
}

template <class Scalar>
struct Conv2d {
  ParamTensor<Scalar>* w = nullptr;  // cout x (cin*k*k)
  ParamTensor<Scalar>* b = nullptr;  // cout x 1
  ConvShape shape;
};

template <class Scalar>
Conv2d<Scalar> make_conv2d(ParamSet<Scalar>& ps, const std::string& name,
                           ConvShape shape, Rng& rng) {
  Conv2d<Scalar> c;
  c.shape = shape;
  Eigen::Index fan_in = shape.cin * shape.k * shape.k;
  c.w = &ps.add(name + ".w", shape.cout, fan_in);
  c.b = &ps.add(name + ".b", shape.cout, 1);
  init_fanin_uniform(*c.w, fan_in, rng);
  return c;
}

// x: (cin*h*w) x B  ->  (cout*oh*ow) x B. The im2col buffer is recomputed in
// the backward pass instead of being cached on the tape.
template <class Scalar>
Var<Scalar> conv2d(Graph<Scalar>& g, const Conv2d<Scalar>& layer,
                   Var<Scalar> x) {
  const ConvShape s = layer.shape;
  VMAV_CHECK(x.rows() == s.in_size(), "conv2d: input size mismatch");
  Var<Scalar> wv = g.param(*layer.w);
  Var<Scalar> bv = g.param(*layer.b);
  const Eigen::Index B = x.cols(), oh = s.out_h(), ow = s.out_w();
  const Eigen::Index npos = oh * ow;

  // Flattened outputs must stay channel-major (channel is the slowest index),
  // so per-image results are held as (npos x cout) and flattened column-major.
  Mat<Scalar> col(s.cin * s.k * s.k, npos);
  Mat<Scalar> y(s.out_size(), B);
  for (Eigen::Index i = 0; i < B; ++i) {
    im2col(s, x.value().col(i).data(), col);
    Mat<Scalar> yi = col.transpose() * layer.w->value.transpose();
    yi.rowwise() += layer.b->value.col(0).transpose();
    y.col(i) = Eigen::Map<const Mat<Scalar>>(yi.data(), yi.size(), 1);
  }
  Var<Scalar> out = g.make(std::move(y), {x.id, wv.id, bv.id});
  int ix = x.id, iw = wv.id, ib = bv.id, io = out.id;
  g.set_back(out, [ix, iw, ib, io, s](Graph<Scalar>& g) {
    const Eigen::Index B = g.node(ix).value.cols();
    const Eigen::Index npos = s.out_h() * s.out_w();
    const Mat<Scalar>& wval = g.node(iw).value;
    Mat<Scalar> col(s.cin * s.k * s.k, npos);
    bool need_x = g.node(ix).needs_grad;
    for (Eigen::Index i = 0; i < B; ++i) {
      Eigen::Map<const Mat<Scalar>> dyi(g.node(io).grad.col(i).data(), npos,
                                        s.cout);
      im2col(s, g.node(ix).value.col(i).data(), col);
      g.accum(iw, dyi.transpose() * col.transpose());
      g.accum(ib, dyi.colwise().sum().transpose());
      if (need_x) {
        Mat<Scalar> dcol = wval.transpose() * dyi.transpose();
        col2im(s, dcol, g.grad_of(ix).col(i).data());
      }
    }
  });
  return out;
}

// Transposed convolution. With input (cin, h, w) it produces
// (cout, (h-1)*stride - 2*pad + k, ...): the data-gradient of the conv that
// maps the output geometry back onto the input geometry.
template <class Scalar>
struct Deconv2d {
  ParamTensor<Scalar>* w = nullptr;  // cin x (cout*k*k)
  ParamTensor<Scalar>* b = nullptr;  // cout x 1
  ConvShape conv;                    // the underlying forward-conv geometry
  Eigen::Index cin = 0, h = 0, w_in = 0;
};

template <class Scalar>
Deconv2d<Scalar> make_deconv2d(ParamSet<Scalar>& ps, const std::string& name,
                               Eigen::Index cin, Eigen::Index h,
                               Eigen::Index w, Eigen::Index cout,
                               Eigen::Index k, Eigen::Index stride,
                               Eigen::Index pad, Rng& rng) {
  Deconv2d<Scalar> d;
  d.cin = cin;
  d.h = h;
  d.w_in = w;
  d.conv = ConvShape{cout, (h - 1) * stride - 2 * pad + k,
                     (w - 1) * stride - 2 * pad + k, cin, k, stride, pad};
  VMAV_CHECK(d.conv.out_h() == h && d.conv.out_w() == w,
             "deconv2d: geometry does not invert");
  Eigen::Index fan_in = cin * k * k;
  d.w = &ps.add(name + ".w", cin, cout * k * k);
  d.b = &ps.add(name + ".b", cout, 1);
  init_fanin_uniform(*d.w, fan_in, rng);
  return d;
}

template <class Scalar>
Var<Scalar> deconv2d(Graph<Scalar>& g, const Deconv2d<Scalar>& layer,
                     Var<Scalar> x) {
  const ConvShape s = layer.conv;  // cin here = deconv output channels
  VMAV_CHECK(x.rows() == layer.cin * layer.h * layer.w_in,
             "deconv2d: input size mismatch");
  Var<Scalar> wv = g.param(*layer.w);
  Var<Scalar> bv = g.param(*layer.b);
  const Eigen::Index B = x.cols();
  const Eigen::Index npos = s.out_h() * s.out_w();  // = h*w of the input
  const Eigen::Index out_sz = s.in_size();          // cout*oh*ow of deconv

  // As with conv2d, per-image views are (positions x channels) so that the
  // flattened column layout stays channel-major.
  Mat<Scalar> y(out_sz, B);
  for (Eigen::Index i = 0; i < B; ++i) {
    Eigen::Map<const Mat<Scalar>> xi(x.value().col(i).data(), npos,
                                     layer.cin);
    Mat<Scalar> cols = layer.w->value.transpose() * xi.transpose();
    y.col(i).setZero();
    col2im(s, cols, y.col(i).data());
    Eigen::Map<Mat<Scalar>> yi(y.col(i).data(), s.h * s.w, s.cin);
    yi.rowwise() += layer.b->value.col(0).transpose();
  }
  Var<Scalar> out = g.make(std::move(y), {x.id, wv.id, bv.id});
  int ix = x.id, iw = wv.id, ib = bv.id, io = out.id;
  Eigen::Index cin = layer.cin;
  g.set_back(out, [ix, iw, ib, io, s, cin, npos](Graph<Scalar>& g) {
    const Eigen::Index B = g.node(ix).value.cols();
    Mat<Scalar> dcol(s.cin * s.k * s.k, npos);
    for (Eigen::Index i = 0; i < B; ++i) {
      im2col(s, g.node(io).grad.col(i).data(), dcol);
      Eigen::Map<const Mat<Scalar>> xi(g.node(ix).value.col(i).data(), npos,
                                       cin);
      g.accum(iw, xi.transpose() * dcol.transpose());
      Eigen::Map<const Mat<Scalar>> dyi(g.node(io).grad.col(i).data(),
                                        s.h * s.w, s.cin);
      g.accum(ib, dyi.colwise().sum().transpose());
      if (g.node(ix).needs_grad) {
        Mat<Scalar> dxi =
            (g.node(iw).value * dcol).transpose();  // npos x cin
        g.grad_of(ix).col(i) +=
            Eigen::Map<const Mat<Scalar>>(dxi.data(), dxi.size(), 1);
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

template <class Scalar>
struct LstmLayer {
  ParamTensor<Scalar>* wx = nullptr;  // 4H x D
  ParamTensor<Scalar>* wh = nullptr;  // 4H x H
  ParamTensor<Scalar>* b = nullptr;   // 4H x 1
  Eigen::Index input = 0, hidden = 0;
};

template <class Scalar>
LstmLayer<Scalar> make_lstm_layer(ParamSet<Scalar>& ps,
                                  const std::string& name, Eigen::Index input,
                                  Eigen::Index hidden, Rng& rng) {
  LstmLayer<Scalar> l;
  l.input = input;
  l.hidden = hidden;
  l.wx = &ps.add(name + ".wx", 4 * hidden, input);
  l.wh = &ps.add(name + ".wh", 4 * hidden, hidden);
  l.b = &ps.add(name + ".b", 4 * hidden, 1);
  init_fanin_uniform(*l.wx, input, rng);
  init_fanin_uniform(*l.wh, hidden, rng);
  return l;
}

// Fused cell. Gate order in the packed 4H rows: input, forget, cell, output.
// Returns a stacked (2H x B) node: rows [0,H) = h', rows [H,2H) = c'.
template <class Scalar>
Var<Scalar> lstm_cell(Graph<Scalar>& g, const LstmLayer<Scalar>& l,
                      Var<Scalar> x, Var<Scalar> h_prev, Var<Scalar> c_prev) {
  const Eigen::Index H = l.hidden, B = x.cols();
  VMAV_CHECK(x.rows() == l.input && h_prev.rows() == H && c_prev.rows() == H,
             "lstm_cell: shape mismatch");
  Var<Scalar> wx = g.param(*l.wx);
  Var<Scalar> wh = g.param(*l.wh);
  Var<Scalar> bv = g.param(*l.b);

  Mat<Scalar> pre = l.wx->value * x.value() + l.wh->value * h_prev.value();
  pre.colwise() += l.b->value.col(0);
  auto sig = [](const auto& m) {
    return (Scalar(1) / (Scalar(1) + (-m.array()).exp())).matrix().eval();
  };
  Mat<Scalar> gi = sig(pre.middleRows(0, H));

  Mat<Scalar> gf = sig(pre.middleRows(H, H));
  Mat<Scalar> gg = pre.middleRows(2 * H, H).array().tanh().matrix();
  Mat<Scalar> go = sig(pre.middleRows(3 * H, H));

  Mat<Scalar> out(2 * H, B);
  out.bottomRows(H) = gf.cwiseProduct(c_prev.value()) + gi.cwiseProduct(gg);
  Mat<Scalar> tc = out.bottomRows(H).array().tanh().matrix();
  out.topRows(H) = go.cwiseProduct(tc);

  Var<Scalar> o =
      g.make(std::move(out), {x.id, h_prev.id, c_prev.id, wx.id, wh.id, bv.id});
  int ix = x.id, ih = h_prev.id, ic = c_prev.id;
  int iwx = wx.id, iwh = wh.id, ib = bv.id, io = o.id;
  g.set_back(o, [ix, ih, ic, iwx, iwh, ib, io, H, gi = std::move(gi),
                 gf = std::move(gf), gg = std::move(gg), go = std::move(go),
                 tc = std::move(tc)](Graph<Scalar>& g) {
    const Mat<Scalar>& dout = g.node(io).grad;
    auto dh = dout.topRows(H);
    Mat<Scalar> dc = dout.bottomRows(H) +
                     (dh.cwiseProduct(go).array() *
                      (Scalar(1) - tc.array().square()))
                         .matrix();
    Mat<Scalar> dpre(4 * H, dout.cols());
    dpre.middleRows(0, H) = (dc.cwiseProduct(gg).array() * gi.array() *
                             (Scalar(1) - gi.array()))
                                .matrix();
    dpre.middleRows(H, H) = (dc.cwiseProduct(g.node(ic).value).array() *
                             gf.array() * (Scalar(1) - gf.array()))
                                .matrix();
    dpre.middleRows(2 * H, H) =
        (dc.cwiseProduct(gi).array() * (Scalar(1) - gg.array().square()))
            .matrix();
    dpre.middleRows(3 * H, H) =
        (dh.cwiseProduct(tc).array() * go.array() * (Scalar(1) - go.array()))
            .matrix();

    g.accum(iwx, dpre * g.node(ix).value.transpose());
    g.accum(iwh, dpre * g.node(ih).value.transpose());
    g.accum(ib, dpre.rowwise().sum());
    g.accum(ix, g.node(iwx).value.transpose() * dpre);
    g.accum(ih, g.node(iwh).value.transpose() * dpre);
    g.accum(ic, dc.cwiseProduct(gf));
  });
  return o;
}

// A stack of LSTM layers stepped together; layer i feeds layer i+1.
template <class Scalar>
struct LstmStack {
  std::vector<LstmLayer<Scalar>> layers;

  Eigen::Index hidden() const { return layers.empty() ? 0 : layers[0].hidden; }
  Eigen::Index depth() const {
    return static_cast<Eigen::Index>(layers.size());
  }
};

template <class Scalar>
LstmStack<Scalar> make_lstm_stack(ParamSet<Scalar>& ps,
                                  const std::string& name, Eigen::Index input,
                                  Eigen::Index hidden, Eigen::Index depth,
                                  Rng& rng) {
  LstmStack<Scalar> s;
  for (Eigen::Index i = 0; i < depth; ++i)
    s.layers.push_back(make_lstm_layer(ps,
                                       name + ".l" + std::to_string(i),
                                       i == 0 ? input : hidden, hidden, rng));
  return s;
}

// Per-layer recurrent state as graph nodes, so BPTT flows through steps.
template <class Scalar>
struct LstmStateVars {
  std::vector<Var<Scalar>> h, c;
};

template <class Scalar>
LstmStateVars<Scalar> lstm_zero_state(Graph<Scalar>& g,
                                      const LstmStack<Scalar>& s,
                                      Eigen::Index batch) {
  LstmStateVars<Scalar> st;
  for (Eigen::Index i = 0; i < s.depth(); ++i) {
    st.h.push_back(g.constant(Mat<Scalar>::Zero(s.hidden(), batch)));
    st.c.push_back(g.constant(Mat<Scalar>::Zero(s.hidden(), batch)));
  }
  return st;
}

// Advances every layer one step. Returns the top layer's h; `st` is updated
// in place to the new state.
template <class Scalar>
Var<Scalar> lstm_stack_step(Graph<Scalar>& g, const LstmStack<Scalar>& s,
                            Var<Scalar> x, LstmStateVars<Scalar>& st) {
  Var<Scalar> inp = x;
  const Eigen::Index H = s.hidden();
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    Var<Scalar> packed = lstm_cell(g, s.layers[i], inp, st.h[i], st.c[i]);
    st.h[i] = rows(packed, 0, H);
    st.c[i] = rows(packed, H, H);
    inp = st.h[i];
  }
  return inp;
}

}  // namespace vmav
