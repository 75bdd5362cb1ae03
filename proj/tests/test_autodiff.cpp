#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "vmav/autodiff.hpp"
#include "vmav/gradcheck.hpp"
#include "vmav/layers.hpp"
#include "vmav/optim.hpp"

using namespace vmav;

using D = double;

TEST_CASE("rng determinism and ranges") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng r(7);
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    std::size_t k = r.uniform_index(13);
    CHECK(k < 13);
  }
  Rng n(3);
  double sum = 0, sq = 0;
  const int N = 20000;
  for (int i = 0; i < N; ++i) {
    double x = n.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / N) < 0.05);
  CHECK(std::abs(sq / N - 1.0) < 0.05);
  Rng f1(9), f2(9);
  Rng c1 = f1.fork("stream", 0), c2 = f2.fork("stream", 0);
  CHECK(c1.next_u64() == c2.next_u64());
  Rng other = f1.fork("stream", 1);
  CHECK(c1.next_u64() != other.next_u64());
}

TEST_CASE("param set rejects duplicates and counts scalars") {
  ParamSet<D> ps;
  ps.add("a", 2, 3);
  ps.add("b", 1, 1);
  CHECK_THROWS(ps.add("a", 1, 1));
  CHECK(ps.scalar_count() == 7);
  CHECK(ps.find("b") != nullptr);
  CHECK(ps.find("missing") == nullptr);
}

TEST_CASE("matmul forward and backward against hand values") {
  ParamSet<D> ps;
  auto& A = ps.add("A", 2, 2);
  auto& B = ps.add("B", 2, 1);
  A.value << 1, 2, 3, 4;
  B.value << 5, 6;
  Graph<D> g;
  auto y = matmul(g.param(A), g.param(B));
  CHECK(y.value()(0, 0) == doctest::Approx(17));
  CHECK(y.value()(1, 0) == doctest::Approx(39));
  auto loss = sum(y);
  g.backward(loss);
  // d(sum(AB))/dA = ones * B^T, /dB = A^T * ones
  CHECK(A.grad(0, 0) == doctest::Approx(5));
  CHECK(A.grad(0, 1) == doctest::Approx(6));
  CHECK(A.grad(1, 0) == doctest::Approx(5));
  CHECK(B.grad(0, 0) == doctest::Approx(4));
  CHECK(B.grad(1, 0) == doctest::Approx(6));
}

TEST_CASE("softmax of a constant vector is uniform") {
  Graph<D> g;
  auto x = g.constant(Mat<D>::Constant(7, 1, 3.25));
  auto y = softmax_cols(x);
  for (int i = 0; i < 7; ++i)
    CHECK(y.value()(i, 0) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("fully connected passthrough with identity weights") {
  ParamSet<D> ps;
  Rng rng(0);
  auto lin = make_linear(ps, "fc", 4, 4, rng);
  lin.w->value = Mat<D>::Identity(4, 4);
  lin.b->value.setZero();
  Graph<D> g;
  Mat<D> x(4, 3);
  Rng xr(5);
  fill_uniform(xr, x, -1.0, 1.0);
  auto y = apply(g, lin, g.constant(x));
  CHECK((y.value() - x).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("lstm stack step with zero parameters gives zero output") {
  ParamSet<D> ps;
  Rng rng(0);
  auto stack = make_lstm_stack(ps, "lstm", 3, 5, 2, rng);
  for (auto& p : ps) p.value.setZero();
  Graph<D> g;
  auto st = lstm_zero_state(g, stack, 2);
  Mat<D> x(3, 2);
  x.setConstant(0.7);
  auto h = lstm_stack_step(g, stack, g.constant(x), st);
  CHECK(h.value().cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  // c' = sigmoid(0)*tanh(0) keeps the cell at zero as well
  CHECK(st.c[0].value().cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK(st.c[1].value().cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("grad check: quadratic loss") {
  ParamSet<D> ps;
  auto& p = ps.add("p", 4, 3);
  Rng rng(11);
  fill_uniform(rng, p.value, -1.0, 1.0);
  auto run = [&](bool back) {
    Graph<D> g;
    auto loss = scale(sum(square(g.param(p))), 0.5);
    if (back) g.backward(loss);
    return loss.value()(0, 0);
  };
  ps.zero_grads();
  run(true);
  CHECK((p.grad - p.value).cwiseAbs().maxCoeff() < 1e-12);
  double err = grad_check<D>(ps, [&] { return run(false); }, 1e-6);
  CHECK(err < 1e-8);
}

TEST_CASE("grad check: elementwise op chain") {
  ParamSet<D> ps;
  auto& p = ps.add("p", 3, 4);
  Rng rng(13);
  fill_uniform(rng, p.value, -0.8, 0.8);
  auto run = [&](bool back) {
    Graph<D> g;
    auto v = g.param(p);
    auto a = tanh(mul(v, sigmoid(v)));
    auto b = add(relu(v), exp(scale(v, 0.5)));
    auto c = log(add_scalar(square(b), 1.0));
    auto loss = mean(add(mul(a, c), clip(v, -0.5, 0.4)));
    if (back) g.backward(loss);
    return loss.value()(0, 0);
  };
  ps.zero_grads();
  run(true);
  double err = grad_check<D>(ps, [&] { return run(false); }, 1e-6);
  CHECK(err < 1e-7);
}

TEST_CASE("grad check: softmax, log_softmax, min, shape ops") {
  ParamSet<D> ps;
  auto& p = ps.add("p", 6, 5);
  auto& q = ps.add("q", 6, 5);
  Rng rng(17);
  fill_uniform(rng, p.value, -1.0, 1.0);
  fill_uniform(rng, q.value, -1.0, 1.0);
  std::vector<int> idx = {0, 3, 5, 2, 4};
  auto run = [&](bool back) {
    Graph<D> g;
    auto a = g.param(p), b = g.param(q);
    auto sm = softmax_cols(a);
    auto lsm = log_softmax_cols(b);
    auto m = min(sm, exp(lsm));
    auto picked = gather_rows(vcat(m, rows(a, 1, 3)), idx);
    auto weighted = mul_rowwise(lsm, picked);
    auto loss = add(sum(weighted), sum(colwise_sum(rows(sm, 2, 2))));
    if (back) g.backward(loss);
    return loss.value()(0, 0);
  };
  ps.zero_grads();
  run(true);
  double err = grad_check<D>(ps, [&] { return run(false); }, 1e-6);
  CHECK(err < 1e-6);
}

TEST_CASE("group_logsumexp matches naive oracle and grad checks") {
  ParamSet<D> ps;
  auto& p = ps.add("p", 10, 3);
  Rng rng(19);
  fill_uniform(rng, p.value, -2.0, 2.0);
  Graph<D> g;
  auto y = group_logsumexp(g.param(p), 5);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 2; ++i) {
      double s = 0;
      for (int k = 0; k < 5; ++k) s += std::exp(p.value(i * 5 + k, c));
      CHECK(y.value()(i, c) == doctest::Approx(std::log(s)).epsilon(1e-12));
    }
  auto run = [&](bool back) {
    Graph<D> g2;
    auto l = sum(square(group_logsumexp(g2.param(p), 5)));
    if (back) g2.backward(l);
    return l.value()(0, 0);
  };
  ps.zero_grads();
  run(true);
  CHECK(grad_check<D>(ps, [&] { return run(false); }, 1e-6) < 1e-7);
}

TEST_CASE("repeat_rows layout and gradient") {
  ParamSet<D> ps;
  auto& p = ps.add("p", 3, 2);
  p.value << 1, 2, 3, 4, 5, 6;
  Graph<D> g;
  auto y = repeat_rows(g.param(p), 2);
  CHECK(y.rows() == 6);
  CHECK(y.value()(0, 0) == 1);
  CHECK(y.value()(1, 0) == 1);
  CHECK(y.value()(2, 0) == 3);
  CHECK(y.value()(5, 1) == 6);
  auto run = [&](bool back) {
    Graph<D> g2;
    auto l = sum(square(repeat_rows(g2.param(p), 4)));
    if (back) g2.backward(l);
    return l.value()(0, 0);
  };
  ps.zero_grads();
  run(true);
  CHECK(grad_check<D>(ps, [&] { return run(false); }, 1e-6) < 1e-8);
}

namespace {

// Independent direct convolution used as the oracle for the im2col path.
template <class S>
Mat<S> conv_oracle(const ConvShape& s, const Mat<S>& x, const Mat<S>& w,
                   const Mat<S>& b) {
  const Eigen::Index oh = s.out_h(), ow = s.out_w(), B = x.cols();
  Mat<S> y(s.out_size(), B);
  for (Eigen::Index img = 0; img < B; ++img)
    for (Eigen::Index co = 0; co < s.cout; ++co)
      for (Eigen::Index oy = 0; oy < oh; ++oy)
        for (Eigen::Index ox = 0; ox < ow; ++ox) {
          S acc = b(co, 0);
          for (Eigen::Index ci = 0; ci < s.cin; ++ci)
            for (Eigen::Index ky = 0; ky < s.k; ++ky)
              for (Eigen::Index kx = 0; kx < s.k; ++kx) {
                Eigen::Index yy = oy * s.stride - s.pad + ky;
                Eigen::Index xx = ox * s.stride - s.pad + kx;
                if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
                acc += w(co, (ci * s.k + ky) * s.k + kx) *
                       x((ci * s.h + yy) * s.w + xx, img);
              }
          y((co * oh + oy) * ow + ox, img) = acc;
        }
  return y;
}

}  // namespace

TEST_CASE("conv2d matches direct convolution oracle") {
  ConvShape s{3, 6, 8, 4, 4, 2, 1};
  CHECK(s.out_h() == 3);
  CHECK(s.out_w() == 4);
  ParamSet<D> ps;
  Rng rng(23);
  auto conv = make_conv2d(ps, "c", s, rng);
  fill_uniform(rng, conv.b->value, -0.5, 0.5);
  Mat<D> x(s.in_size(), 2);
  fill_uniform(rng, x, -1.0, 1.0);
  Graph<D> g;
  auto y = conv2d(g, conv, g.constant(x));
  Mat<D> want = conv_oracle(s, x, conv.w->value, conv.b->value);
  CHECK((y.value() - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("conv2d gradients") {
  ConvShape s{2, 5, 6, 3, 3, 2, 1};
  ParamSet<D> ps;
  Rng rng(29);
  auto conv = make_conv2d(ps, "c", s, rng);
  auto& xin = ps.add("x", s.in_size(), 2);
  fill_uniform(rng, xin.value, -1.0, 1.0);
  auto run = [&](bool back) {
    Graph<D> g;
    auto y = relu(conv2d(g, conv, g.param(xin)));
    auto l = mean(square(y));
    if (back) g.backward(l);
    return l.value()(0, 0);
  };
  ps.zero_grads();
  run(true);
  CHECK(grad_check<D>(ps, [&] { return run(false); }, 1e-6) < 1e-6);
}

TEST_CASE("deconv2d inverts conv geometry and grad checks") {
  ParamSet<D> ps;
  Rng rng(31);
  auto dec = make_deconv2d(ps, "d", 3, 4, 5, 2, 4, 2, 1, rng);
  CHECK(dec.conv.h == 8);
  CHECK(dec.conv.w == 10);
  auto& xin = ps.add("x", 3 * 4 * 5, 2);
  fill_uniform(rng, xin.value, -1.0, 1.0);
  auto run = [&](bool back) {
    Graph<D> g;
    auto y = sigmoid(deconv2d(g, dec, g.param(xin)));
    auto l = mean(square(y));
    if (back) g.backward(l);
    return l.value()(0, 0);
  };
  ps.zero_grads();
  run(true);
  CHECK(grad_check<D>(ps, [&] { return run(false); }, 1e-6) < 1e-6);
}

TEST_CASE("deconv2d is the adjoint of conv2d") {
  // <conv(x), y> == <x, deconv(y)> when deconv reuses the conv weights and
  // both biases are zero.
  ConvShape s{2, 6, 6, 3, 4, 2, 1};
  ParamSet<D> ps;
  Rng rng(37);
  auto conv = make_conv2d(ps, "c", s, rng);
  auto dec = make_deconv2d(ps, "d", s.cout, s.out_h(), s.out_w(), s.cin, s.k,
                           s.stride, s.pad, rng);
  dec.w->value = conv.w->value;
  Mat<D> x(s.in_size(), 1), y(s.out_size(), 1);
  fill_uniform(rng, x, -1.0, 1.0);
  fill_uniform(rng, y, -1.0, 1.0);
  Graph<D> g;
  auto cx = conv2d(g, conv, g.constant(x));
  auto dy = deconv2d(g, dec, g.constant(y));
  double lhs = (cx.value().transpose() * y)(0, 0);
  double rhs = (x.transpose() * dy.value())(0, 0);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("lstm gradients through time") {
  ParamSet<D> ps;
  Rng rng(41);
  auto stack = make_lstm_stack(ps, "lstm", 3, 4, 2, rng);
  std::vector<Mat<D>> xs;
  for (int t = 0; t < 3; ++t) {
    Mat<D> x(3, 2);
    fill_uniform(rng, x, -1.0, 1.0);
    xs.push_back(x);
  }
  auto run = [&](bool back) {
    Graph<D> g;
    auto st = lstm_zero_state(g, stack, 2);
    Var<D> last;
    for (auto& x : xs) last = lstm_stack_step(g, stack, g.constant(x), st);
    auto l = mean(square(last));
    if (back) g.backward(l);
    return l.value()(0, 0);
  };
  ps.zero_grads();
  run(true);
  CHECK(grad_check<D>(ps, [&] { return run(false); }, 1e-6) < 1e-6);
}

TEST_CASE("optimizer: zero gradients leave parameters unchanged") {
  ParamSet<D> ps;
  auto& p = ps.add("p", 2, 2);
  p.value << 1, 2, 3, 4;
  Mat<D> before = p.value;
  auto opt = make_adam<D>(0.1);
  optimizer_step(opt, ps);
  CHECK((p.value - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("optimizer: first adam step moves by about lr") {
  ParamSet<D> ps;
  auto& p = ps.add("p", 1, 1);
  p.value(0, 0) = 0.0;
  p.grad(0, 0) = 1.0;
  auto opt = make_adam<D>(0.1);
  optimizer_step(opt, ps);
  CHECK(p.value(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p.grad(0, 0) == 0.0);
}

TEST_CASE("optimizer: rmsprop step matches hand evaluation") {
  ParamSet<D> ps;
  auto& p = ps.add("p", 1, 1);
  p.value(0, 0) = 1.0;
  p.grad(0, 0) = 2.0;
  auto opt = make_rmsprop<D>(0.01);
  optimizer_step(opt, ps);
  double v = 0.1 * 4.0;
  double want = 1.0 - 0.01 * 2.0 / (std::sqrt(v) + 1e-8);
  CHECK(p.value(0, 0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("optimizer: non-finite gradient aborts with parameter name") {
  ParamSet<D> ps;
  ps.add("fine", 1, 1);
  auto& bad = ps.add("broken", 1, 1);
  bad.grad(0, 0) = std::nan("");
  auto opt = make_adam<D>(0.1);
  Mat<D> before = bad.value;
  bool threw = false;
  try {
    optimizer_step(opt, ps);
  } catch (const std::exception& e) {
    threw = true;
    CHECK(std::string(e.what()).find("broken") != std::string::npos);
  }
  CHECK(threw);
  CHECK(bad.value(0, 0) == before(0, 0));
}

TEST_CASE("training trajectory is deterministic under a fixed seed") {
  auto trajectory = [](std::uint64_t seed) {
    Rng rng(seed);
    ParamSet<float> ps;
    auto l1 = make_linear(ps, "l1", 4, 8, rng);
    auto l2 = make_linear(ps, "l2", 8, 1, rng);
    auto opt = make_adam<float>(1e-2);
    for (int it = 0; it < 20; ++it) {
      Mat<float> x(4, 16), t(1, 16);
      fill_uniform(rng, x, -1.0, 1.0);
      fill_uniform(rng, t, -1.0, 1.0);
      Graph<float> g;
      auto y = apply(g, l2, tanh(apply(g, l1, g.constant(x))));
      auto l = mean(square(sub(y, g.constant(t))));
      g.backward(l);
      optimizer_step(opt, ps);
    }
    std::vector<float> out;
    for (auto& p : ps)
      for (Eigen::Index i = 0; i < p.value.size(); ++i)
        out.push_back(p.value.data()[i]);
    return out;
  };
  auto a = trajectory(123), b = trajectory(123), c = trajectory(124);
  CHECK(a == b);
  CHECK(a != c);
}
