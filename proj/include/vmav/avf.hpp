#pragma once

#include <cmath>
#include <vector>

#include "vmav/autodiff.hpp"
#include "vmav/layers.hpp"

namespace vmav {

struct AvfConfig {
  int window = 4;
  int latent = 32;
  int hidden = 256;
  // Context normalization as printed in the source formula: raw scores in
  // the numerator over an exponentiated denominator. Off by default in
  // favour of standard softmax attention.
  bool raw_over_exp = false;
  double lambda = 0.99;
  // Scale the bootstrap term by lambda^T (standard n-step return). When
  // false the bootstrap is added undampened.
  bool discounted_bootstrap = true;
};

// Discounted n-step return over rewards r_1..r_T with an optional
// bootstrapped tail value, gated off when the trajectory ended.
inline double n_step_target(const std::vector<double>& rewards,
                            double bootstrap, int done, double lambda,
                            bool discounted_bootstrap = true) {
  VMAV_CHECK(!rewards.empty(), "n_step_target: empty reward list");
  double v = 0.0, disc = 1.0;
  for (double r : rewards) {
    v += disc * r;
    disc *= lambda;
  }
  if (done == 0) v += (discounted_bootstrap ? disc : 1.0) * bootstrap;
  return v;
}

// Mean squared error between predicted values (1 x B) and targets.
template <class Scalar>
Var<Scalar> avf_loss(Graph<Scalar>& g, Var<Scalar> pred,
                     const Mat<Scalar>& targets) {
  VMAV_CHECK(pred.rows() == 1 && targets.rows() == 1 &&
                 pred.cols() == targets.cols(),
             "avf_loss: prediction/target shape mismatch");
  return mean(square(sub(pred, g.constant(targets))));
}

// Attention-based value function. The window holds the n most recent
// top-layer hidden vectors [h_{t-n}, ..., h_{t-1}], zero-filled before the
// start of an episode. A shared affine map scores each one against the
// current latent, the softmax-weighted sum is the context, and the value is
// an affine map of [z; context].
template <class Scalar>
struct Avf {
  AvfConfig cfg;
  ParamSet<Scalar> params;
  Linear<Scalar> score;      // 1 x (hidden + latent)
  Linear<Scalar> value_map;  // 1 x (latent + hidden)

  Avf(AvfConfig c, Rng& rng) : cfg(c) {
    score = make_linear(params, "avf.score",
                        Eigen::Index(cfg.hidden + cfg.latent), 1, rng);
    value_map = make_linear(params, "avf.value",
                            Eigen::Index(cfg.latent + cfg.hidden), 1, rng);
  }

  // Stacked scores (n x B): row i is the score of h_{t-n+i}.
  Var<Scalar> scores_g(Graph<Scalar>& g,
                       const std::vector<Var<Scalar>>& window,
                       Var<Scalar> z) const {
    VMAV_CHECK(int(window.size()) == cfg.window,
               "attn_scores: wrong window length");
    Var<Scalar> stacked;
    for (int i = 0; i < cfg.window; ++i) {
      Var<Scalar> s = apply(g, score, vcat(window[std::size_t(i)], z));
      stacked = i == 0 ? s : vcat(stacked, s);
    }
    return stacked;
  }

  Var<Scalar> context_g(Graph<Scalar>& g,
                        const std::vector<Var<Scalar>>& window,
                        Var<Scalar> scores) const {
    Var<Scalar> weights;
    if (cfg.raw_over_exp) {
      Var<Scalar> denom = colwise_sum(exp(scores));
      Var<Scalar> inv = exp(scale(log(denom), Scalar(-1)));
      weights = mul_rowwise(scores, inv);
    } else {
      weights = softmax_cols(scores);
    }
    Var<Scalar> c;
    for (int i = 0; i < cfg.window; ++i) {
      Var<Scalar> term =
          mul_rowwise(window[std::size_t(i)], rows(weights, i, 1));
      c = i == 0 ? term : add(c, term);
    }
    return c;
  }

  Var<Scalar> value_g(Graph<Scalar>& g, Var<Scalar> z,
                      Var<Scalar> context) const {
    return apply(g, value_map, vcat(z, context));
  }

  Var<Scalar> value_from_window_g(Graph<Scalar>& g,
                                  const std::vector<Var<Scalar>>& window,
                                  Var<Scalar> z) const {
    Var<Scalar> s = scores_g(g, window, z);
    return value_g(g, z, context_g(g, window, s));
  }

  // Inference helpers over plain matrices (batch as columns).
  Mat<Scalar> attn_scores(const std::vector<Mat<Scalar>>& window,
                          const Mat<Scalar>& z) const {
    Graph<Scalar> g;
    std::vector<Var<Scalar>> w;
    for (const auto& h : window) w.push_back(g.constant(h));
    return scores_g(g, w, g.constant(z)).value();
  }

  Mat<Scalar> value(const std::vector<Mat<Scalar>>& window,
                    const Mat<Scalar>& z) const {
    Graph<Scalar> g;
    std::vector<Var<Scalar>> w;
    for (const auto& h : window) w.push_back(g.constant(h));
    Mat<Scalar> out = value_from_window_g(g, w, g.constant(z)).value();
    VMAV_CHECK(all_finite(out), "avf value: non-finite output");
    return out;
  }
};

}  // namespace vmav
