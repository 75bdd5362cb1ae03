#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "vmav/autodiff.hpp"
#include "vmav/avf.hpp"
#include "vmav/layers.hpp"
#include "vmav/optim.hpp"

namespace vmav {

inline double clip_scalar(double x, double lo, double hi) {
  VMAV_CHECK(lo <= hi, "clip: lower bound above upper bound");
  if (x < lo) return lo;
  if (x > hi) return hi;
  return x;
}

struct PolicyConfig {
  int input = 288;  // concat of latent (32) and hidden (256)
  int hidden = 64;  // two tanh layers of this width
  int actions = 2;
};

template <class Scalar>
struct Policy {
  PolicyConfig cfg;
  ParamSet<Scalar> params;
  Linear<Scalar> fc1, fc2, out;

  Policy(PolicyConfig c, Rng& rng) : cfg(c) {
    fc1 = make_linear(params, "pi.fc1", cfg.input, cfg.hidden, rng);
    fc2 = make_linear(params, "pi.fc2", cfg.hidden, cfg.hidden, rng);
    out = make_linear(params, "pi.out", cfg.hidden, cfg.actions, rng);
  }

  Var<Scalar> logits_g(Graph<Scalar>& g, Var<Scalar> x) const {
    Var<Scalar> a = tanh(apply(g, fc1, x));
    Var<Scalar> b = tanh(apply(g, fc2, a));
    return apply(g, out, b);
  }

  Mat<Scalar> logits(const Mat<Scalar>& x) const {
    Graph<Scalar> g;
    return logits_g(g, g.constant(x)).value();
  }

  // Column-stochastic action probabilities.
  Mat<Scalar> probs(const Mat<Scalar>& x) const {
    Mat<Scalar> l = logits(x);
    Mat<Scalar> p(l.rows(), l.cols());
    for (Eigen::Index b = 0; b < l.cols(); ++b) {
      Scalar m = l.col(b).maxCoeff();
      Scalar s = 0;
      for (Eigen::Index i = 0; i < l.rows(); ++i)
        s += std::exp(l(i, b) - m);
      for (Eigen::Index i = 0; i < l.rows(); ++i)
        p(i, b) = std::exp(l(i, b) - m) / s;
    }
    VMAV_CHECK(all_finite(p), "policy: non-finite probabilities");
    return p;
  }

  Mat<Scalar> log_probs(const Mat<Scalar>& x) const {
    Graph<Scalar> g;
    return log_softmax_cols(logits_g(g, g.constant(x))).value();
  }

  int sample_action(const Vec<Scalar>& x, Rng& rng) const {
    Mat<Scalar> p = probs(x);
    double u = rng.uniform(), acc = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      acc += double(p(i, 0));
      if (u < acc) return int(i);
    }
    return int(p.rows() - 1);
  }

  int greedy_action(const Vec<Scalar>& x) const {
    Mat<Scalar> l = logits(x);
    Eigen::Index best = 0;
    l.col(0).maxCoeff(&best);
    return int(best);
  }
};

// ---------------------------------------------------------------------------
// Critic: either a plain affine map over the feature vector (latent only,
// or latent + hidden) or the attention value function.
// ---------------------------------------------------------------------------

enum class CriticKind { plain, attention };

template <class Scalar>
struct CriticInputs {
  Mat<Scalar> z;                    // latent x N
  Mat<Scalar> feat;                 // plain-critic features x N
  std::vector<Mat<Scalar>> window;  // attention window, each hidden x N

  Eigen::Index count() const { return z.cols(); }
};

template <class Scalar>
struct Critic {
  CriticKind kind = CriticKind::plain;
  ParamSet<Scalar> plain_params;
  Linear<Scalar> lin;
  std::shared_ptr<Avf<Scalar>> avf;

  static Critic make_plain(int input, Rng& rng) {
    Critic c;
    c.kind = CriticKind::plain;
    c.lin = make_linear(c.plain_params, "critic.lin", input, 1, rng);
    return c;
  }

  static Critic make_attention(AvfConfig cfg, Rng& rng) {
    Critic c;
    c.kind = CriticKind::attention;
    c.avf = std::make_shared<Avf<Scalar>>(cfg, rng);
    return c;
  }

  ParamSet<Scalar>& params() {
    return kind == CriticKind::plain ? plain_params : avf->params;
  }

  Var<Scalar> value_g(Graph<Scalar>& g, const CriticInputs<Scalar>& in) const {
    if (kind == CriticKind::plain)
      return apply(g, lin, g.constant(in.feat));
    std::vector<Var<Scalar>> wv;
    for (const auto& h : in.window) wv.push_back(g.constant(h));
    return avf->value_from_window_g(g, wv, g.constant(in.z));
  }

  Mat<Scalar> value(const CriticInputs<Scalar>& in) const {
    Graph<Scalar> g;
    Mat<Scalar> v = value_g(g, in).value();
    VMAV_CHECK(all_finite(v), "critic: non-finite value");
    return v;
  }
};

// ---------------------------------------------------------------------------
// Rollout storage and the PPO update
// ---------------------------------------------------------------------------

template <class Scalar>
struct RolloutBuffer {
  Mat<Scalar> policy_x;             // policy input x N
  Mat<Scalar> z;                    // latent x N
  Mat<Scalar> feat;                 // plain-critic features x N
  std::vector<Mat<Scalar>> window;  // attention window, each hidden x N
  std::vector<int> actions;
  Mat<Scalar> old_logp;  // 1 x N, frozen before the update epochs
  Mat<Scalar> rewards;   // 1 x N
  Mat<Scalar> dones;     // 1 x N
  Mat<Scalar> returns;   // 1 x N, n-step targets
  Mat<Scalar> adv;       // 1 x N, filled by compute_advantages

  Eigen::Index count() const { return policy_x.cols(); }

  CriticInputs<Scalar> critic_inputs() const {
    return {z, feat, window};
  }

  CriticInputs<Scalar> critic_inputs(const std::vector<int>& idx) const {
    CriticInputs<Scalar> in;
    in.z = cols_of(z, idx);
    if (feat.size() > 0) in.feat = cols_of(feat, idx);
    for (const auto& h : window) in.window.push_back(cols_of(h, idx));
    return in;
  }

  static Mat<Scalar> cols_of(const Mat<Scalar>& m,
                             const std::vector<int>& idx) {
    Mat<Scalar> out(m.rows(), Eigen::Index(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i)
      out.col(Eigen::Index(i)) = m.col(idx[std::size_t(i)]);
    return out;
  }
};

// Negative clipped surrogate (optionally entropy-regularized), to minimize.
template <class Scalar>
Var<Scalar> ppo_loss(Graph<Scalar>& g, const Policy<Scalar>& pi,
                     const Mat<Scalar>& x, const std::vector<int>& actions,
                     const Mat<Scalar>& old_logp, const Mat<Scalar>& adv,
                     double eps, double ent_coef = 0.0) {
  VMAV_CHECK(x.cols() > 0, "ppo_loss: empty batch");
  Var<Scalar> logits = pi.logits_g(g, g.constant(x));
  Var<Scalar> logp_all = log_softmax_cols(logits);
  Var<Scalar> logp = gather_rows(logp_all, actions);
  Var<Scalar> ratio = exp(sub(logp, g.constant(old_logp)));
  Var<Scalar> a = g.constant(adv);
  Var<Scalar> unclipped = mul(ratio, a);
  Var<Scalar> clipped =
      mul(clip(ratio, Scalar(1.0 - eps), Scalar(1.0 + eps)), a);
  Var<Scalar> loss = scale(mean(min(unclipped, clipped)), Scalar(-1));
  if (ent_coef != 0.0) {
    // mean of sum_a p log p, i.e. the negative entropy
    Var<Scalar> neg_ent =
        mean(colwise_sum(mul(softmax_cols(logits), logp_all)));
    loss = add(loss, scale(neg_ent, Scalar(ent_coef)));
  }
  return loss;
}

// Fills buffer.adv with normalized (returns - value) and reports the raw
// mean absolute advantage.
template <class Scalar>
double compute_advantages(RolloutBuffer<Scalar>& buf,
                          const Critic<Scalar>& critic) {
  Mat<Scalar> v = critic.value(buf.critic_inputs());
  Mat<Scalar> raw = buf.returns - v;
  double mean = raw.mean();
  double var = (raw.array() - Scalar(mean)).square().mean();
  buf.adv = ((raw.array() - Scalar(mean)) /
             Scalar(std::sqrt(var) + 1e-8))
                .matrix();
  VMAV_CHECK(all_finite(buf.adv), "compute_advantages: non-finite");
  return raw.cwiseAbs().mean();
}

struct PpoConfig {
  double eps = 0.2;
  int epochs = 4;
  int minibatch = 256;
  int horizon = 2048;  // collected steps per update
  double pi_lr = 3e-4;
  double v_lr = 1e-3;
  double ent_coef = 0.0;
  double lambda = 0.99;
  int nstep_max = 32;
};

struct PpoStats {
  double pi_loss = 0.0;
  double v_loss = 0.0;
  int minibatches = 0;
};

// One PPO update: K epochs of shuffled minibatches; the policy minimizes the
// negative clipped surrogate, the critic the MSE to the stored n-step
// targets. Old log-probs stay frozen throughout.
template <class Scalar>
PpoStats ppo_update(Policy<Scalar>& pi, OptimizerState<Scalar>& pi_opt,
                    Critic<Scalar>& critic, OptimizerState<Scalar>& v_opt,
                    RolloutBuffer<Scalar>& buf, const PpoConfig& cfg,
                    Rng& rng) {
  VMAV_CHECK(buf.count() > 0, "ppo_update: empty buffer");
  compute_advantages(buf, critic);
  PpoStats stats;
  std::vector<int> order(std::size_t(buf.count()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = rng.uniform_index(i);
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t start = 0; start < order.size();
         start += std::size_t(cfg.minibatch)) {
      std::size_t stop =
          std::min(order.size(), start + std::size_t(cfg.minibatch));
      std::vector<int> idx(order.begin() + long(start),
                           order.begin() + long(stop));
      Mat<Scalar> x = RolloutBuffer<Scalar>::cols_of(buf.policy_x, idx);
      Mat<Scalar> olp = RolloutBuffer<Scalar>::cols_of(buf.old_logp, idx);
      Mat<Scalar> adv = RolloutBuffer<Scalar>::cols_of(buf.adv, idx);
      Mat<Scalar> ret = RolloutBuffer<Scalar>::cols_of(buf.returns, idx);
      std::vector<int> acts(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k)
        acts[k] = buf.actions[std::size_t(idx[k])];

      {
        Graph<Scalar> g;
        Var<Scalar> loss =
            ppo_loss(g, pi, x, acts, olp, adv, cfg.eps, cfg.ent_coef);
        VMAV_CHECK(std::isfinite(double(loss.value()(0, 0))),
                   "ppo_update: non-finite policy loss at minibatch " +
                       std::to_string(stats.minibatches));
        stats.pi_loss = double(loss.value()(0, 0));
        pi.params.zero_grads();
        g.backward(loss);
        optimizer_step(pi_opt, pi.params);
      }
      {
        Graph<Scalar> g;
        Var<Scalar> v = critic.value_g(g, buf.critic_inputs(idx));
        Var<Scalar> loss = avf_loss(g, v, ret);
        VMAV_CHECK(std::isfinite(double(loss.value()(0, 0))),
                   "ppo_update: non-finite value loss at minibatch " +
                       std::to_string(stats.minibatches));
        stats.v_loss = double(loss.value()(0, 0));
        critic.params().zero_grads();
        g.backward(loss);
        optimizer_step(v_opt, critic.params());
      }
      ++stats.minibatches;
    }
  }
  return stats;
}

}  // namespace vmav
