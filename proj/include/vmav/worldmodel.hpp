#pragma once

#include <cmath>
#include <vector>

#include "vmav/autodiff.hpp"
#include "vmav/layers.hpp"

namespace vmav {

struct MdnConfig {
  int latent = 32;
  int actions = 2;
  int action_embed = 32;
  int hidden = 256;
  int layers = 3;
  int components = 5;
  double alpha = 2.0;  // extra weight on ending states in the done loss
  double beta1 = 1.0;
  double beta2 = 1.0;
};

// Mixture head values for a batch: rows j*K+k hold latent dim j, component k.
template <class Scalar>
struct MdnOut {
  Mat<Scalar> logits;      // (latent*K) x B
  Mat<Scalar> means;       // (latent*K) x B
  Mat<Scalar> logstd;      // (latent*K) x B
  Mat<Scalar> done_logit;  // 1 x B
};

template <class Scalar>
struct MdnHeadVars {
  Var<Scalar> logits, means, logstd, done_logit;
};

// Plain (inference) recurrent state.
template <class Scalar>
struct MdnState {
  std::vector<Mat<Scalar>> h, c;

  void set_zero(int layers, int hidden, int batch) {
    h.assign(std::size_t(layers), Mat<Scalar>::Zero(hidden, batch));
    c.assign(std::size_t(layers), Mat<Scalar>::Zero(hidden, batch));
  }
  const Mat<Scalar>& top() const { return h.back(); }
};

template <class Scalar>
Mat<Scalar> one_hot(const std::vector<int>& actions, int n) {
  Mat<Scalar> m = Mat<Scalar>::Zero(n, Eigen::Index(actions.size()));
  for (std::size_t b = 0; b < actions.size(); ++b) {
    VMAV_CHECK(actions[b] >= 0 && actions[b] < n,
               "one_hot: action out of range");
    m(actions[b], Eigen::Index(b)) = Scalar(1);
  }
  return m;
}

// Teacher-forcing batch: L aligned steps of (z_t, one-hot a_t, z_{t+1}, d).
template <class Scalar>
struct MdnBatch {
  std::vector<Mat<Scalar>> z, a_onehot, z_next, d;

  int steps() const { return int(z.size()); }
  Eigen::Index batch() const { return z.empty() ? 0 : z[0].cols(); }
};

// L_s for one step: -mean over batch of sum_j log sum_k pi_jk N(z_j).
template <class Scalar>
Var<Scalar> mdn_nll(Graph<Scalar>& g, MdnHeadVars<Scalar> head,
                    Var<Scalar> z_next, int components) {
  const Scalar half_log_2pi = Scalar(0.5 * std::log(2.0 * 3.14159265358979323846));
  Var<Scalar> diff = sub(repeat_rows(z_next, components), head.means);
  Var<Scalar> scaled = mul(diff, exp(scale(head.logstd, Scalar(-1))));
  Var<Scalar> log_n = sub(scale(square(scaled), Scalar(-0.5)),
                          add_scalar(head.logstd, half_log_2pi));
  Var<Scalar> num = group_logsumexp(add(head.logits, log_n), components);
  Var<Scalar> den = group_logsumexp(head.logits, components);
  Var<Scalar> per_sample = colwise_sum(sub(num, den));  // 1 x B
  return scale(sum(per_sample), Scalar(-1) / Scalar(per_sample.cols()));
}

// L_p for one step: -mean of [alpha d log q + (1-d) log(1-q)], q = P(end).
template <class Scalar>
Var<Scalar> done_loss(Graph<Scalar>& g, Var<Scalar> done_logit,
                      Var<Scalar> d, double alpha) {
  const Scalar lo = Scalar(1e-7), hi = Scalar(1) - Scalar(1e-7);
  Var<Scalar> q = clip(sigmoid(done_logit), lo, hi);
  Var<Scalar> pos = scale(mul(d, log(q)), Scalar(alpha));
  Var<Scalar> one_minus_d = add_scalar(scale(d, Scalar(-1)), Scalar(1));
  Var<Scalar> one_minus_q = add_scalar(scale(q, Scalar(-1)), Scalar(1));
  Var<Scalar> neg = mul(one_minus_d, log(one_minus_q));
  Var<Scalar> s = sum(add(pos, neg));
  return scale(s, Scalar(-1) / Scalar(d.value().cols()));
}

template <class Scalar>
struct MdnRnn {
  MdnConfig cfg;
  ParamSet<Scalar> params;
  Linear<Scalar> emb1, emb2;
  LstmStack<Scalar> lstm;
  Linear<Scalar> head;
  Eigen::Index head_rows = 0;

  MdnRnn(MdnConfig c, Rng& rng) : cfg(c) {
    emb1 = make_linear(params, "mdn.emb1", cfg.actions, cfg.action_embed,
                       rng);
    emb2 = make_linear(params, "mdn.emb2", cfg.action_embed,
                       cfg.action_embed, rng);
    lstm = make_lstm_stack(params, "mdn.lstm",
                           cfg.latent + cfg.action_embed, cfg.hidden,
                           cfg.layers, rng);
    head_rows = Eigen::Index(3 * cfg.latent * cfg.components + 1);
    head = make_linear(params, "mdn.head", cfg.hidden, head_rows, rng);
  }

  Var<Scalar> embed_g(Graph<Scalar>& g, Var<Scalar> a_onehot) const {
    return apply(g, emb2, tanh(apply(g, emb1, a_onehot)));
  }

  MdnHeadVars<Scalar> split_head(Var<Scalar> out) const {
    const Eigen::Index gk = Eigen::Index(cfg.latent * cfg.components);
    return {rows(out, 0, gk), rows(out, gk, gk), rows(out, 2 * gk, gk),
            rows(out, 3 * gk, 1)};
  }

  MdnHeadVars<Scalar> step_g(Graph<Scalar>& g, Var<Scalar> z,
                             Var<Scalar> a_embed,
                             LstmStateVars<Scalar>& state) const {
    Var<Scalar> h = lstm_stack_step(g, lstm, vcat(z, a_embed), state);
    return split_head(apply(g, head, h));
  }

  // Teacher-forced unroll with zero-initialized state; hidden/cell columns
  // are cleared right after a d=1 step. Per-step loss values are reported
  // through the optional out-parameters.
  Var<Scalar> total_loss_g(Graph<Scalar>& g, const MdnBatch<Scalar>& batch,
                           std::vector<double>* step_ls = nullptr,
                           std::vector<double>* step_lp = nullptr) const {
    VMAV_CHECK(batch.steps() > 0, "total_loss: empty batch");
    LstmStateVars<Scalar> state = lstm_zero_state(g, lstm, batch.batch());
    Var<Scalar> total;
    bool first = true;
    for (int t = 0; t < batch.steps(); ++t) {
      Var<Scalar> z = g.constant(batch.z[std::size_t(t)]);
      Var<Scalar> a = g.constant(batch.a_onehot[std::size_t(t)]);
      MdnHeadVars<Scalar> out = step_g(g, z, embed_g(g, a), state);
      Var<Scalar> ls =
          mdn_nll(g, out, g.constant(batch.z_next[std::size_t(t)]),
                  cfg.components);
      Var<Scalar> lp = done_loss(
          g, out.done_logit, g.constant(batch.d[std::size_t(t)]), cfg.alpha);
      if (step_ls) step_ls->push_back(double(ls.value()(0, 0)));
      if (step_lp) step_lp->push_back(double(lp.value()(0, 0)));
      Var<Scalar> step = add(scale(ls, Scalar(cfg.beta1)),
                             scale(lp, Scalar(cfg.beta2)));
      total = first ? step : add(total, step);
      first = false;
      // zero the recurrent state of columns whose episode just ended
      Mat<Scalar> keep =
          (Scalar(1) - batch.d[std::size_t(t)].array()).matrix();
      bool any_done = batch.d[std::size_t(t)].maxCoeff() > Scalar(0.5);
      if (any_done && t + 1 < batch.steps()) {
        Var<Scalar> keep_v = g.constant(keep);
        for (std::size_t l = 0; l < state.h.size(); ++l) {
          state.h[l] = mul_rowwise(state.h[l], keep_v);
          state.c[l] = mul_rowwise(state.c[l], keep_v);
        }
      }
    }
    return total;
  }

  // ----- inference path -----

  Vec<Scalar> embed_action(int a) const {
    VMAV_CHECK(a >= 0 && a < cfg.actions, "embed_action: out of range");
    Graph<Scalar> g;
    std::vector<int> as = {a};
    Var<Scalar> e = embed_g(g, g.constant(one_hot<Scalar>(as, cfg.actions)));
    return e.value().col(0);
  }

  MdnState<Scalar> zero_state(int batch = 1) const {
    MdnState<Scalar> s;
    s.set_zero(cfg.layers, cfg.hidden, batch);
    return s;
  }

  // Advances the recurrent state in place and returns the mixture head.
  MdnOut<Scalar> rnn_step(const Mat<Scalar>& z,
                          const std::vector<int>& actions,
                          MdnState<Scalar>& state) const {
    Graph<Scalar> g;
    LstmStateVars<Scalar> sv;
    for (std::size_t l = 0; l < state.h.size(); ++l) {
      sv.h.push_back(g.constant(state.h[l]));
      sv.c.push_back(g.constant(state.c[l]));
    }
    Var<Scalar> a =
        embed_g(g, g.constant(one_hot<Scalar>(actions, cfg.actions)));
    MdnHeadVars<Scalar> out = step_g(g, g.constant(z), a, sv);
    for (std::size_t l = 0; l < state.h.size(); ++l) {
      state.h[l] = sv.h[l].value();
      state.c[l] = sv.c[l].value();
      VMAV_CHECK(all_finite(state.h[l]) && all_finite(state.c[l]),
                 "rnn_step: non-finite hidden state");
    }
    return {out.logits.value(), out.means.value(), out.logstd.value(),
            out.done_logit.value()};
  }
};

// Mixture logits scaled by 1/tau; variances scaled by tau.
template <class Scalar>
MdnOut<Scalar> apply_temperature(MdnOut<Scalar> out, double tau) {
  VMAV_CHECK(tau > 0.0, "apply_temperature: tau must be positive");
  out.logits /= Scalar(tau);
  out.logstd.array() += Scalar(0.5 * std::log(tau));
  return out;
}

// Per-column log density of z under the mixture (sums over latent dims).
template <class Scalar>
Mat<Scalar> mdn_log_prob(const MdnOut<Scalar>& out, const Mat<Scalar>& z,
                         int components) {
  const Eigen::Index dims = z.rows(), B = z.cols();
  const Scalar half_log_2pi = Scalar(0.5 * std::log(2.0 * 3.14159265358979323846));
  Mat<Scalar> lp = Mat<Scalar>::Zero(1, B);
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index j = 0; j < dims; ++j) {
      Scalar m_num = -std::numeric_limits<Scalar>::infinity();
      Scalar m_den = m_num;
      for (int k = 0; k < components; ++k) {
        Eigen::Index r = j * components + k;
        Scalar lognk = -half_log_2pi - out.logstd(r, b) -
                       Scalar(0.5) *
                           std::pow((z(j, b) - out.means(r, b)) /
                                        std::exp(out.logstd(r, b)),
                                    Scalar(2));
        m_num = std::max(m_num, out.logits(r, b) + lognk);
        m_den = std::max(m_den, out.logits(r, b));
      }
      Scalar s_num = 0, s_den = 0;
      for (int k = 0; k < components; ++k) {
        Eigen::Index r = j * components + k;
        Scalar lognk = -half_log_2pi - out.logstd(r, b) -
                       Scalar(0.5) *
                           std::pow((z(j, b) - out.means(r, b)) /
                                        std::exp(out.logstd(r, b)),
                                    Scalar(2));
        s_num += std::exp(out.logits(r, b) + lognk - m_num);
        s_den += std::exp(out.logits(r, b) - m_den);
      }
      lp(0, b) += (m_num + std::log(s_num)) - (m_den + std::log(s_den));
    }
  return lp;
}

// Draws z_{t+1} and the done flag from the tempered mixture.
template <class Scalar>
void sample_next(const MdnOut<Scalar>& raw, int components, double tau,
                 Rng& rng, Vec<Scalar>& z_out, int& done_out,
                 Eigen::Index column = 0) {
  MdnOut<Scalar> out = apply_temperature(raw, tau);
  const Eigen::Index dims = out.means.rows() / components;
  z_out.resize(dims);
  for (Eigen::Index j = 0; j < dims; ++j) {
    Scalar m = -std::numeric_limits<Scalar>::infinity();
    for (int k = 0; k < components; ++k)
      m = std::max(m, out.logits(j * components + k, column));
    Scalar total = 0;
    for (int k = 0; k < components; ++k)
      total += std::exp(out.logits(j * components + k, column) - m);
    double u = rng.uniform() * double(total);
    int pick = components - 1;
    double acc = 0;
    for (int k = 0; k < components; ++k) {
      acc += double(std::exp(out.logits(j * components + k, column) - m));
      if (u < acc) {
        pick = k;
        break;
      }
    }
    Eigen::Index r = j * components + pick;
    z_out(j) = out.means(r, column) +
               std::exp(out.logstd(r, column)) * Scalar(rng.normal());
  }
  double q = 1.0 / (1.0 + std::exp(-double(out.done_logit(0, column))));
  done_out = rng.bernoulli(q) ? 1 : 0;
}

// The dream environment: rolls the world model forward as a simulator.
template <class Scalar>
struct DreamEnv {
  const MdnRnn<Scalar>* model = nullptr;
  Mat<Scalar> init_latents;  // latent x N, encoded real episode starts
  double tau = 1.0;
  int cap = 200;

  Vec<Scalar> z;
  MdnState<Scalar> state;
  int steps = 0;

  void reset(Rng& rng) {
    VMAV_CHECK(init_latents.cols() > 0, "dream_reset: empty initial store");
    Eigen::Index pick = Eigen::Index(rng.uniform_index(
        std::uint64_t(init_latents.cols())));
    z = init_latents.col(pick);
    state = model->zero_state(1);
    steps = 0;
  }

  struct Out {
    double reward = 0.0;
    bool done = false;
  };

  // The predicted done flag ends the episode with no living reward; an
  // undone step pays +1 like the real task. Episodes cap at `cap` steps.
  Out step(int action, Rng& rng) {
    MdnOut<Scalar> out = model->rnn_step(z, {action}, state);
    Vec<Scalar> z_next;
    int d = 0;
    sample_next(out, model->cfg.components, tau, rng, z_next, d);
    z = z_next;
    ++steps;
    Out o;
    o.done = d == 1 || steps >= cap;
    o.reward = d == 1 ? 0.0 : 1.0;
    return o;
  }
};

}  // namespace vmav
