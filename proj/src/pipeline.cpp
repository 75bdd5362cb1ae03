#include "vmav/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "vmav/optim.hpp"

namespace vmav {

namespace {

constexpr int kActions = 2;

// Renders and downsamples the current state into a frame_size x 1 column.
Mat<float> observe(const CartState& s, const RenderConfig& rcfg) {
  std::vector<float> raw = render(s, rcfg);
  std::vector<float> small = preprocess(raw, s.x, rcfg);
  Mat<float> x(Eigen::Index(small.size()), 1);
  for (std::size_t i = 0; i < small.size(); ++i)
    x(Eigen::Index(i), 0) = small[i];
  return x;
}

Vec<float> encode_observation(const Vae<float>& vae, const CartState& s,
                              const RenderConfig& rcfg) {
  Mat<float> x = observe(s, rcfg);
  Mat<float> mu, logvar;
  vae.encode(x, mu, logvar);
  return mu.col(0);
}

Mat<float> columns_to_mat(const std::vector<Vec<float>>& cols) {
  VMAV_CHECK(!cols.empty(), "columns_to_mat: empty column list");
  Mat<float> m(cols[0].size(), Eigen::Index(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i)
    m.col(Eigen::Index(i)) = cols[i];
  return m;
}

Mat<float> row_from(const std::vector<double>& v) {
  Mat<float> m(1, Eigen::Index(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    m(0, Eigen::Index(i)) = float(v[i]);
  return m;
}

int sample_from_log_probs(const Mat<float>& logp, Rng& rng) {
  double u = rng.uniform(), acc = 0.0;
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    acc += std::exp(double(logp(i, 0)));
    if (u < acc) return int(i);
  }
  return int(logp.rows() - 1);
}

}  // namespace

CartPoleConfig env_config(const ExperimentConfig& cfg) {
  CartPoleConfig e;
  e.gravity = cfg.env_gravity;
  e.masscart = cfg.env_masscart;
  e.masspole = cfg.env_masspole;
  e.half_length = cfg.env_half_length;
  e.force_mag = cfg.env_force_mag;
  e.tau = cfg.env_dt;
  e.x_threshold = cfg.env_x_threshold;
  e.theta_threshold = cfg.env_theta_threshold;
  e.max_steps = int(cfg.env_max_steps);
  e.init_band = cfg.env_init_band;
  return e;
}

EpisodeStore collect_random_episodes(const ExperimentConfig& cfg,
                                     long episodes, std::uint64_t seed) {
  VMAV_CHECK(episodes > 0, "collect: episode count must be positive");
  CartPole env(env_config(cfg));
  RenderConfig rcfg;
  EpisodeStore store;
  store.frame_h = rcfg.out_h;
  store.frame_w = rcfg.out_w;
  store.channels = 3;
  store.quantized = true;
  Rng root(seed);
  for (long i = 0; i < episodes; ++i) {
    Rng ep = root.fork("episode", std::uint64_t(i));
    CartState s = env.reset(ep);
    Episode e;
    while (true) {
      std::vector<float> raw = render(s, rcfg);
      std::vector<float> frame = preprocess(raw, s.x, rcfg);
      store.push_frame(e, frame.data());
      int a = int(ep.uniform_index(kActions));
      StepResult sr = env.step(s, a);
      e.actions.push_back(std::uint8_t(a));
      e.rewards.push_back(float(sr.reward));
      e.dones.push_back(sr.done ? 1 : 0);
      s = sr.next;
      if (sr.done) {
        std::vector<float> last = preprocess(render(s, rcfg), s.x, rcfg);
        store.push_frame(e, last.data());
        break;
      }
    }
    store.episodes.push_back(std::move(e));
  }
  return store;
}

std::vector<long> episode_lengths(const EpisodeStore& store) {
  std::vector<long> out;
  out.reserve(store.episodes.size());
  for (const auto& e : store.episodes) out.push_back(e.length());
  return out;
}

VaeSplit build_vae_split(const EpisodeStore& store, std::uint64_t seed) {
  std::vector<FrameRef> refs;
  for (std::size_t i = 0; i < store.episodes.size(); ++i) {
    int n = store.frame_count(store.episodes[i]);
    for (int t = 0; t < n; ++t) refs.push_back({int(i), t});
  }
  VMAV_CHECK(refs.size() >= 4, "vae split: need at least 4 frames");
  Rng rng(seed);
  for (std::size_t i = refs.size(); i > 1; --i)
    std::swap(refs[i - 1], refs[rng.uniform_index(i)]);
  std::size_t n_train = (refs.size() * 3) / 4;
  n_train = std::max<std::size_t>(1, std::min(n_train, refs.size() - 1));
  VaeSplit split;
  split.train.assign(refs.begin(), refs.begin() + long(n_train));
  split.test.assign(refs.begin() + long(n_train), refs.end());
  return split;
}

namespace {

Mat<float> gather_frames(const EpisodeStore& store,
                         const std::vector<FrameRef>& refs,
                         std::size_t start, std::size_t count) {
  Mat<float> x(store.frame_size(), Eigen::Index(count));
  for (std::size_t i = 0; i < count; ++i) {
    const FrameRef& r = refs[start + i];
    store.frame(store.episodes[std::size_t(r.episode)], r.frame,
                &x(0, Eigen::Index(i)));
  }
  return x;
}

}  // namespace

VaeTrainResult train_vae(const EpisodeStore& store,
                         const ExperimentConfig& cfg) {
  VMAV_CHECK(!store.episodes.empty(), "train_vae: empty episode store");
  VaeConfig vc;
  vc.latent = int(cfg.vae_latent);
  VMAV_CHECK(store.frame_h == vc.frame_h && store.frame_w == vc.frame_w &&
                 store.channels == vc.channels,
             "train_vae: frame shape does not match the encoder");

  Rng root = Rng(std::uint64_t(cfg.seed)).fork("vae");
  Rng split_rng = root.fork("split");
  Rng init_rng = root.fork("init");
  Rng order_rng = root.fork("order");
  Rng noise_rng = root.fork("noise");

  VaeSplit split = build_vae_split(store, split_rng.next_u64());

  VaeTrainResult res;
  res.vae = std::make_shared<Vae<float>>(vc, init_rng);
  res.metrics.columns = {"update", "loss", "kl"};
  res.min_kl = std::numeric_limits<double>::infinity();

  std::size_t held = std::min<std::size_t>(512, split.test.size());
  Mat<float> heldout = gather_frames(store, split.test, 0, held);
  res.heldout_mse_untrained = res.vae->reconstruction_mse(heldout);

  OptimizerState<float> opt = make_rmsprop<float>(cfg.vae_lr);
  long update = 0;
  for (long epoch = 0; epoch < cfg.vae_epochs; ++epoch) {
    for (std::size_t i = split.train.size(); i > 1; --i)
      std::swap(split.train[i - 1], split.train[order_rng.uniform_index(i)]);
    for (std::size_t start = 0; start < split.train.size();
         start += std::size_t(cfg.vae_batch)) {
      std::size_t count = std::min<std::size_t>(std::size_t(cfg.vae_batch),
                                                split.train.size() - start);
      Mat<float> x = gather_frames(store, split.train, start, count);
      Mat<float> eps(vc.latent, Eigen::Index(count));
      fill_normal(noise_rng, eps);

      Graph<float> g;
      Var<float> xv = g.constant(x);
      auto post = res.vae->encode_g(g, xv);
      Var<float> z = add(post.mu,
                         mul(exp(scale(post.logvar, 0.5f)), g.constant(eps)));
      Var<float> xhat = res.vae->decode_g(g, z);
      Var<float> loss = vae_loss(g, xv, xhat, post.mu, post.logvar,
                                 vc.recon_sum);
      double loss_val = double(loss.value()(0, 0));
      VMAV_CHECK(std::isfinite(loss_val), "train_vae: non-finite loss");

      Mat<float> kl = kl_divergence(post.mu.value(), post.logvar.value());
      if (!all_finite(kl)) res.kl_always_finite = false;
      res.min_kl = std::min(res.min_kl, double(kl.minCoeff()));

      res.vae->params.zero_grads();
      g.backward(loss);
      optimizer_step(opt, res.vae->params);
      ++update;
      res.metrics.add_row({double(update), loss_val, double(kl.mean())});
    }
  }
  res.heldout_mse_trained = res.vae->reconstruction_mse(heldout);
  return res;
}

EpisodeStore encode_episodes(const EpisodeStore& store,
                             const Vae<float>& vae, Rng* rng) {
  VMAV_CHECK(store.frame_h == vae.cfg.frame_h &&
                 store.frame_w == vae.cfg.frame_w &&
                 store.channels == vae.cfg.channels,
             "encode_episodes: frame shape does not match the encoder");
  EpisodeStore out;
  out.frame_h = vae.cfg.latent;
  out.frame_w = 1;
  out.channels = 1;
  out.quantized = false;
  const Eigen::Index chunk = 256;
  for (const auto& e : store.episodes) {
    Episode ne;
    ne.actions = e.actions;
    ne.rewards = e.rewards;
    ne.dones = e.dones;
    int n = store.frame_count(e);
    for (int start = 0; start < n; start += int(chunk)) {
      int count = std::min(int(chunk), n - start);
      Mat<float> x(store.frame_size(), count);
      for (int i = 0; i < count; ++i)
        store.frame(e, start + i, &x(0, Eigen::Index(i)));
      Mat<float> mu, logvar;
      vae.encode(x, mu, logvar);
      if (rng != nullptr) {
        Mat<float> eps(mu.rows(), mu.cols());
        fill_normal(*rng, eps);
        mu.array() += (logvar.array() * 0.5f).exp() * eps.array();
      }
      for (int i = 0; i < count; ++i)
        out.push_frame(ne, &mu(0, Eigen::Index(i)));
    }
    out.episodes.push_back(std::move(ne));
  }
  return out;
}

Mat<float> initial_latents(const EpisodeStore& latents) {
  VMAV_CHECK(!latents.episodes.empty(), "initial_latents: empty store");
  Mat<float> z(latents.frame_size(), Eigen::Index(latents.episodes.size()));
  for (std::size_t i = 0; i < latents.episodes.size(); ++i)
    latents.frame(latents.episodes[i], 0, &z(0, Eigen::Index(i)));
  return z;
}

SequenceDataset build_sequence_dataset(const EpisodeStore& latents, int L,
                                       long train_episodes) {
  VMAV_CHECK(L > 0, "sequence dataset: length must be positive");
  long n_eps = long(latents.episodes.size());
  VMAV_CHECK(train_episodes > 0 && train_episodes < n_eps,
             "sequence dataset: need both training and held-out episodes");
  const int latent = latents.frame_size();

  auto slice_range = [&](long lo, long hi) {
    std::vector<MiniSequence> out;
    MiniSequence cur;
    cur.z.resize(latent, L);
    cur.z_next.resize(latent, L);
    int fill = 0;
    for (long i = lo; i < hi; ++i) {
      const Episode& e = latents.episodes[std::size_t(i)];
      for (int t = 0; t < e.length(); ++t) {
        latents.frame(e, t, &cur.z(0, fill));
        latents.frame(e, t + 1, &cur.z_next(0, fill));
        cur.actions.push_back(int(e.actions[std::size_t(t)]));
        cur.rewards.push_back(e.rewards[std::size_t(t)]);
        cur.dones.push_back(e.dones[std::size_t(t)]);
        ++fill;
        if (fill == L) {
          out.push_back(cur);
          cur.actions.clear();
          cur.rewards.clear();
          cur.dones.clear();
          fill = 0;
        }
      }
    }
    return out;  // a partial tail slice is dropped
  };

  SequenceDataset data;
  data.length = L;
  data.train = slice_range(0, train_episodes);
  data.test = slice_range(train_episodes, n_eps);
  VMAV_CHECK(!data.train.empty() && !data.test.empty(),
             "sequence dataset: a split produced no full slice");
  return data;
}

namespace {

// Assembles aligned per-step matrices for a batch of slices.
MdnBatch<float> make_mdn_batch(const std::vector<MiniSequence>& slices,
                               const std::vector<std::size_t>& idx, int L) {
  MdnBatch<float> batch;
  const Eigen::Index B = Eigen::Index(idx.size());
  const Eigen::Index latent = slices[idx[0]].z.rows();
  for (int t = 0; t < L; ++t) {
    Mat<float> z(latent, B), zn(latent, B), d(1, B);
    std::vector<int> actions(static_cast<std::size_t>(B));
    for (Eigen::Index b = 0; b < B; ++b) {
      const MiniSequence& s = slices[idx[std::size_t(b)]];
      z.col(b) = s.z.col(t);
      zn.col(b) = s.z_next.col(t);
      actions[std::size_t(b)] = s.actions[std::size_t(t)];
      d(0, b) = float(s.dones[std::size_t(t)]);
    }
    batch.z.push_back(std::move(z));
    batch.z_next.push_back(std::move(zn));
    batch.a_onehot.push_back(one_hot<float>(actions, kActions));
    batch.d.push_back(std::move(d));
  }
  return batch;
}

}  // namespace

MdnEval eval_mdn(const MdnRnn<float>& mdn,
                 const std::vector<MiniSequence>& slices, long batch) {
  VMAV_CHECK(!slices.empty(), "eval_mdn: no slices");
  VMAV_CHECK(batch > 0, "eval_mdn: batch must be positive");
  const int L = int(slices[0].actions.size());
  const double alpha = mdn.cfg.alpha;
  double ls_sum = 0.0, lp_sum = 0.0;
  long n = 0, correct = 0;
  for (std::size_t start = 0; start < slices.size();
       start += std::size_t(batch)) {
    std::size_t count =
        std::min<std::size_t>(std::size_t(batch), slices.size() - start);
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
    MdnBatch<float> mb = make_mdn_batch(slices, idx, L);
    MdnState<float> st = mdn.zero_state(int(count));
    for (int t = 0; t < L; ++t) {
      std::vector<int> actions(count);
      for (std::size_t b = 0; b < count; ++b)
        actions[b] = slices[idx[b]].actions[std::size_t(t)];
      MdnOut<float> out = mdn.rnn_step(mb.z[std::size_t(t)], actions, st);
      Mat<float> lp = mdn_log_prob(out, mb.z_next[std::size_t(t)],
                                   mdn.cfg.components);
      ls_sum += -double(lp.sum());
      for (std::size_t b = 0; b < count; ++b) {
        double q = 1.0 / (1.0 + std::exp(-double(out.done_logit(
                                    0, Eigen::Index(b)))));
        double qc = std::min(1.0 - 1e-7, std::max(1e-7, q));
        int d = int(mb.d[std::size_t(t)](0, Eigen::Index(b)) > 0.5f);
        lp_sum += -(alpha * d * std::log(qc) +
                    (1 - d) * std::log(1.0 - qc));
        if ((q > 0.5) == (d == 1)) ++correct;
        if (d == 1 && t + 1 < L) {
          for (auto& h : st.h) h.col(Eigen::Index(b)).setZero();
          for (auto& c : st.c) c.col(Eigen::Index(b)).setZero();
        }
      }
      n += long(count);
    }
  }
  MdnEval ev;
  ev.ls = ls_sum / double(n);
  ev.lp = lp_sum / double(n);
  ev.done_acc = double(correct) / double(n);
  return ev;
}

MdnTrainResult train_mdnrnn(const SequenceDataset& data,
                            const ExperimentConfig& cfg) {
  VMAV_CHECK(!data.train.empty() && !data.test.empty(),
             "train_mdnrnn: empty dataset");
  const int L = data.length;
  const Eigen::Index latent = data.train[0].z.rows();

  Rng root = Rng(std::uint64_t(cfg.seed)).fork("mdn");
  Rng init_rng = root.fork("init");
  Rng batch_rng = root.fork("batch");

  MdnConfig mc;
  mc.latent = int(latent);
  mc.actions = kActions;
  mc.hidden = int(cfg.mdn_hidden);
  mc.layers = int(cfg.mdn_layers);
  mc.components = int(cfg.mdn_components);
  mc.alpha = cfg.mdn_alpha;
  mc.beta1 = cfg.mdn_beta1;
  mc.beta2 = cfg.mdn_beta2;

  MdnTrainResult res;
  res.mdn = std::make_shared<MdnRnn<float>>(mc, init_rng);
  res.metrics.columns = {"update", "loss", "heldout_ls", "done_accuracy"};

  // Reference points: an unconditional moment-matched Gaussian on the next
  // latent, and the majority-class done predictor, both scored on the
  // held-out slices.
  {
    Vec<double> mean = Vec<double>::Zero(latent);
    Vec<double> sq = Vec<double>::Zero(latent);
    long n = 0;
    for (const auto& s : data.train)
      for (int t = 0; t < L; ++t) {
        mean += s.z_next.col(t).cast<double>();
        sq += s.z_next.col(t).cast<double>().cwiseAbs2();
        ++n;
      }
    mean /= double(n);
    Vec<double> var =
        (sq / double(n) - mean.cwiseAbs2()).cwiseMax(1e-10);
    double nll = 0.0;
    long m = 0, done_count = 0;
    const double ln2pi = std::log(2.0 * 3.14159265358979323846);
    for (const auto& s : data.test)
      for (int t = 0; t < L; ++t) {
        Vec<double> d = s.z_next.col(t).cast<double>() - mean;
        nll += 0.5 * (double(latent) * ln2pi + var.array().log().sum() +
                      (d.cwiseAbs2().cwiseQuotient(var)).sum());
        done_count += s.dones[std::size_t(t)] ? 1 : 0;
        ++m;
      }
    res.baseline_gaussian_nll = nll / double(m);
    double p = double(done_count) / double(m);
    res.majority_accuracy = std::max(p, 1.0 - p);
  }

  OptimizerState<float> opt = make_adam<float>(cfg.mdn_lr);
  MdnEval cached = eval_mdn(*res.mdn, data.test, cfg.mdn_batch);
  for (long u = 1; u <= cfg.mdn_updates; ++u) {
    std::vector<std::size_t> idx(std::size_t(cfg.mdn_batch));
    for (auto& i : idx) i = batch_rng.uniform_index(data.train.size());
    MdnBatch<float> batch = make_mdn_batch(data.train, idx, L);

    Graph<float> g;
    Var<float> loss = res.mdn->total_loss_g(g, batch);
    double loss_val = double(loss.value()(0, 0));
    VMAV_CHECK(std::isfinite(loss_val),
               "train_mdnrnn: non-finite loss at update " + std::to_string(u));
    res.mdn->params.zero_grads();
    g.backward(loss);
    optimizer_step(opt, res.mdn->params);

    if (u % cfg.mdn_eval_every == 0 || u == cfg.mdn_updates)
      cached = eval_mdn(*res.mdn, data.test, cfg.mdn_batch);
    res.metrics.add_row(
        {double(u), loss_val, cached.ls, cached.done_acc});
  }
  res.final_eval = cached;
  return res;
}

AvfTrainResult pretrain_avf(const SequenceDataset& data,
                            const MdnRnn<float>& mdn,
                            const ExperimentConfig& cfg) {
  VMAV_CHECK(!data.train.empty(), "pretrain_avf: empty dataset");
  const int L = data.length;
  const int hidden = mdn.cfg.hidden;
  const Eigen::Index latent = data.train[0].z.rows();
  VMAV_CHECK(latent == Eigen::Index(mdn.cfg.latent),
             "pretrain_avf: latent width mismatch");

  Rng root = Rng(std::uint64_t(cfg.seed)).fork("avf");
  Rng init_rng = root.fork("init");
  Rng batch_rng = root.fork("batch");

  AvfConfig ac;
  ac.window = int(cfg.avf_window);
  ac.latent = int(latent);
  ac.hidden = hidden;
  ac.raw_over_exp = cfg.avf_raw_over_exp;
  ac.lambda = cfg.avf_lambda;
  ac.discounted_bootstrap = cfg.avf_discounted_bootstrap;
  const int W = ac.window;

  AvfTrainResult res;
  res.avf = std::make_shared<Avf<float>>(ac, init_rng);
  res.metrics.columns = {"update", "loss"};

  OptimizerState<float> opt = make_adam<float>(cfg.avf_lr);
  for (long u = 1; u <= cfg.avf_updates; ++u) {
    const std::size_t B = std::size_t(cfg.avf_batch);
    std::vector<std::size_t> idx(B);
    for (auto& i : idx) i = batch_rng.uniform_index(data.train.size());
    MdnBatch<float> mb = make_mdn_batch(data.train, idx, L);

    // Teacher-forced hidden states; snapshot the window before every step.
    MdnState<float> st = mdn.zero_state(int(B));
    std::deque<Mat<float>> win(std::size_t(W),
                               Mat<float>::Zero(hidden, Eigen::Index(B)));
    std::vector<std::vector<Mat<float>>> snap(std::size_t(L) + 1);
    for (int t = 0; t < L; ++t) {
      snap[std::size_t(t)].assign(win.begin(), win.end());
      win.pop_front();
      win.push_back(st.top());
      std::vector<int> actions(B);
      for (std::size_t b = 0; b < B; ++b)
        actions[b] = data.train[idx[b]].actions[std::size_t(t)];
      mdn.rnn_step(mb.z[std::size_t(t)], actions, st);
      for (std::size_t b = 0; b < B; ++b)
        if (data.train[idx[b]].dones[std::size_t(t)]) {
          for (auto& h : st.h) h.col(Eigen::Index(b)).setZero();
          for (auto& c : st.c) c.col(Eigen::Index(b)).setZero();
          for (auto& w : win) w.col(Eigen::Index(b)).setZero();
        }
    }
    snap[std::size_t(L)].assign(win.begin(), win.end());

    // Bootstrap values at the slice horizon under current parameters.
    Mat<float> z_end(latent, Eigen::Index(B));
    for (std::size_t b = 0; b < B; ++b)
      z_end.col(Eigen::Index(b)) = data.train[idx[b]].z_next.col(L - 1);
    Mat<float> vboot = res.avf->value(snap[std::size_t(L)], z_end);

    // One training sample per (slice, step): column t*B + b.
    const Eigen::Index N = Eigen::Index(B) * L;
    Mat<float> z_all(latent, N);
    std::vector<Mat<float>> win_all(static_cast<std::size_t>(W));
    for (auto& w : win_all) w.resize(hidden, N);
    Mat<float> targets(1, N);
    for (int t = 0; t < L; ++t)
      for (std::size_t b = 0; b < B; ++b) {
        Eigen::Index col = Eigen::Index(t) * Eigen::Index(B) +
                           Eigen::Index(b);
        const MiniSequence& s = data.train[idx[b]];
        z_all.col(col) = s.z.col(t);
        for (int w = 0; w < W; ++w)
          win_all[std::size_t(w)].col(col) =
              snap[std::size_t(t)][std::size_t(w)].col(Eigen::Index(b));
        std::vector<double> rewards;
        int done = 0;
        for (int i = t; i < L; ++i) {
          rewards.push_back(double(s.rewards[std::size_t(i)]));
          if (s.dones[std::size_t(i)]) {
            done = 1;
            break;
          }
        }
        targets(0, col) = float(
            n_step_target(rewards, double(vboot(0, Eigen::Index(b))), done,
                          ac.lambda, ac.discounted_bootstrap));
      }

    Graph<float> g;
    std::vector<Var<float>> wv;
    for (const auto& w : win_all) wv.push_back(g.constant(w));
    Var<float> pred = res.avf->value_from_window_g(g, wv, g.constant(z_all));
    Var<float> loss = avf_loss(g, pred, targets);
    double loss_val = double(loss.value()(0, 0));
    VMAV_CHECK(std::isfinite(loss_val),
               "pretrain_avf: non-finite loss at update " + std::to_string(u));
    res.avf->params.zero_grads();
    g.backward(loss);
    optimizer_step(opt, res.avf->params);
    res.metrics.add_row({double(u), loss_val});
  }
  return res;
}

AgentVariant parse_variant(const std::string& name) {
  if (name == "cp") return AgentVariant::cp;
  if (name == "mrp") return AgentVariant::mrp;
  if (name == "vmavc") return AgentVariant::vmavc;
  fail("unknown agent variant '" + name + "' (expected cp, mrp or vmavc)");
}

AgentBundle make_agent(const ExperimentConfig& cfg,
                       std::shared_ptr<Vae<float>> vae,
                       std::shared_ptr<MdnRnn<float>> mdn,
                       const Avf<float>* pretrained_avf) {
  VMAV_CHECK(vae != nullptr, "make_agent: missing vae");
  AgentBundle b;
  b.variant = parse_variant(cfg.agent);
  b.vae = std::move(vae);
  if (b.variant != AgentVariant::cp) {
    VMAV_CHECK(mdn != nullptr,
               "make_agent: this variant needs a world model");
    b.mdn = std::move(mdn);
  }

  Rng rng = Rng(std::uint64_t(cfg.seed)).fork("agent-init");
  const int latent = int(cfg.vae_latent);
  const int hidden = int(cfg.mdn_hidden);
  PolicyConfig pc;
  pc.input = b.variant == AgentVariant::cp ? latent : latent + hidden;
  pc.hidden = int(cfg.policy_hidden);
  pc.actions = kActions;
  b.policy = std::make_shared<Policy<float>>(pc, rng);

  if (b.variant == AgentVariant::vmavc) {
    AvfConfig ac;
    ac.window = int(cfg.avf_window);
    ac.latent = latent;
    ac.hidden = hidden;
    ac.raw_over_exp = cfg.avf_raw_over_exp;
    ac.lambda = cfg.avf_lambda;
    ac.discounted_bootstrap = cfg.avf_discounted_bootstrap;
    b.critic = std::make_shared<Critic<float>>(
        Critic<float>::make_attention(ac, rng));
    if (pretrained_avf)
      copy_param_values(b.critic->avf->params, pretrained_avf->params);
  } else {
    b.critic = std::make_shared<Critic<float>>(
        Critic<float>::make_plain(pc.input, rng));
  }
  return b;
}

double run_episode(const ExperimentConfig& cfg, const AgentBundle& agent,
                   Rng& env_rng, Rng& action_rng, bool greedy) {
  CartPole env(env_config(cfg));
  RenderConfig rcfg;
  const bool use_h = agent.variant != AgentVariant::cp;
  CartState s = env.reset(env_rng);
  MdnState<float> st;
  if (use_h) st = agent.mdn->zero_state(1);
  double total = 0.0;
  while (true) {
    Vec<float> z = encode_observation(*agent.vae, s, rcfg);
    Mat<float> px(use_h ? z.size() + st.top().rows() : z.size(), 1);
    if (use_h) {
      px.topRows(z.size()) = z;
      px.bottomRows(st.top().rows()) = st.top().col(0);
    } else {
      px.col(0) = z;
    }
    int a = greedy ? agent.policy->greedy_action(px.col(0))
                   : sample_from_log_probs(agent.policy->log_probs(px),
                                           action_rng);
    StepResult sr = env.step(s, a);
    total += sr.reward;
    if (use_h) agent.mdn->rnn_step(z, {a}, st);
    s = sr.next;
    if (sr.done) break;
  }
  return total;
}

EvalResult evaluate_agent(const ExperimentConfig& cfg,
                          const AgentBundle& agent, long episodes,
                          std::uint64_t seed) {
  VMAV_CHECK(episodes > 0, "evaluate_agent: episode count must be positive");
  EvalResult ev;
  Rng root(seed);
  for (long k = 0; k < episodes; ++k) {
    Rng er = root.fork("ep", std::uint64_t(k));
    Rng ar = root.fork("act", std::uint64_t(k));
    ev.returns.push_back(run_episode(cfg, agent, er, ar, true));
  }
  double sum = 0.0;
  for (double r : ev.returns) sum += r;
  ev.mean = sum / double(ev.returns.size());
  double var = 0.0;
  for (double r : ev.returns) var += (r - ev.mean) * (r - ev.mean);
  ev.stddev = std::sqrt(var / double(ev.returns.size()));
  return ev;
}

double random_policy_baseline(const ExperimentConfig& cfg, long episodes,
                              std::uint64_t seed) {
  VMAV_CHECK(episodes > 0, "random baseline: episode count must be positive");
  CartPole env(env_config(cfg));
  Rng root(seed);
  double total = 0.0;
  for (long k = 0; k < episodes; ++k) {
    Rng r = root.fork("rand", std::uint64_t(k));
    CartState s = env.reset(r);
    while (true) {
      StepResult sr = env.step(s, int(r.uniform_index(kActions)));
      total += sr.reward;
      s = sr.next;
      if (sr.done) break;
    }
  }
  return total / double(episodes);
}

TrainAgentResult train_agent(const ExperimentConfig& cfg,
                             std::shared_ptr<Vae<float>> vae,
                             std::shared_ptr<MdnRnn<float>> mdn,
                             const Avf<float>* pretrained_avf,
                             const EpisodeStore* latents_for_dream) {
  VMAV_CHECK(cfg.env_mode == "real" || cfg.env_mode == "dream",
             "train_agent: env_mode must be real or dream");
  const bool dream = cfg.env_mode == "dream";
  VMAV_CHECK(!dream || (mdn != nullptr && latents_for_dream != nullptr &&
                        !latents_for_dream->episodes.empty()),
             "train_agent: dream mode needs a world model and initial "
             "latents");

  TrainAgentResult res;
  res.agent = make_agent(cfg, std::move(vae), mdn, pretrained_avf);
  res.metrics.columns = {"iteration", "env_steps", "reward", "value_loss"};
  res.eval_metrics.columns = {"iteration", "eval_mean", "eval_std"};
  res.constructed_mdn = res.agent.mdn != nullptr;

  const AgentBundle& agent = res.agent;
  const bool use_h = agent.variant != AgentVariant::cp;
  const bool attention = agent.critic->kind == CriticKind::attention;
  const int latent = int(cfg.vae_latent);
  const int hidden = int(cfg.mdn_hidden);
  const int W = int(cfg.avf_window);

  PpoConfig pcfg;
  pcfg.eps = cfg.ppo_eps;
  pcfg.epochs = int(cfg.ppo_epochs);
  pcfg.minibatch = int(cfg.ppo_minibatch);
  pcfg.horizon = int(cfg.ppo_horizon);
  pcfg.pi_lr = cfg.ppo_pi_lr;
  pcfg.v_lr = cfg.ppo_v_lr;
  pcfg.ent_coef = cfg.ppo_ent_coef;
  pcfg.lambda = cfg.avf_lambda;
  OptimizerState<float> pi_opt = make_adam<float>(pcfg.pi_lr);
  OptimizerState<float> v_opt = make_adam<float>(pcfg.v_lr);

  Rng root = Rng(std::uint64_t(cfg.seed)).fork("agent");
  Rng env_rng = root.fork("env");
  Rng act_rng = root.fork("act");
  Rng ppo_rng = root.fork("ppo");

  CartPole env(env_config(cfg));
  RenderConfig rcfg;
  DreamEnv<float> dreamer;
  if (dream) {
    dreamer.model = mdn.get();
    dreamer.init_latents = initial_latents(*latents_for_dream);
    dreamer.tau = cfg.tau;
    dreamer.cap = int(cfg.env_max_steps);
  }

  // Live environment state, persistent across iterations.
  CartState s;
  Vec<float> z;
  MdnState<float> rnn_state;
  std::deque<Vec<float>> window;
  double ep_return = 0.0;

  auto reset_episode = [&]() {
    if (dream) {
      dreamer.reset(env_rng);
      z = dreamer.z;
    } else {
      s = env.reset(env_rng);
      z = encode_observation(*agent.vae, s, rcfg);
      if (use_h) rnn_state = agent.mdn->zero_state(1);
    }
    if (attention)
      window.assign(std::size_t(W), Vec<float>::Zero(hidden));
    ep_return = 0.0;
  };

  auto current_h = [&]() -> Vec<float> {
    return dream ? Vec<float>(dreamer.state.top().col(0))
                 : Vec<float>(rnn_state.top().col(0));
  };

  auto policy_input = [&]() {
    Vec<float> px(use_h ? latent + hidden : latent);
    px.topRows(latent) = z;
    if (use_h) px.bottomRows(hidden) = current_h();
    return px;
  };

  // Rollout accumulators, flushed into a RolloutBuffer per PPO update.
  std::vector<Vec<float>> px_cols, z_cols, feat_cols;
  std::vector<std::vector<Vec<float>>> win_cols;
  win_cols.resize(std::size_t(W));
  std::vector<int> acts;
  std::vector<double> old_logps, rewards, dones, returns;

  auto clear_accumulators = [&]() {
    px_cols.clear();
    z_cols.clear();
    feat_cols.clear();
    for (auto& w : win_cols) w.clear();
    acts.clear();
    old_logps.clear();
    rewards.clear();
    dones.clear();
    returns.clear();
  };

  auto critic_now = [&]() {
    CriticInputs<float> ci;
    ci.z = z;
    if (attention) {
      for (const auto& h : window) ci.window.push_back(Mat<float>(h));
    } else {
      ci.feat = policy_input();
    }
    return double(agent.critic->value(ci)(0, 0));
  };

  double last_return = 0.0, last_vloss = 0.0;
  long env_steps = 0;
  reset_episode();

  for (long iter = 1; iter <= cfg.train_iterations; ++iter) {
    std::vector<double> frag_rewards;
    bool frag_done = false;
    while (int(frag_rewards.size()) < pcfg.nstep_max && !frag_done) {
      Vec<float> px = policy_input();
      Mat<float> logp = agent.policy->log_probs(px);
      int a = sample_from_log_probs(logp, act_rng);

      px_cols.push_back(px);
      z_cols.push_back(z);
      if (attention) {
        for (int w = 0; w < W; ++w)
          win_cols[std::size_t(w)].push_back(window[std::size_t(w)]);
        window.pop_front();
        window.push_back(current_h());
      } else {
        feat_cols.push_back(px);
      }
      acts.push_back(a);
      old_logps.push_back(double(logp(a, 0)));

      double r;
      bool done;
      if (dream) {
        auto out = dreamer.step(a, env_rng);
        r = out.reward;
        done = out.done;
        z = dreamer.z;
      } else {
        StepResult sr = env.step(s, a);
        r = sr.reward;
        done = sr.done;
        if (use_h) agent.mdn->rnn_step(z, {a}, rnn_state);
        s = sr.next;
        if (!done) z = encode_observation(*agent.vae, s, rcfg);
        ++res.real_steps_train;
      }
      rewards.push_back(r);
      dones.push_back(done ? 1.0 : 0.0);
      frag_rewards.push_back(r);
      ep_return += r;
      ++env_steps;
      frag_done = done;
      if (done) {
        last_return = ep_return;
        if (!dream) ++res.real_episodes_train;
        reset_episode();
      }
    }

    // n-step targets for the fragment, bootstrapped from the critic at the
    // post-fragment state when the episode is still running.
    double bootstrap = frag_done ? 0.0 : critic_now();
    const int T = int(frag_rewards.size());
    for (int i = 0; i < T; ++i) {
      std::vector<double> tail(frag_rewards.begin() + i, frag_rewards.end());
      returns.push_back(n_step_target(tail, bootstrap, frag_done ? 1 : 0,
                                      pcfg.lambda,
                                      cfg.avf_discounted_bootstrap));
    }

    if (long(acts.size()) >= pcfg.horizon) {
      RolloutBuffer<float> buf;
      buf.policy_x = columns_to_mat(px_cols);
      buf.z = columns_to_mat(z_cols);
      if (attention) {
        for (const auto& w : win_cols) buf.window.push_back(columns_to_mat(w));
      } else {
        buf.feat = columns_to_mat(feat_cols);
      }
      buf.actions = acts;
      buf.old_logp = row_from(old_logps);
      buf.rewards = row_from(rewards);
      buf.dones = row_from(dones);
      buf.returns = row_from(returns);
      PpoStats stats = ppo_update(*agent.policy, pi_opt, *agent.critic,
                                  v_opt, buf, pcfg, ppo_rng);
      last_vloss = stats.v_loss;
      clear_accumulators();
    }

    res.metrics.add_row(
        {double(iter), double(env_steps), last_return, last_vloss});

    if (iter % cfg.train_eval_every == 0 || iter == cfg.train_iterations) {
      std::uint64_t eval_seed =
          Rng(std::uint64_t(cfg.seed)).fork("eval", std::uint64_t(iter))
              .next_u64();
      EvalResult ev = evaluate_agent(cfg, agent, cfg.train_eval_episodes,
                                     eval_seed);
      res.eval_metrics.add_row({double(iter), ev.mean, ev.stddev});
      res.real_episodes_eval += long(ev.returns.size());
    }
  }
  return res;
}

}  // namespace vmav
