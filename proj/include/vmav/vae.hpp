#pragma once

#include <string>

#include "vmav/autodiff.hpp"
#include "vmav/layers.hpp"
#include "vmav/optim.hpp"

namespace vmav {

struct VaeConfig {
  int frame_h = 40;
  int frame_w = 80;
  int channels = 3;
  int latent = 32;
  int ch1 = 32, ch2 = 64, ch3 = 128;
  int kernel = 4, stride = 2, pad = 1;
  bool recon_sum = true;  // sum-of-squares per image; false: per-pixel mean
};

// KL(N(mu, diag(exp(logvar))) || N(0, I)) per column, as a plain function.
template <class Scalar>
Mat<Scalar> kl_divergence(const Mat<Scalar>& mu, const Mat<Scalar>& logvar) {
  return (Scalar(0.5) *
          (mu.array().square() + logvar.array().exp() - logvar.array() -
           Scalar(1))
              .colwise()
              .sum())
      .matrix();
}

// z = mu + exp(logvar/2) * eps, elementwise.
template <class Scalar>
Mat<Scalar> reparameterize(const Mat<Scalar>& mu, const Mat<Scalar>& logvar,
                           const Mat<Scalar>& eps) {
  return mu.array() + (logvar.array() * Scalar(0.5)).exp() * eps.array();
}

// Loss = mean over batch of [recon(x, xhat) + KL(mu, logvar)], with recon
// the per-image sum (or mean) of squared error. Composable so each term is
// testable in isolation.
template <class Scalar>
Var<Scalar> vae_loss(Graph<Scalar>& g, Var<Scalar> x, Var<Scalar> xhat,
                     Var<Scalar> mu, Var<Scalar> logvar, bool recon_sum) {
  Var<Scalar> se = colwise_sum(square(sub(xhat, x)));
  if (!recon_sum) se = scale(se, Scalar(1) / Scalar(x.rows()));
  Var<Scalar> kl = scale(
      colwise_sum(sub(add(square(mu), exp(logvar)),
                      add_scalar(logvar, Scalar(1)))),
      Scalar(0.5));
  return mean(add(se, kl));
}

template <class Scalar>
struct Vae {
  VaeConfig cfg;
  ParamSet<Scalar> params;
  Conv2d<Scalar> c1, c2, c3;
  Linear<Scalar> fc_mu, fc_logvar, fc_dec;
  Deconv2d<Scalar> d1, d2, d3;
  Eigen::Index feat_h = 0, feat_w = 0, feat_size = 0;

  Vae(VaeConfig c, Rng& rng) : cfg(c) {
    ConvShape s1{cfg.channels, cfg.frame_h, cfg.frame_w,
                 cfg.ch1,      cfg.kernel,  cfg.stride,  cfg.pad};
    ConvShape s2{cfg.ch1, s1.out_h(), s1.out_w(), cfg.ch2,
                 cfg.kernel, cfg.stride, cfg.pad};
    ConvShape s3{cfg.ch2, s2.out_h(), s2.out_w(), cfg.ch3,
                 cfg.kernel, cfg.stride, cfg.pad};
    feat_h = s3.out_h();
    feat_w = s3.out_w();
    feat_size = cfg.ch3 * feat_h * feat_w;
    VMAV_CHECK(feat_h * 8 == cfg.frame_h && feat_w * 8 == cfg.frame_w,
               "vae: frame dims must divide by 8 (three stride-2 convs)");
    c1 = make_conv2d(params, "vae.enc1", s1, rng);
    c2 = make_conv2d(params, "vae.enc2", s2, rng);
    c3 = make_conv2d(params, "vae.enc3", s3, rng);
    fc_mu = make_linear(params, "vae.mu", feat_size, cfg.latent, rng);
    fc_logvar = make_linear(params, "vae.logvar", feat_size, cfg.latent, rng);
    fc_dec = make_linear(params, "vae.dec", cfg.latent, feat_size, rng);
    d1 = make_deconv2d(params, "vae.dec1", cfg.ch3, feat_h, feat_w, cfg.ch2,
                       cfg.kernel, cfg.stride, cfg.pad, rng);
    d2 = make_deconv2d(params, "vae.dec2", cfg.ch2, s3.h, s3.w, cfg.ch1,
                       cfg.kernel, cfg.stride, cfg.pad, rng);
    d3 = make_deconv2d(params, "vae.dec3", cfg.ch1, s2.h, s2.w, cfg.channels,
                       cfg.kernel, cfg.stride, cfg.pad, rng);
  }

  struct Posterior {
    Var<Scalar> mu, logvar;
  };

  Posterior encode_g(Graph<Scalar>& g, Var<Scalar> x) const {
    Var<Scalar> h = relu(conv2d(g, c1, x));
    h = relu(conv2d(g, c2, h));
    h = relu(conv2d(g, c3, h));
    return {apply(g, fc_mu, h), apply(g, fc_logvar, h)};
  }

  Var<Scalar> decode_g(Graph<Scalar>& g, Var<Scalar> z) const {
    Var<Scalar> h = relu(apply(g, fc_dec, z));
    h = relu(deconv2d(g, d1, h));
    h = relu(deconv2d(g, d2, h));
    return sigmoid(deconv2d(g, d3, h));
  }

  Var<Scalar> loss_g(Graph<Scalar>& g, Var<Scalar> x,
                     const Mat<Scalar>& eps) const {
    Posterior p = encode_g(g, x);
    Var<Scalar> z =
        add(p.mu, mul(exp(scale(p.logvar, Scalar(0.5))), g.constant(eps)));
    Var<Scalar> xhat = decode_g(g, z);
    return vae_loss(g, x, xhat, p.mu, p.logvar, cfg.recon_sum);
  }

  // Inference helpers (no gradients retained).
  void encode(const Mat<Scalar>& frames, Mat<Scalar>& mu,
              Mat<Scalar>& logvar) const {
    Graph<Scalar> g;
    Posterior p = encode_g(g, g.constant(frames));
    VMAV_CHECK(all_finite(p.mu.value()) && all_finite(p.logvar.value()),
               "vae.encode: non-finite posterior");
    mu = p.mu.value();
    logvar = p.logvar.value();
  }

  Mat<Scalar> decode(const Mat<Scalar>& z) const {
    Graph<Scalar> g;
    Var<Scalar> xhat = decode_g(g, g.constant(z));
    VMAV_CHECK(all_finite(xhat.value()), "vae.decode: non-finite output");
    return xhat.value();
  }

  Mat<Scalar> sample_prior(int n, Rng& rng) const {
    Mat<Scalar> z(cfg.latent, n);
    fill_normal(rng, z);
    return decode(z);
  }

  // Mean posterior reconstruction error per pixel over a frame batch.
  double reconstruction_mse(const Mat<Scalar>& frames) const {
    Mat<Scalar> mu, logvar;
    encode(frames, mu, logvar);
    Mat<Scalar> xhat = decode(mu);
    return double((xhat - frames).array().square().mean());
  }
};

}  // namespace vmav
