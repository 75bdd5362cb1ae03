#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vmav/autodiff.hpp"
#include "vmav/common.hpp"

namespace vmav {

enum class OptKind { Adam, RMSProp };

template <class Scalar>
struct OptimizerState {
  OptKind kind = OptKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;       // Adam first moment
  double beta2 = 0.999;     // Adam second moment
  double rho = 0.9;         // RMSProp decay
  double eps = 1e-8;
  double grad_clip = 0.0;   // 0 disables elementwise gradient clipping
  long step_count = 0;

  // Slot buffers aligned with ParamSet iteration order.
  std::vector<Mat<Scalar>> m;  // Adam first moment
  std::vector<Mat<Scalar>> v;  // second moment / RMSProp mean square
};

template <class Scalar>
OptimizerState<Scalar> make_adam(double lr) {
  OptimizerState<Scalar> s;
  s.kind = OptKind::Adam;
  s.lr = lr;
  return s;
}

template <class Scalar>
OptimizerState<Scalar> make_rmsprop(double lr) {
  OptimizerState<Scalar> s;
  s.kind = OptKind::RMSProp;
  s.lr = lr;
  return s;
}

// Applies one update to every parameter, then clears gradients. Non-finite
// gradients abort before any parameter is touched.
template <class Scalar>
void optimizer_step(OptimizerState<Scalar>& opt, ParamSet<Scalar>& params) {
  for (const auto& p : params)
    VMAV_CHECK(all_finite(p.grad),
               "optimizer_step: non-finite gradient in parameter " + p.name);

  if (opt.m.empty()) {
    for (const auto& p : params) {
      opt.m.push_back(Mat<Scalar>::Zero(p.value.rows(), p.value.cols()));
      opt.v.push_back(Mat<Scalar>::Zero(p.value.rows(), p.value.cols()));
    }
  }

  ++opt.step_count;
  std::size_t i = 0;
  for (auto& p : params) {
    Mat<Scalar> grad = p.grad;
    if (opt.grad_clip > 0.0) {
      Scalar c = static_cast<Scalar>(opt.grad_clip);
      grad = grad.cwiseMax(-c).cwiseMin(c);
    }
    if (opt.kind == OptKind::Adam) {
      Scalar b1 = static_cast<Scalar>(opt.beta1);
      Scalar b2 = static_cast<Scalar>(opt.beta2);
      opt.m[i] = b1 * opt.m[i] + (Scalar(1) - b1) * grad;
      opt.v[i] = (b2 * opt.v[i].array() +
                  (Scalar(1) - b2) * grad.array().square())
                     .matrix();
      double bc1 = 1.0 - std::pow(opt.beta1, double(opt.step_count));
      double bc2 = 1.0 - std::pow(opt.beta2, double(opt.step_count));
      Scalar step = static_cast<Scalar>(opt.lr / bc1);
      Scalar denom_scale = static_cast<Scalar>(1.0 / std::sqrt(bc2));
      p.value.array() -=
          step * opt.m[i].array() /
          (opt.v[i].array().sqrt() * denom_scale +
           static_cast<Scalar>(opt.eps));
    } else {
      Scalar r = static_cast<Scalar>(opt.rho);
      opt.v[i] = (r * opt.v[i].array() +
                  (Scalar(1) - r) * grad.array().square())
                     .matrix();
      p.value.array() -= static_cast<Scalar>(opt.lr) * grad.array() /
                         (opt.v[i].array().sqrt() +
                          static_cast<Scalar>(opt.eps));
    }
    VMAV_CHECK(all_finite(p.value),
               "optimizer_step: non-finite value in parameter " + p.name);
    ++i;
  }
  params.zero_grads();
}

}  // namespace vmav
