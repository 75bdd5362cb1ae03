#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "vmav/autodiff.hpp"

namespace vmav {

// Compares the gradients currently stored in `params` (from a prior backward
// pass) against central finite differences of `loss`, which must evaluate the
// scalar loss at the current parameter values without touching gradients.
// Returns the max relative error over all parameter elements.
template <class Scalar>
double grad_check(ParamSet<Scalar>& params,
                  const std::function<double()>& loss, double h) {
  double worst = 0.0;
  for (auto& p : params) {
    for (Eigen::Index j = 0; j < p.value.cols(); ++j)
      for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
        Scalar saved = p.value(i, j);
        p.value(i, j) = saved + static_cast<Scalar>(h);
        double lp = loss();
        p.value(i, j) = saved - static_cast<Scalar>(h);
        double lm = loss();
        p.value(i, j) = saved;
        double fd = (lp - lm) / (2.0 * h);
        double an = static_cast<double>(p.grad(i, j));
        double denom = std::max(std::abs(fd) + std::abs(an), 1e-3);
        worst = std::max(worst, std::abs(fd - an) / denom);
      }
  }
  return worst;
}

}  // namespace vmav
