#pragma once

#include "vmav/common.hpp"

namespace vmav {

struct CartState {
  double x = 0.0;
  double x_dot = 0.0;
  double theta = 0.0;
  double theta_dot = 0.0;
  int steps_elapsed = 0;
};

struct CartPoleConfig {
  double gravity = 9.8;
  double masscart = 1.0;
  double masspole = 0.1;
  double half_length = 0.5;
  double force_mag = 10.0;
  double tau = 0.02;
  double x_threshold = 2.4;
  double theta_threshold = 0.261799;  // 15 degrees
  int max_steps = 200;
  double init_band = 0.05;
};

struct StepResult {
  CartState next;
  double reward = 1.0;
  bool done = false;
};

class CartPole {
 public:
  explicit CartPole(CartPoleConfig cfg = {}) : cfg_(cfg) {}

  const CartPoleConfig& config() const { return cfg_; }

  CartState reset(Rng& rng) const;
  bool is_terminal(const CartState& s) const;
  StepResult step(const CartState& s, int action) const;

 private:
  CartPoleConfig cfg_;
};

}  // namespace vmav
