#include "vmav/cartpole.hpp"

#include <cmath>

namespace vmav {

CartState CartPole::reset(Rng& rng) const {
  CartState s;
  s.x = rng.uniform(-cfg_.init_band, cfg_.init_band);
  s.x_dot = rng.uniform(-cfg_.init_band, cfg_.init_band);
  s.theta = rng.uniform(-cfg_.init_band, cfg_.init_band);
  s.theta_dot = rng.uniform(-cfg_.init_band, cfg_.init_band);
  s.steps_elapsed = 0;
  return s;
}

bool CartPole::is_terminal(const CartState& s) const {
  return std::abs(s.x) > cfg_.x_threshold ||
         std::abs(s.theta) > cfg_.theta_threshold ||
         s.steps_elapsed >= cfg_.max_steps;
}

StepResult CartPole::step(const CartState& s, int action) const {
  VMAV_CHECK(action == 0 || action == 1, "step: action must be 0 or 1");
  VMAV_CHECK(!is_terminal(s), "step: state is already terminal");
  VMAV_CHECK(std::isfinite(s.x) && std::isfinite(s.x_dot) &&
                 std::isfinite(s.theta) && std::isfinite(s.theta_dot),
             "step: non-finite state");

  const double total_mass = cfg_.masscart + cfg_.masspole;
  const double polemass_length = cfg_.masspole * cfg_.half_length;
  const double force = action == 1 ? cfg_.force_mag : -cfg_.force_mag;
  const double costheta = std::cos(s.theta);
  const double sintheta = std::sin(s.theta);

  const double temp =
      (force + polemass_length * s.theta_dot * s.theta_dot * sintheta) /
      total_mass;
  const double theta_acc =
      (cfg_.gravity * sintheta - costheta * temp) /
      (cfg_.half_length *
       (4.0 / 3.0 - cfg_.masspole * costheta * costheta / total_mass));
  const double x_acc =
      temp - polemass_length * theta_acc * costheta / total_mass;

  StepResult r;
  r.next.x = s.x + cfg_.tau * s.x_dot;
  r.next.x_dot = s.x_dot + cfg_.tau * x_acc;
  r.next.theta = s.theta + cfg_.tau * s.theta_dot;
  r.next.theta_dot = s.theta_dot + cfg_.tau * theta_acc;
  r.next.steps_elapsed = s.steps_elapsed + 1;
  r.reward = 1.0;
  r.done = is_terminal(r.next);
  return r;
}

}  // namespace vmav
