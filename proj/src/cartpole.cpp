#include "dgtd/cartpole.hpp"

#include <cmath>
#include <stdexcept>

namespace dgtd {

CartPoleState cartpole_reset(SplitMix64& rng) {
  CartPoleState s;
  s.x = uniform_real(rng, -0.05, 0.05);
  s.x_dot = uniform_real(rng, -0.05, 0.05);
  s.theta = uniform_real(rng, -0.05, 0.05);
  s.theta_dot = uniform_real(rng, -0.05, 0.05);
  return s;
}

CartPoleStepResult cartpole_step(const CartPoleParams& params,
                                 const CartPoleState& state, int action) {
  if (action != 0 && action != 1)
    throw std::invalid_argument("cartpole_step: action must be 0 or 1");
  if (state.done)
    throw std::invalid_argument("cartpole_step: episode already finished");

  const Real force = action == 1 ? params.force_mag : -params.force_mag;
  const Real total_mass = params.cart_mass + params.pole_mass;
  const Real pole_mass_length = params.pole_mass * params.half_length;
  const Real cos_t = std::cos(state.theta);
  const Real sin_t = std::sin(state.theta);

  const Real temp =
      (force + pole_mass_length * state.theta_dot * state.theta_dot * sin_t) /
      total_mass;
  const Real theta_acc =
      (params.gravity * sin_t - cos_t * temp) /
      (params.half_length *
       (4.0 / 3.0 - params.pole_mass * cos_t * cos_t / total_mass));
  const Real x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;

  CartPoleState next = state;
  next.x_dot += params.dt * x_acc;
  next.theta_dot += params.dt * theta_acc;
  next.x += params.dt * next.x_dot;
  next.theta += params.dt * next.theta_dot;
  next.steps += 1;

  const bool failed = std::abs(next.theta) > params.angle_limit ||
                      std::abs(next.x) > params.pos_limit;
  next.done = failed || next.steps >= params.max_steps;
  return CartPoleStepResult{next, 1.0, next.done};
}

}  // namespace dgtd
