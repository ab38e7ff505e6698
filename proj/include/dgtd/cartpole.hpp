#pragma once

#include "dgtd/rng.hpp"
#include "dgtd/types.hpp"

namespace dgtd {

struct CartPoleParams {
  Real gravity = 9.8;
  Real cart_mass = 1.0;
  Real pole_mass = 0.1;
  Real half_length = 0.5;
  Real force_mag = 10.0;
  Real dt = 0.02;
  Real angle_limit = 12.0 * 3.14159265358979323846 / 180.0;
  Real pos_limit = 2.4;
  int max_steps = 200;
};

struct CartPoleState {
  Real x = 0;
  Real x_dot = 0;
  Real theta = 0;
  Real theta_dot = 0;
  int steps = 0;
  bool done = false;
};

struct CartPoleStepResult {
  CartPoleState state;
  Real reward;
  bool done;
};

// All four coordinates uniform on [-0.05, 0.05].
CartPoleState cartpole_reset(SplitMix64& rng);

// Semi-implicit Euler: accelerations from the current state update the
// velocities first, the new velocities then update the positions. Action 0
// pushes left, 1 pushes right; reward is +1 per step taken. An episode ends
// when the angle or position limit is exceeded or at the step cap.
CartPoleStepResult cartpole_step(const CartPoleParams& params,
                                 const CartPoleState& state, int action);

}  // namespace dgtd
