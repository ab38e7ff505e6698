#pragma once

#include <cstdint>

#include "dgtd/types.hpp"

namespace dgtd {

// Finite MDP with dense transition kernel. P stacks one row per (s, a) pair,
// row index s * n_actions + a; each row is a distribution over next states.
struct TabularMDP {
  int n_states;
  int n_actions;
  Real gamma;
  Matrix P;  // (n_states * n_actions) x n_states, row-stochastic
  Matrix R;  // n_states x n_actions

  TabularMDP(int n_states, int n_actions, Real gamma, Matrix P, Matrix R);

  int sa_index(int s, int a) const { return s * n_actions + a; }
};

// Stationary randomized policy; rows are distributions over actions.
struct Policy {
  Matrix probs;  // n_states x n_actions

  explicit Policy(Matrix probs);

  int n_states() const { return static_cast<int>(probs.rows()); }
  int n_actions() const { return static_cast<int>(probs.cols()); }
};

// One sampled transition. a_next is -1 unless the stream runs in evaluation
// mode, in which case it is the action drawn at s_next.
struct Transition {
  int s;
  int a;
  Real r;
  int s_next;
  int a_next = -1;
};

struct ValueIterationResult {
  Matrix q;       // n_states x n_actions
  Vector v;       // n_states
  Policy greedy;  // deterministic, ties resolved toward the lowest action id
  int iterations;
};

TabularMDP build_grid_world(int width, int height, int goal_cell,
                            Real step_reward, Real goal_reward, Real gamma);

// Reproducible random instance: transition rows are normalized positive
// uniform draws, rewards are uniform on [0, 1].
TabularMDP build_random_mdp(int n_states, int n_actions, std::uint64_t seed,
                            Real gamma = 0.9);

ValueIterationResult value_iteration(const TabularMDP& mdp, Real tol = 1e-10);

// (1 - eps) * policy + eps * uniform.
Policy perturb_policy(const Policy& policy, Real eps);

// State transition matrix P^pi (n_states x n_states).
Matrix policy_transition_matrix(const TabularMDP& mdp, const Policy& policy);

// Expected one-step reward per state under the policy.
Vector policy_expected_reward(const TabularMDP& mdp, const Policy& policy);

// Stationary distribution of the policy's state chain, made irreducible by
// mixing in a uniform teleport with weight `teleport`. Solved directly; the
// residual is checked on the mixed chain.
Vector stationary_distribution(const TabularMDP& mdp, const Policy& policy,
                               Real tol = 1e-10, Real teleport = 1e-6);

}  // namespace dgtd
