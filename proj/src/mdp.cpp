#include "dgtd/mdp.hpp"

#include <cmath>
#include <stdexcept>

#include "dgtd/rng.hpp"

namespace dgtd {

namespace {

void check_rows_stochastic(const Matrix& rows, const char* what) {
  for (int i = 0; i < rows.rows(); ++i) {
    Real sum = 0;
    for (int j = 0; j < rows.cols(); ++j) {
      Real v = rows(i, j);
      if (!(v >= -1e-12))
        throw std::invalid_argument(std::string(what) +
                                    ": negative probability entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument(std::string(what) +
                                  ": row does not sum to 1");
  }
}

}  // namespace

TabularMDP::TabularMDP(int n_states_, int n_actions_, Real gamma_, Matrix P_,
                       Matrix R_)
    : n_states(n_states_),
      n_actions(n_actions_),
      gamma(gamma_),
      P(std::move(P_)),
      R(std::move(R_)) {
  if (n_states < 1 || n_actions < 1)
    throw std::invalid_argument("TabularMDP: empty state or action space");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("TabularMDP: gamma must lie in (0, 1)");
  if (P.rows() != static_cast<long>(n_states) * n_actions ||
      P.cols() != n_states)
    throw std::invalid_argument("TabularMDP: P has wrong shape");
  if (R.rows() != n_states || R.cols() != n_actions)
    throw std::invalid_argument("TabularMDP: R has wrong shape");
  check_rows_stochastic(P, "TabularMDP");
}

Policy::Policy(Matrix probs_) : probs(std::move(probs_)) {
  if (probs.rows() < 1 || probs.cols() < 1)
    throw std::invalid_argument("Policy: empty table");
  check_rows_stochastic(probs, "Policy");
}

TabularMDP build_grid_world(int width, int height, int goal_cell,
                            Real step_reward, Real goal_reward, Real gamma) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("build_grid_world: degenerate grid");
  const int n = width * height;
  if (goal_cell < 0 || goal_cell >= n)
    throw std::invalid_argument("build_grid_world: goal cell out of range");
  const int n_actions = 4;  // up, down, left, right
  Matrix P = Matrix::Zero(static_cast<long>(n) * n_actions, n);
  Matrix R = Matrix::Zero(n, n_actions);
  const int drow[4] = {-1, 1, 0, 0};
  const int dcol[4] = {0, 0, -1, 1};
  for (int s = 0; s < n; ++s) {
    const int row = s / width;
    const int col = s % width;
    for (int a = 0; a < n_actions; ++a) {
      if (s == goal_cell) {
        P(s * n_actions + a, s) = 1.0;  // absorbing, zero reward
        continue;
      }
      int r2 = row + drow[a];
      int c2 = col + dcol[a];
      if (r2 < 0 || r2 >= height || c2 < 0 || c2 >= width) {
        r2 = row;  // walls clamp
        c2 = col;
      }
      const int s2 = r2 * width + c2;
      P(s * n_actions + a, s2) = 1.0;
      R(s, a) = (s2 == goal_cell) ? goal_reward : step_reward;
    }
  }
  return TabularMDP(n, n_actions, gamma, std::move(P), std::move(R));
}

TabularMDP build_random_mdp(int n_states, int n_actions, std::uint64_t seed,
                            Real gamma) {
  SplitMix64 g(mix_key(seed, 0x7d3));
  Matrix P(static_cast<long>(n_states) * n_actions, n_states);
  Matrix R(n_states, n_actions);
  for (int i = 0; i < P.rows(); ++i) {
    Real sum = 0;
    for (int j = 0; j < n_states; ++j) {
      Real v = uniform_real(g) + 1e-3;  // bounded away from zero rows
      P(i, j) = v;
      sum += v;
    }
    P.row(i) /= sum;
    // Renormalize exactly enough for the 1e-12 row check.
    P(i, n_states - 1) += 1.0 - P.row(i).sum();
  }
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) R(s, a) = uniform_real(g);
  return TabularMDP(n_states, n_actions, gamma, std::move(P), std::move(R));
}

ValueIterationResult value_iteration(const TabularMDP& mdp, Real tol) {
  const int n = mdp.n_states;
  const int k = mdp.n_actions;
  Matrix q = Matrix::Zero(n, k);
  Vector v = Vector::Zero(n);
  const long cap = 1000000;
  for (long it = 1; it <= cap; ++it) {
    Matrix q_next(n, k);
    for (int s = 0; s < n; ++s)
      for (int a = 0; a < k; ++a)
        q_next(s, a) =
            mdp.R(s, a) + mdp.gamma * mdp.P.row(mdp.sa_index(s, a)).dot(v);
    const Real diff = (q_next - q).cwiseAbs().maxCoeff();
    q = q_next;
    v = q.rowwise().maxCoeff();
    if (diff <= tol) {
      Matrix probs = Matrix::Zero(n, k);
      for (int s = 0; s < n; ++s) {
        int best = 0;
        for (int a = 1; a < k; ++a)
          if (q(s, a) > q(s, best)) best = a;
        probs(s, best) = 1.0;
      }
      return ValueIterationResult{q, v, Policy(std::move(probs)),
                                  static_cast<int>(it)};
    }
  }
  throw std::runtime_error("value_iteration: no convergence within cap");
}

Policy perturb_policy(const Policy& policy, Real eps) {
  if (!(eps >= 0.0 && eps <= 1.0))
    throw std::invalid_argument("perturb_policy: eps must lie in [0, 1]");
  const int k = policy.n_actions();
  Matrix probs = (1.0 - eps) * policy.probs;
  probs.array() += eps / k;
  return Policy(std::move(probs));
}

Matrix policy_transition_matrix(const TabularMDP& mdp, const Policy& policy) {
  if (policy.n_states() != mdp.n_states ||
      policy.n_actions() != mdp.n_actions)
    throw std::invalid_argument("policy_transition_matrix: shape mismatch");
  Matrix p_pi = Matrix::Zero(mdp.n_states, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      p_pi.row(s) += policy.probs(s, a) * mdp.P.row(mdp.sa_index(s, a));
  return p_pi;
}

Vector policy_expected_reward(const TabularMDP& mdp, const Policy& policy) {
  Vector r(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s)
    r[s] = policy.probs.row(s).dot(mdp.R.row(s));
  return r;
}

Vector stationary_distribution(const TabularMDP& mdp, const Policy& policy,
                               Real tol, Real teleport) {
  const int n = mdp.n_states;
  Matrix p_pi = policy_transition_matrix(mdp, policy);
  Matrix mixed = (1.0 - teleport) * p_pi;
  mixed.array() += teleport / n;
  // Solve d^T mixed = d^T with sum(d) = 1: replace one balance equation by
  // the normalization constraint.
  Matrix m = mixed.transpose() - Matrix::Identity(n, n);
  m.row(n - 1).setOnes();
  Vector b = Vector::Zero(n);
  b[n - 1] = 1.0;
  Vector d = m.fullPivLu().solve(b);
  d = d.cwiseMax(0.0);
  d /= d.sum();
  const Real residual = (mixed.transpose() * d - d).lpNorm<1>();
  if (residual > std::max(tol, 1e-12))
    throw std::runtime_error("stationary_distribution: residual above tol");
  return d;
}

}  // namespace dgtd
