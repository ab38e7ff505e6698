#include "dgtd/saddle.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "dgtd/learners.hpp"
#include "dgtd/objectives.hpp"
#include "dgtd/rng.hpp"

namespace dgtd {

SaddleMatrices build_saddle_matrices(const LinearCdfModel& model,
                                     const TabularMDP& mdp,
                                     const Policy& policy,
                                     const SupportGrid& grid,
                                     const VectorRef& d_weights) {
  check_policy_shape(mdp, policy);
  check_state_weights(mdp, d_weights);
  if (model.num_atoms() != grid.size())
    throw std::invalid_argument(
        "build_saddle_matrices: grid size does not match model");
  if (model.num_inputs() != mdp.n_states)
    throw std::invalid_argument(
        "build_saddle_matrices: one model input per state required");

  const int n = mdp.n_states;
  const int m = grid.size();
  const int d = model.param_dim();
  const Matrix& phi = model.features();

  // Rows of the policy-averaged successor features: row s*m + j collects
  // E_{a,s'} phi(s', nearest atom to (z_j - r(s,a)) / gamma).
  Matrix backed = Matrix::Zero(static_cast<long>(n) * m, d);
  const IndexMatrix idx = backup_index_table(mdp, grid);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      const Real pa = policy.probs(s, a);
      if (pa == 0) continue;
      const int sa = mdp.sa_index(s, a);
      for (int sn = 0; sn < n; ++sn) {
        const Real w = pa * mdp.P(sa, sn);
        if (w == 0) continue;
        for (int j = 0; j < m; ++j)
          backed.row(static_cast<long>(s) * m + j) +=
              w * phi.row(static_cast<long>(sn) * m + idx(sa, j));
      }
    }

  Vector row_weights(static_cast<long>(n) * m);
  for (int s = 0; s < n; ++s)
    row_weights.segment(static_cast<long>(s) * m, m)
        .setConstant(std::max(d_weights[s], Real(0)));

  SaddleMatrices out;
  out.a_saddle.noalias() =
      phi.transpose() * row_weights.asDiagonal() * (phi - backed);
  out.c_saddle.noalias() = phi.transpose() * row_weights.asDiagonal() * phi;
  out.c_saddle = ((out.c_saddle + out.c_saddle.transpose()) * 0.5).eval();
  return out;
}

SaddleMatrices build_saddle_matrices(const LinearCdfModel& model,
                                     const TabularMDP& mdp,
                                     const Policy& policy,
                                     const SupportGrid& grid) {
  const Vector d = stationary_distribution(mdp, policy);
  return build_saddle_matrices(model, mdp, policy, grid, d);
}

SaddleState::SaddleState(Vector theta0, Vector w0, Real r_theta_, Real r_w_)
    : theta(std::move(theta0)),
      w(std::move(w0)),
      r_theta(r_theta_),
      r_w(r_w_) {
  if (!(r_theta > 0) || !(r_w > 0))
    throw std::invalid_argument("SaddleState: radii must be positive");
  if (theta.size() != w.size())
    throw std::invalid_argument("SaddleState: theta/w size mismatch");
  theta = project_ball(theta, r_theta);
  w = project_ball(w, r_w);
  theta_weighted_sum = Vector::Zero(theta.size());
  w_weighted_sum = Vector::Zero(w.size());
}

void sgda_step(SaddleState& state, const LinearCdfModel& model,
               const SupportGrid& grid, const Transition& transition,
               Real gamma, Real alpha_t) {
  if (!(gamma > 0))
    throw std::invalid_argument("sgda_step: gamma must be positive");
  if (!(alpha_t > 0))
    throw std::invalid_argument("sgda_step: step size must be positive");

  const int m = grid.size();
  const auto jac = model.cdf_jacobian(state.theta, transition.s);
  const auto jac_next = model.cdf_jacobian(state.theta, transition.s_next);
  const Vector f = model.cdf(state.theta, transition.s);
  const Vector fn = model.cdf(state.theta, transition.s_next);

  Vector dvec(m);
  Vector c = jac * state.w;
  Vector c_shifted = Vector::Zero(m);
  for (int j = 0; j < m; ++j) {
    const int k = grid.project_index((grid.atom(j) - transition.r) / gamma);
    dvec[j] = fn[k] - f[j];
    c_shifted[k] += c[j];
  }

  const Vector theta_inc =
      jac.transpose() * c - jac_next.transpose() * c_shifted;
  const Vector w_inc = jac.transpose() * (dvec - c);

  state.theta =
      project_ball(state.theta + alpha_t * theta_inc, state.r_theta);
  state.w = project_ball(state.w + alpha_t * w_inc, state.r_w);
  state.theta_weighted_sum += alpha_t * state.theta;
  state.w_weighted_sum += alpha_t * state.w;
  state.alpha_sum += alpha_t;
  state.t += 1;
}

std::pair<Vector, Vector> average_iterates(const SaddleState& state) {
  if (!(state.alpha_sum > 0))
    throw std::runtime_error("average_iterates: no steps accumulated");
  return {state.theta_weighted_sum / state.alpha_sum,
          state.w_weighted_sum / state.alpha_sum};
}

namespace {

// max over the ball of radius r_w of -b^T w - (1/2) w^T C w, solved in the
// eigenbasis of C. Interior when the unconstrained stationary point fits;
// otherwise bisection on the multiplier of the norm constraint.
Real ball_constrained_max(const Matrix& c, const Vector& b, Real r_w) {
  const int d = static_cast<int>(b.size());
  Eigen::SelfAdjointEigenSolver<Matrix> es(c);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("err_certificate: eigendecomposition failed");
  const Vector lam = es.eigenvalues();
  const Real lam_max = lam[d - 1];
  if (lam[0] < -1e-10 * std::max(Real(1), lam_max))
    throw std::runtime_error("err_certificate: C is not positive semidefinite");
  const Vector beta = es.eigenvectors().transpose() * b;
  const Real cut = std::max(lam_max, Real(0)) * 1e-14;

  // Interior candidate: w_i = -beta_i / lam_i on the retained spectrum. A
  // significant component on a null eigenvalue forces the boundary branch.
  bool interior_possible = true;
  Real norm_sq = 0;
  Real value = 0;
  const Real b_norm = b.norm();
  for (int i = 0; i < d; ++i) {
    if (lam[i] <= cut) {
      if (std::abs(beta[i]) > 1e-12 * std::max(Real(1), b_norm))
        interior_possible = false;
      continue;
    }
    norm_sq += (beta[i] / lam[i]) * (beta[i] / lam[i]);
    value += beta[i] * beta[i] / lam[i];
  }
  if (interior_possible && norm_sq <= r_w * r_w) return 0.5 * value;

  // Boundary: (C + mu I) w = -b with |w(mu)| decreasing in mu; the root lies
  // in (0, |b| / r_w].
  auto norm_at = [&](Real mu) {
    Real acc = 0;
    for (int i = 0; i < d; ++i) {
      const Real denom = std::max(lam[i], Real(0)) + mu;
      acc += (beta[i] / denom) * (beta[i] / denom);
    }
    return std::sqrt(acc);
  };
  Real lo = 0;
  Real hi = std::max(b_norm / r_w, Real(1e-300));
  int expand = 0;
  while (norm_at(hi) > r_w && expand++ < 60) hi *= 2;
  bool converged = false;
  for (int it = 0; it < 200; ++it) {
    const Real mid = 0.5 * (lo + hi);
    if (norm_at(mid) > r_w)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-10 * std::max(Real(1), hi)) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw std::runtime_error("err_certificate: bisection did not converge");
  const Real mu = hi;
  Real inner = 0;
  for (int i = 0; i < d; ++i) {
    const Real denom = std::max(lam[i], Real(0)) + mu;
    const Real wi = -beta[i] / denom;
    inner += -beta[i] * wi - 0.5 * std::max(lam[i], Real(0)) * wi * wi;
  }
  // w = 0 is always feasible with value 0, so the true maximum is never
  // negative; clamp rounding noise.
  return std::max(inner, Real(0));
}

}  // namespace

Real err_certificate(const VectorRef& theta_prime, const VectorRef& w_prime,
                     const SaddleMatrices& matrices, Real r_theta, Real r_w) {
  if (!(r_theta > 0) || !(r_w > 0))
    throw std::invalid_argument("err_certificate: radii must be positive");
  if (theta_prime.size() != matrices.a_saddle.cols() ||
      w_prime.size() != matrices.a_saddle.rows())
    throw std::invalid_argument("err_certificate: size mismatch");

  const Vector b = matrices.a_saddle * theta_prime;
  const Real inner_max = ball_constrained_max(matrices.c_saddle, b, r_w);
  const Real outer =
      r_theta * (matrices.a_saddle.transpose() * w_prime).norm() +
      0.5 * w_prime.dot(matrices.c_saddle * w_prime);
  return inner_max + outer;
}

Real bound_rhs(long n, Real delta_conf, Real r, Real sigma1, Real sigma2,
               Real a_norm, Real c_sigma_max) {
  if (n < 1) throw std::invalid_argument("bound_rhs: n must be >= 1");
  if (!(delta_conf > 0 && delta_conf < 1))
    throw std::invalid_argument("bound_rhs: delta_conf must lie in (0, 1)");
  if (r < 0 || sigma1 < 0 || sigma2 < 0 || a_norm < 0 || c_sigma_max < 0)
    throw std::invalid_argument("bound_rhs: inputs must be nonnegative");
  const Real scale = sigma1 * sigma1 + sigma2 * sigma2 +
                     3.0 * a_norm * a_norm * r * r + 2.0 * c_sigma_max * r * r;
  return std::sqrt(10.0 / static_cast<Real>(n)) *
         (8.0 + 2.0 * std::log(2.0 / delta_conf)) * r * std::sqrt(scale);
}

SaddleCalibration calibrate_saddle(const LinearCdfModel& model,
                                   const SupportGrid& grid,
                                   const SaddleMatrices& matrices,
                                   TransitionStream& stream, int n_samples,
                                   Real gamma, Real r_theta, Real r_w,
                                   std::uint64_t seed) {
  if (n_samples < 2)
    throw std::invalid_argument("calibrate_saddle: need at least 2 samples");
  if (!(gamma > 0))
    throw std::invalid_argument("calibrate_saddle: gamma must be positive");

  const int d = model.param_dim();
  const int m = grid.size();

  // Reference pair on the ball boundaries; the gradient blocks are linear in
  // (theta, w), so this pins the scale the iterates can reach.
  SplitMix64 g = rng_for_seed(seed, 0x5ad);
  Vector theta_ref(d);
  Vector w_ref(d);
  for (int i = 0; i < d; ++i) {
    theta_ref[i] = normal_real(g);
    w_ref[i] = normal_real(g);
  }
  theta_ref *= r_theta / theta_ref.norm();
  w_ref *= r_w / w_ref.norm();

  Matrix block1(d, n_samples);  // theta-block samples: A_hat^T w_ref
  Matrix block2(d, n_samples);  // w-block samples: A_hat theta_ref + C_hat w_ref
  for (int i = 0; i < n_samples; ++i) {
    const Transition tr = stream.next();
    const auto jac = model.cdf_jacobian(theta_ref, tr.s);
    const auto jac_next = model.cdf_jacobian(theta_ref, tr.s_next);
    const Vector f = model.cdf(theta_ref, tr.s);
    const Vector fn = model.cdf(theta_ref, tr.s_next);
    Vector c = jac * w_ref;
    Vector dvec(m);
    Vector c_shifted = Vector::Zero(m);
    for (int j = 0; j < m; ++j) {
      const int k = grid.project_index((grid.atom(j) - tr.r) / gamma);
      dvec[j] = fn[k] - f[j];
      c_shifted[k] += c[j];
    }
    block1.col(i) = jac.transpose() * c - jac_next.transpose() * c_shifted;
    // A_hat theta + C_hat w = sum_j phi_j (phi_j^T w - delta_j)
    block2.col(i) = jac.transpose() * (c - dvec);
  }

  auto sample_std = [](const Matrix& cols) {
    const Vector mean = cols.rowwise().mean();
    Real acc = 0;
    for (long i = 0; i < cols.cols(); ++i)
      acc += (cols.col(i) - mean).squaredNorm();
    return std::sqrt(acc / static_cast<Real>(cols.cols() - 1));
  };

  SaddleCalibration cal;
  cal.sigma1 = sample_std(block1);
  cal.sigma2 = sample_std(block2);
  cal.a_norm = matrices.a_saddle.jacobiSvd().singularValues()[0];
  Eigen::SelfAdjointEigenSolver<Matrix> es(matrices.c_saddle);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("calibrate_saddle: eigendecomposition failed");
  cal.c_sigma_max = std::max(es.eigenvalues().maxCoeff(), Real(0));
  const Real r = std::max(r_theta, r_w);
  cal.m_star = std::sqrt(
      2.0 * r * r *
      (cal.sigma1 * cal.sigma1 + cal.sigma2 * cal.sigma2 +
       3.0 * cal.a_norm * cal.a_norm * r * r +
       2.0 * cal.c_sigma_max * cal.c_sigma_max * r * r));
  return cal;
}

Real saddle_step_size(const SaddleCalibration& calibration, long horizon) {
  if (horizon < 1)
    throw std::invalid_argument("saddle_step_size: horizon must be >= 1");
  if (!(calibration.m_star > 0))
    throw std::invalid_argument("saddle_step_size: calibration scale not set");
  return 2.0 / (calibration.m_star *
                std::sqrt(5.0 * static_cast<Real>(horizon)));
}

}  // namespace dgtd
