#pragma once

#include <cstdint>
#include <utility>

#include "dgtd/mdp.hpp"
#include "dgtd/models.hpp"
#include "dgtd/stream.hpp"
#include "dgtd/support_grid.hpp"
#include "dgtd/types.hpp"

namespace dgtd {

// Exact matrices of the linear saddle-point reformulation
//   L(theta, w) = -<A theta, w> - (1/2) w^T C w,
// with A = E sum_j phi(s,z_j)(phi(s,z_j) - phi(s',(z_j-r)/gamma))^T and
// C = E sum_j phi(s,z_j) phi(s,z_j)^T. For nonsingular A the saddle point
// sits at the origin.
struct SaddleMatrices {
  Matrix a_saddle;
  Matrix c_saddle;
};

SaddleMatrices build_saddle_matrices(const LinearCdfModel& model,
                                     const TabularMDP& mdp,
                                     const Policy& policy,
                                     const SupportGrid& grid,
                                     const VectorRef& d_weights);
SaddleMatrices build_saddle_matrices(const LinearCdfModel& model,
                                     const TabularMDP& mdp,
                                     const Policy& policy,
                                     const SupportGrid& grid);

// Primal-dual iterates plus the running alpha-weighted sums that define the
// averaged outputs. Both iterates stay on their L2 balls.
struct SaddleState {
  Vector theta;
  Vector w;
  Vector theta_weighted_sum;
  Vector w_weighted_sum;
  Real alpha_sum = 0;
  Real r_theta = 1.0;
  Real r_w = 1.0;
  long t = 0;

  SaddleState(Vector theta0, Vector w0, Real r_theta_, Real r_w_);
};

// One projected primal-dual step with a single shared step size: descent on
// theta, ascent on w, both from the pre-step pair, then the post-step
// iterates join the weighted averages.
void sgda_step(SaddleState& state, const LinearCdfModel& model,
               const SupportGrid& grid, const Transition& transition,
               Real gamma, Real alpha_t);

// (theta_bar, w_bar): alpha-weighted means of the post-step iterates.
std::pair<Vector, Vector> average_iterates(const SaddleState& state);

// Duality-gap-style certificate: max over the w ball of L(theta', .) minus
// min over the theta ball of L(., w'). The theta minimum is closed form; the
// w maximum is a trust-region subproblem solved by bisection on the
// Lagrange multiplier. Always nonnegative.
Real err_certificate(const VectorRef& theta_prime, const VectorRef& w_prime,
                     const SaddleMatrices& matrices, Real r_theta, Real r_w);

// Right-hand side of the finite-sample high-probability bound:
// sqrt(10/n) (8 + 2 log(2/delta)) R sqrt(s1^2 + s2^2 + 3|A|^2 R^2 + 2 sC R^2).
Real bound_rhs(long n, Real delta_conf, Real r, Real sigma1, Real sigma2,
               Real a_norm, Real c_sigma_max);

// Scale constants estimated from a calibration stream: sample standard
// deviations of the two stochastic gradient blocks at a fixed reference
// pair on the ball boundaries, plus the exact spectral norms. m_star feeds
// the constant step size 2 / (m_star sqrt(5 n)).
struct SaddleCalibration {
  Real sigma1 = 0;
  Real sigma2 = 0;
  Real a_norm = 0;
  Real c_sigma_max = 0;
  Real m_star = 0;
};

SaddleCalibration calibrate_saddle(const LinearCdfModel& model,
                                   const SupportGrid& grid,
                                   const SaddleMatrices& matrices,
                                   TransitionStream& stream, int n_samples,
                                   Real gamma, Real r_theta, Real r_w,
                                   std::uint64_t seed);

// Constant step size from the calibration scale and the fixed horizon.
Real saddle_step_size(const SaddleCalibration& calibration, long horizon);

}  // namespace dgtd
