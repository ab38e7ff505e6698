#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dgtd/models.hpp"
#include "dgtd/rng.hpp"
#include "dgtd/support_grid.hpp"
#include "dgtd/types.hpp"

namespace dgtd {

enum class ScheduleFamily { power_law, constant };

// Step size a0 / (1 + t)^p, or a constant a0.
struct StepSchedule {
  ScheduleFamily family = ScheduleFamily::power_law;
  Real a0 = 1.0;
  Real p = 1.0;

  static StepSchedule power(Real a0, Real p) {
    if (!(a0 > 0)) throw std::invalid_argument("StepSchedule: a0 must be > 0");
    return StepSchedule{ScheduleFamily::power_law, a0, p};
  }
  static StepSchedule constant(Real a0) {
    if (!(a0 > 0)) throw std::invalid_argument("StepSchedule: a0 must be > 0");
    return StepSchedule{ScheduleFamily::constant, a0, 0.0};
  }

  Real at(long t) const {
    if (family == ScheduleFamily::constant) return a0;
    return a0 / std::pow(1.0 + static_cast<Real>(t), p);
  }
};

// The two-timescale conditions (square-summable but not summable steps, with
// alpha decaying strictly faster than beta) hold for a power-law pair iff
// p_alpha > p_beta and both exponents lie in (1/2, 1].
inline void validate_two_timescale(const StepSchedule& alpha,
                                   const StepSchedule& beta) {
  if (alpha.family != ScheduleFamily::power_law ||
      beta.family != ScheduleFamily::power_law)
    throw std::invalid_argument(
        "two-timescale check: both schedules must be power laws");
  if (!(alpha.p > 0.5 && alpha.p <= 1.0 && beta.p > 0.5 && beta.p <= 1.0))
    throw std::invalid_argument(
        "two-timescale check: exponents must lie in (1/2, 1]");
  if (!(alpha.p > beta.p))
    throw std::invalid_argument(
        "two-timescale check: alpha must decay strictly faster than beta");
}

inline Vector project_ball(const VectorRef& v, Real radius) {
  if (!(radius > 0))
    throw std::invalid_argument("project_ball: radius must be positive");
  const Real norm = v.norm();
  if (norm <= radius) return v;
  return v * (radius / norm);
}

// Shared state of the two-timescale learners. theta stays inside the radius
// ball after every evaluation-learner step.
struct LearnerState {
  Vector theta;
  Vector w;
  long t = 0;
  Real radius = 100.0;

  explicit LearnerState(Vector theta0, Real radius_ = 100.0)
      : theta(std::move(theta0)),
        w(Vector::Zero(theta.size())),
        radius(radius_) {
    if (!(radius > 0))
      throw std::invalid_argument("LearnerState: radius must be positive");
    theta = project_ball(theta, radius);
  }
};

// Per-atom temporal distribution difference
// delta_j = F(x', (z_j - r) / gamma) - F(x, z_j), with the shifted argument
// snapped to the nearest atom.
template <class Model>
Vector delta(const Model& model, const VectorRef& theta,
             const typename Model::Input& x, Real r,
             const typename Model::Input& x_next, const SupportGrid& grid,
             Real gamma) {
  if (!(gamma > 0))
    throw std::invalid_argument("delta: gamma must be positive");
  const Vector f = model.cdf(theta, x);
  const Vector fn = model.cdf(theta, x_next);
  Vector d(grid.size());
  for (int j = 0; j < grid.size(); ++j)
    d[j] = fn[grid.project_index((grid.atom(j) - r) / gamma)] - f[j];
  return d;
}

namespace detail {

// Common body of the distributional policy-evaluation steps. Both variants
// share the w recursion and the correction/curvature terms and differ only
// in whether theta follows the feature-difference or the TD-error grouping.
// On a terminal transition the successor return is identically zero, so the
// target collapses to the unit step at r and the correction term vanishes.
template <class Model>
void distributional_pe_step(LearnerState& st, const Model& model,
                            const typename Model::Input& x, Real r,
                            const typename Model::Input& x_next,
                            const SupportGrid& grid, Real gamma,
                            const StepSchedule& alpha, const StepSchedule& beta,
                            bool td_grouping, bool terminal) {
  if (!(gamma > 0))
    throw std::invalid_argument("step: gamma must be positive");
  const int m = grid.size();
  const auto jac = model.cdf_jacobian(st.theta, x);
  const Vector f = model.cdf(st.theta, x);
  Vector fn;
  if (!terminal) fn = model.cdf(st.theta, x_next);

  Vector dvec(m);
  Vector c = jac * st.w;  // phi^T w per atom
  Vector c_shifted = Vector::Zero(m);
  for (int j = 0; j < m; ++j) {
    if (terminal) {
      dvec[j] = (grid.atom(j) >= r ? 1.0 : 0.0) - f[j];
    } else {
      const int k = grid.project_index((grid.atom(j) - r) / gamma);
      dvec[j] = fn[k] - f[j];
      c_shifted[k] += c[j];
    }
  }
  const Vector q = dvec - c;
  const Vector h = model.hvp_weighted(st.theta, x, q, st.w);

  Vector theta_inc = td_grouping ? Vector(jac.transpose() * dvec)
                                 : Vector(jac.transpose() * c);
  if (!terminal) {
    const auto jac_next = model.cdf_jacobian(st.theta, x_next);
    theta_inc.noalias() -= jac_next.transpose() * c_shifted;
  }
  theta_inc -= h;
  const Vector w_inc = jac.transpose() * q;

  st.theta = project_ball(st.theta + alpha.at(st.t) * theta_inc, st.radius);
  st.w += beta.at(st.t) * w_inc;
  st.t += 1;
}

// Common body of the scalar-value baselines; the nonlinear variants add the
// curvature correction h = (delta - phi^T w) Hess V w.
template <class Model>
void scalar_pe_step(LearnerState& st, const Model& model,
                    const typename Model::Input& x, Real r,
                    const typename Model::Input& x_next, Real gamma,
                    const StepSchedule& alpha, const StepSchedule& beta,
                    bool td_grouping, bool with_curvature, bool terminal) {
  if (!(gamma > 0))
    throw std::invalid_argument("step: gamma must be positive");
  const Vector phi = model.grad(st.theta, x);
  const Vector phi_next = terminal ? Vector(Vector::Zero(phi.size()))
                                   : model.grad(st.theta, x_next);
  const Real next_v = terminal ? 0.0 : model.value(st.theta, x_next);
  const Real td = r + gamma * next_v - model.value(st.theta, x);
  const Real pw = phi.dot(st.w);

  Vector theta_inc = td_grouping ? Vector(td * phi - gamma * pw * phi_next)
                                 : Vector(pw * (phi - gamma * phi_next));
  if (with_curvature) theta_inc -= (td - pw) * model.hvp(st.theta, x, st.w);
  const Vector w_inc = (td - pw) * phi;

  st.theta = project_ball(st.theta + alpha.at(st.t) * theta_inc, st.radius);
  st.w += beta.at(st.t) * w_inc;
  st.t += 1;
}

}  // namespace detail

template <class Model>
void dgtd2_step(LearnerState& st, const Model& model,
                const typename Model::Input& x, Real r,
                const typename Model::Input& x_next, const SupportGrid& grid,
                Real gamma, const StepSchedule& alpha, const StepSchedule& beta,
                bool terminal = false) {
  detail::distributional_pe_step(st, model, x, r, x_next, grid, gamma, alpha,
                                 beta, false, terminal);
}

template <class Model>
void dtdc_step(LearnerState& st, const Model& model,
               const typename Model::Input& x, Real r,
               const typename Model::Input& x_next, const SupportGrid& grid,
               Real gamma, const StepSchedule& alpha, const StepSchedule& beta,
               bool terminal = false) {
  detail::distributional_pe_step(st, model, x, r, x_next, grid, gamma, alpha,
                                 beta, true, terminal);
}

// Distributional Greedy-GQ control step over a state-action CDF model. The
// greedy action maximizes the mean of the successor distribution (ties to
// the lowest action id). eta interpolates between plain distributional
// Q-learning (0) and the full gradient correction (1). No curvature term and
// no ball projection unless project_theta is set.
template <class Model>
int dgreedygq_step(LearnerState& st, const Model& model,
                   const typename Model::Input& x_sa, Real r,
                   const std::vector<typename Model::Input>& next_action_inputs,
                   const SupportGrid& grid, Real gamma,
                   const StepSchedule& alpha, const StepSchedule& beta,
                   Real eta, bool project_theta = false,
                   bool terminal = false) {
  if (!(gamma > 0))
    throw std::invalid_argument("dgreedygq_step: gamma must be positive");
  if (!(eta >= 0 && eta <= 1))
    throw std::invalid_argument("dgreedygq_step: eta must lie in [0, 1]");
  if (!terminal && next_action_inputs.empty())
    throw std::invalid_argument("dgreedygq_step: no successor actions");

  const int m = grid.size();
  const auto jac = model.cdf_jacobian(st.theta, x_sa);
  const Vector f = model.cdf(st.theta, x_sa);

  int best = 0;
  Vector dvec(m);
  Vector c = jac * st.w;
  Vector c_shifted = Vector::Zero(m);
  if (terminal) {
    for (int j = 0; j < m; ++j)
      dvec[j] = (grid.atom(j) >= r ? 1.0 : 0.0) - f[j];
  } else {
    Real best_mean = -std::numeric_limits<Real>::infinity();
    for (int a = 0; a < static_cast<int>(next_action_inputs.size()); ++a) {
      const Real mean =
          mean_from_cdf(grid, model.cdf(st.theta, next_action_inputs[a]));
      if (mean > best_mean) {
        best_mean = mean;
        best = a;
      }
    }
    const typename Model::Input& x_next = next_action_inputs[best];
    const Vector fn = model.cdf(st.theta, x_next);
    for (int j = 0; j < m; ++j) {
      const int k = grid.project_index((grid.atom(j) - r) / gamma);
      dvec[j] = fn[k] - f[j];
      c_shifted[k] += c[j];
    }
  }

  Vector theta_inc = jac.transpose() * dvec;
  if (!terminal && eta > 0) {
    const auto jac_next =
        model.cdf_jacobian(st.theta, next_action_inputs[best]);
    theta_inc.noalias() -= eta * (jac_next.transpose() * c_shifted);
  }
  const Vector w_inc = jac.transpose() * (dvec - c);

  st.theta += alpha.at(st.t) * theta_inc;
  if (project_theta) st.theta = project_ball(st.theta, st.radius);
  st.w += beta.at(st.t) * w_inc;
  st.t += 1;
  return best;
}

template <class Model>
void gtd2_step(LearnerState& st, const Model& model,
               const typename Model::Input& x, Real r,
               const typename Model::Input& x_next, Real gamma,
               const StepSchedule& alpha, const StepSchedule& beta,
               bool terminal = false) {
  detail::scalar_pe_step(st, model, x, r, x_next, gamma, alpha, beta, false,
                         false, terminal);
}

template <class Model>
void tdc_step(LearnerState& st, const Model& model,
              const typename Model::Input& x, Real r,
              const typename Model::Input& x_next, Real gamma,
              const StepSchedule& alpha, const StepSchedule& beta,
              bool terminal = false) {
  detail::scalar_pe_step(st, model, x, r, x_next, gamma, alpha, beta, true,
                         false, terminal);
}

template <class Model>
void nonlinear_gtd2_step(LearnerState& st, const Model& model,
                         const typename Model::Input& x, Real r,
                         const typename Model::Input& x_next, Real gamma,
                         const StepSchedule& alpha, const StepSchedule& beta,
                         bool terminal = false) {
  detail::scalar_pe_step(st, model, x, r, x_next, gamma, alpha, beta, false,
                         true, terminal);
}

template <class Model>
void nonlinear_tdc_step(LearnerState& st, const Model& model,
                        const typename Model::Input& x, Real r,
                        const typename Model::Input& x_next, Real gamma,
                        const StepSchedule& alpha, const StepSchedule& beta,
                        bool terminal = false) {
  detail::scalar_pe_step(st, model, x, r, x_next, gamma, alpha, beta, true,
                         true, terminal);
}

// Linear decay from start to floor over the first horizon steps.
struct EpsilonSchedule {
  Real start = 0.1;
  Real floor = 0.02;
  long horizon = 1;

  Real at(long t) const {
    if (horizon <= 0 || t >= horizon) return floor;
    const Real frac = static_cast<Real>(t) / static_cast<Real>(horizon);
    return start + (floor - start) * frac;
  }
};

// Pick the action whose value distribution has the largest mean, or a
// uniform action with probability epsilon. Greedy ties go to the lowest id.
template <class Model>
int epsilon_greedy(const Model& model, const VectorRef& theta,
                   const std::vector<typename Model::Input>& action_inputs,
                   const SupportGrid& grid, Real epsilon, SplitMix64& rng) {
  if (!(epsilon >= 0 && epsilon <= 1))
    throw std::invalid_argument("epsilon_greedy: epsilon must lie in [0, 1]");
  if (action_inputs.empty())
    throw std::invalid_argument("epsilon_greedy: no actions");
  if (epsilon > 0 && uniform_real(rng) < epsilon)
    return uniform_int(rng, static_cast<int>(action_inputs.size()));
  int best = 0;
  Real best_mean = -std::numeric_limits<Real>::infinity();
  for (int a = 0; a < static_cast<int>(action_inputs.size()); ++a) {
    const Real mean = mean_from_cdf(grid, model.cdf(theta, action_inputs[a]));
    if (mean > best_mean) {
      best_mean = mean;
      best = a;
    }
  }
  return best;
}

}  // namespace dgtd
