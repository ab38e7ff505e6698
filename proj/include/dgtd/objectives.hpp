#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "dgtd/distribution.hpp"
#include "dgtd/mdp.hpp"
#include "dgtd/models.hpp"
#include "dgtd/support_grid.hpp"
#include "dgtd/types.hpp"

namespace dgtd {

using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

// Eigendecomposition-backed solver for symmetric positive semidefinite
// systems. Softmax CDF models carry structural flat directions (shifting all
// logits leaves the CDF unchanged), so their second-moment matrix is rank
// deficient by construction; eigenvalues below lam_max * 1e-14 are treated
// as exact zeros and dropped. The retained spectrum must be well conditioned
// and right-hand sides must lie in its span.
struct PsdSolver {
  Matrix eigvecs;
  Vector eigvals;  // ascending
  int rank = 0;
  Real cond = std::numeric_limits<Real>::infinity();
  bool singular = true;

  static PsdSolver build(const Matrix& a) {
    PsdSolver s;
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("PsdSolver: eigendecomposition failed");
    s.eigvecs = es.eigenvectors();
    s.eigvals = es.eigenvalues();
    const int d = static_cast<int>(s.eigvals.size());
    const Real lam_max = s.eigvals[d - 1];
    if (!(lam_max > 0)) return s;
    const Real cut = lam_max * 1e-14;
    int first = 0;
    while (first < d && s.eigvals[first] <= cut) ++first;
    s.rank = d - first;
    s.cond = lam_max / s.eigvals[first];
    s.singular = s.rank == 0 || !(s.cond <= 1e12);
    return s;
  }

  Vector solve(const VectorRef& rhs) const {
    if (singular)
      throw std::runtime_error("PsdSolver: matrix flagged singular");
    const int d = static_cast<int>(s_dim());
    Vector y = eigvecs.transpose() * rhs;
    Real dropped = 0;
    for (int i = 0; i < d - rank; ++i) dropped += y[i] * y[i];
    if (std::sqrt(dropped) > 1e-8 * std::max(Real(1), rhs.norm()))
      throw std::runtime_error(
          "PsdSolver: right-hand side has a null-space component");
    Vector x = Vector::Zero(d);
    for (int i = d - rank; i < d; ++i)
      x += (y[i] / eigvals[i]) * eigvecs.col(i);
    return x;
  }

 private:
  long s_dim() const { return eigvals.size(); }
};

// Everything assembled at one theta: Phi stacks the per-atom CDF gradients
// (row s*m + j is grad F(s, z_j)), F the model CDF values, G the exact
// expected target CDF under the policy, and A = Phi^T D Phi with D the
// diagonal of per-state weights repeated per atom.
struct DmspbeWorkspace {
  int n_states = 0;
  int num_atoms = 0;
  Matrix phi;
  Vector f;
  Vector g;
  Vector row_weights;
  Matrix a_mat;
  PsdSolver solver;

  void require_solvable() const {
    if (solver.singular)
      throw std::runtime_error(
          "dmspbe: second-moment matrix flagged singular "
          "(condition number above 1e12)");
  }
};

struct GradientReport {
  Real j = 0;
  Vector grad;
  Vector w_star;
  Vector h_term;
};

// The two algebraic rearrangements of the negative half-gradient: one groups
// the feature difference (phi - phi') phi^T w, the other the TD-style
// residual b - B w. They coincide exactly when w solves A w = b, so their
// numerical gap is a self-check on the assembly.
struct GradientForms {
  Vector feature_difference_form;
  Vector td_error_form;
};

inline void check_policy_shape(const TabularMDP& mdp, const Policy& policy) {
  if (policy.n_states() != mdp.n_states ||
      policy.n_actions() != mdp.n_actions)
    throw std::invalid_argument("policy shape does not match the MDP");
}

inline void check_state_weights(const TabularMDP& mdp,
                                const VectorRef& d_weights) {
  if (d_weights.size() != mdp.n_states)
    throw std::invalid_argument("need one state weight per state");
  Real sum = 0;
  for (int s = 0; s < d_weights.size(); ++s) {
    if (d_weights[s] < -1e-12)
      throw std::invalid_argument("state weights must be nonnegative");
    sum += d_weights[s];
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("state weights must sum to 1");
}

// Identity inputs for models indexed by state id.
inline std::vector<int> state_id_inputs(int n_states) {
  std::vector<int> inputs(n_states);
  for (int s = 0; s < n_states; ++s) inputs[s] = s;
  return inputs;
}

// idx(s*A + a, j) is the atom where the successor CDF is read when row
// (s, a) is backed up: the atom nearest to (z_j - r(s, a)) / gamma.
inline IndexMatrix backup_index_table(const TabularMDP& mdp,
                                      const SupportGrid& grid) {
  IndexMatrix idx(mdp.n_states * mdp.n_actions, grid.size());
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      for (int j = 0; j < grid.size(); ++j)
        idx(mdp.sa_index(s, a), j) =
            grid.project_index((grid.atom(j) - mdp.R(s, a)) / mdp.gamma);
  return idx;
}

template <class Model>
DmspbeWorkspace assemble(const Model& model, const VectorRef& theta,
                         const TabularMDP& mdp, const Policy& policy,
                         const SupportGrid& grid, const VectorRef& d_weights,
                         const std::vector<typename Model::Input>& state_inputs,
                         bool cramer_weighted = false) {
  check_policy_shape(mdp, policy);
  check_state_weights(mdp, d_weights);
  if (model.num_atoms() != grid.size())
    throw std::invalid_argument("assemble: grid size does not match model");
  if (theta.size() != model.param_dim())
    throw std::invalid_argument("assemble: theta size mismatch");
  if (static_cast<int>(state_inputs.size()) != mdp.n_states)
    throw std::invalid_argument("assemble: one input per state required");

  const int n = mdp.n_states;
  const int m = grid.size();
  const int d = model.param_dim();
  const Real weight_scale = cramer_weighted ? grid.delta_z() : 1.0;

  DmspbeWorkspace ws;
  ws.n_states = n;
  ws.num_atoms = m;
  ws.phi.resize(static_cast<long>(n) * m, d);
  ws.f.resize(static_cast<long>(n) * m);
  ws.g = Vector::Zero(static_cast<long>(n) * m);
  ws.row_weights.resize(static_cast<long>(n) * m);
  for (int s = 0; s < n; ++s) {
    ws.phi.middleRows(static_cast<long>(s) * m, m) =
        model.cdf_jacobian(theta, state_inputs[s]);
    ws.f.segment(static_cast<long>(s) * m, m) =
        model.cdf(theta, state_inputs[s]);
    ws.row_weights.segment(static_cast<long>(s) * m, m)
        .setConstant(std::max(d_weights[s], Real(0)) * weight_scale);
  }

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
          ws.g[static_cast<long>(s) * m + j] +=
              w * ws.f[static_cast<long>(sn) * m + idx(sa, j)];
      }
    }

  ws.a_mat.noalias() =
      ws.phi.transpose() * ws.row_weights.asDiagonal() * ws.phi;
  ws.a_mat = ((ws.a_mat + ws.a_mat.transpose()) * 0.5).eval();
  ws.solver = PsdSolver::build(ws.a_mat);
  return ws;
}

template <class Model>
DmspbeWorkspace assemble(const Model& model, const VectorRef& theta,
                         const TabularMDP& mdp, const Policy& policy,
                         const SupportGrid& grid,
                         const std::vector<typename Model::Input>& state_inputs,
                         bool cramer_weighted = false) {
  const Vector d = stationary_distribution(mdp, policy);
  return assemble(model, theta, mdp, policy, grid, d, state_inputs,
                  cramer_weighted);
}

inline Real j_dmspbe(const DmspbeWorkspace& ws) {
  ws.require_solvable();
  const Vector c =
      ws.phi.transpose() * ws.row_weights.cwiseProduct(ws.f - ws.g);
  return c.dot(ws.solver.solve(c));
}

namespace detail {

struct DmspbeGradientParts {
  GradientReport report;
  GradientForms forms;
};

template <class Model>
DmspbeGradientParts dmspbe_gradient_parts(
    const Model& model, const VectorRef& theta, const TabularMDP& mdp,
    const Policy& policy, const SupportGrid& grid, const VectorRef& d_weights,
    const std::vector<typename Model::Input>& state_inputs,
    bool cramer_weighted) {
  DmspbeWorkspace ws = assemble(model, theta, mdp, policy, grid, d_weights,
                                state_inputs, cramer_weighted);
  ws.require_solvable();
  const int n = ws.n_states;
  const int m = ws.num_atoms;

  const Vector resid = ws.g - ws.f;  // expected per-row TD-style residual
  const Vector b = ws.phi.transpose() * ws.row_weights.cwiseProduct(resid);
  Vector w = ws.solver.solve(b);
  // One refinement pass keeps the two rearranged gradient forms in exact
  // agreement even on poorly scaled instances.
  w += ws.solver.solve(b - ws.a_mat * w);
  const Vector u = ws.phi * w;  // phi^T w per row

  // B w with B = E sum_j phi(s', k_j) phi(s, z_j)^T, accumulated through the
  // projected indices instead of materializing B.
  const IndexMatrix idx = backup_index_table(mdp, grid);
  Vector v = Vector::Zero(static_cast<long>(n) * m);
  for (int s = 0; s < n; ++s) {
    const Real ws_weight = ws.row_weights[static_cast<long>(s) * m];
    if (ws_weight == 0) continue;
    for (int a = 0; a < mdp.n_actions; ++a) {
      const Real pa = policy.probs(s, a);
      if (pa == 0) continue;
      const int sa = mdp.sa_index(s, a);
      for (int sn = 0; sn < n; ++sn) {
        const Real rho = ws_weight * pa * mdp.P(sa, sn);
        if (rho == 0) continue;
        for (int j = 0; j < m; ++j)
          v[static_cast<long>(sn) * m + idx(sa, j)] +=
              rho * u[static_cast<long>(s) * m + j];
      }
    }
  }
  const Vector bw = ws.phi.transpose() * v;
  const Vector aw = ws.phi.transpose() * ws.row_weights.cwiseProduct(u);

  // Hessian correction: sum over states of the weighted per-atom residual
  // pushed through the model curvature.
  Vector h = Vector::Zero(theta.size());
  for (int s = 0; s < n; ++s) {
    const Real weight = ws.row_weights[static_cast<long>(s) * m];
    if (weight == 0) continue;
    const Vector q = resid.segment(static_cast<long>(s) * m, m) -
                     u.segment(static_cast<long>(s) * m, m);
    h += weight * model.hvp_weighted(theta, state_inputs[s], q, w);
  }

  DmspbeGradientParts out;
  out.forms.feature_difference_form = aw - bw - h;
  out.forms.td_error_form = b - bw - h;
  out.report.j = b.dot(w);
  out.report.grad = -2.0 * out.forms.feature_difference_form;
  out.report.w_star = w;
  out.report.h_term = h;
  return out;
}

}  // namespace detail

template <class Model>
GradientReport grad_dmspbe(
    const Model& model, const VectorRef& theta, const TabularMDP& mdp,
    const Policy& policy, const SupportGrid& grid, const VectorRef& d_weights,
    const std::vector<typename Model::Input>& state_inputs,
    bool cramer_weighted = false) {
  detail::DmspbeGradientParts parts = detail::dmspbe_gradient_parts(
      model, theta, mdp, policy, grid, d_weights, state_inputs,
      cramer_weighted);
  const Real gap = (parts.forms.feature_difference_form -
                    parts.forms.td_error_form)
                       .lpNorm<Eigen::Infinity>();
  if (!(gap <= 1e-10))
    throw std::runtime_error(
        "grad_dmspbe: rearranged gradient forms disagree beyond 1e-10");
  if (!parts.report.grad.allFinite() || !parts.report.w_star.allFinite() ||
      !parts.report.h_term.allFinite() || !std::isfinite(parts.report.j))
    throw std::runtime_error("grad_dmspbe: non-finite result");
  return parts.report;
}

template <class Model>
GradientReport grad_dmspbe(
    const Model& model, const VectorRef& theta, const TabularMDP& mdp,
    const Policy& policy, const SupportGrid& grid,
    const std::vector<typename Model::Input>& state_inputs,
    bool cramer_weighted = false) {
  const Vector d = stationary_distribution(mdp, policy);
  return grad_dmspbe(model, theta, mdp, policy, grid, d, state_inputs,
                     cramer_weighted);
}

template <class Model>
GradientForms grad_dmspbe_forms(
    const Model& model, const VectorRef& theta, const TabularMDP& mdp,
    const Policy& policy, const SupportGrid& grid, const VectorRef& d_weights,
    const std::vector<typename Model::Input>& state_inputs,
    bool cramer_weighted = false) {
  return detail::dmspbe_gradient_parts(model, theta, mdp, policy, grid,
                                       d_weights, state_inputs,
                                       cramer_weighted)
      .forms;
}

// Scalar MSPBE for the linear baselines, with the conventional 1/2 factor:
// (1/2) E[delta phi]^T E[phi phi^T]^{-1} E[delta phi], expectations exact.
inline Real mspbe(const LinearValueModel& model, const VectorRef& theta,
                  const TabularMDP& mdp, const Policy& policy,
                  const VectorRef& d_weights) {
  check_policy_shape(mdp, policy);
  check_state_weights(mdp, d_weights);
  if (model.num_inputs() != mdp.n_states)
    throw std::invalid_argument("mspbe: one feature row per state required");
  if (theta.size() != model.param_dim())
    throw std::invalid_argument("mspbe: theta size mismatch");

  const int n = mdp.n_states;
  const int k = model.param_dim();
  Vector values(n);
  for (int s = 0; s < n; ++s) values[s] = model.value(theta, s);
  const Vector tv = policy_expected_reward(mdp, policy) +
                    mdp.gamma * policy_transition_matrix(mdp, policy) * values;

  Matrix cov = Matrix::Zero(k, k);
  Vector b = Vector::Zero(k);
  for (int s = 0; s < n; ++s) {
    const Real ds = std::max(d_weights[s], Real(0));
    if (ds == 0) continue;
    const Vector phi = model.features().row(s).transpose();
    cov.noalias() += ds * phi * phi.transpose();
    b += ds * (tv[s] - values[s]) * phi;
  }
  const PsdSolver solver = PsdSolver::build(cov);
  if (solver.singular)
    throw std::runtime_error("mspbe: feature covariance flagged singular");
  return 0.5 * b.dot(solver.solve(b));
}

inline Real mspbe(const LinearValueModel& model, const VectorRef& theta,
                  const TabularMDP& mdp, const Policy& policy) {
  const Vector d = stationary_distribution(mdp, policy);
  return mspbe(model, theta, mdp, policy, d);
}

// Diagnostic only: the d-weighted squared Cramer distance between a table
// and its one-step grid backup. Zero exactly at the grid fixed point.
inline Real cramer_bellman_error(const ValueDistributionTable& z,
                                 const TabularMDP& mdp, const Policy& policy,
                                 const VectorRef& d_weights) {
  check_policy_shape(mdp, policy);
  check_state_weights(mdp, d_weights);
  if (z.probs.rows() != mdp.n_states)
    throw std::invalid_argument(
        "cramer_bellman_error: one table row per state required");
  const ValueDistributionTable backed =
      bellman_backup_grid(z, mdp, policy, BackupMode::state_value);
  Real acc = 0;
  for (int s = 0; s < mdp.n_states; ++s)
    acc += std::max(d_weights[s], Real(0)) *
           cramer_sq_kernel(z.grid.delta_z(), z.probs.row(s),
                            backed.probs.row(s));
  return acc;
}

inline Real cramer_bellman_error(const ValueDistributionTable& z,
                                 const TabularMDP& mdp, const Policy& policy) {
  const Vector d = stationary_distribution(mdp, policy);
  return cramer_bellman_error(z, mdp, policy, d);
}

// Fast repeated D-MSPBE evaluation for a fixed linear CDF model: the
// residual map theta -> Phi^T D (F - G) is a constant matrix K, so each
// evaluation costs two dense matrix-vector products.
class LinearDmspbeEvaluator {
 public:
  LinearDmspbeEvaluator(const LinearCdfModel& model, const TabularMDP& mdp,
                        const Policy& policy, const SupportGrid& grid,
                        const VectorRef& d_weights,
                        bool cramer_weighted = false) {
    check_policy_shape(mdp, policy);
    check_state_weights(mdp, d_weights);
    if (model.num_atoms() != grid.size())
      throw std::invalid_argument("evaluator: grid size does not match model");
    if (model.num_inputs() != mdp.n_states)
      throw std::invalid_argument("evaluator: one model input per state");

    const int n = mdp.n_states;
    const int m = grid.size();
    const int d = model.param_dim();
    const Real weight_scale = cramer_weighted ? grid.delta_z() : 1.0;
    const Matrix& phi = model.features();

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
          .setConstant(std::max(d_weights[s], Real(0)) * weight_scale);

    k_.noalias() =
        phi.transpose() * row_weights.asDiagonal() * (phi - backed);
    Matrix a_mat = phi.transpose() * row_weights.asDiagonal() * phi;
    a_mat = ((a_mat + a_mat.transpose()) * 0.5).eval();
    solver_ = PsdSolver::build(a_mat);
    if (solver_.singular)
      throw std::runtime_error(
          "evaluator: second-moment matrix flagged singular");
  }

  Real value(const VectorRef& theta) const {
    const Vector c = k_ * theta;
    return c.dot(solver_.solve(c));
  }

  Real cond() const { return solver_.cond; }

 private:
  Matrix k_;
  PsdSolver solver_;
};

}  // namespace dgtd
