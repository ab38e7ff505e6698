#pragma once

#include <optional>
#include <vector>

#include "dgtd/mdp.hpp"
#include "dgtd/support_grid.hpp"
#include "dgtd/types.hpp"

namespace dgtd {

// Categorical distribution on a fixed atom grid.
struct AtomDistribution {
  SupportGrid grid;
  Vector probs;

  AtomDistribution(SupportGrid grid, Vector probs);

  Vector cdf() const;
  Real mean() const { return grid.atoms().dot(probs); }
};

// One grid distribution per row; rows index states (state_value mode) or
// state-action pairs laid out as s * n_actions + a (state_action mode).
struct ValueDistributionTable {
  SupportGrid grid;
  Matrix probs;  // rows x m

  ValueDistributionTable(SupportGrid grid, Matrix probs);

  static ValueDistributionTable point_mass(SupportGrid grid, int rows,
                                           int atom_index);

  int rows() const { return static_cast<int>(probs.rows()); }
  AtomDistribution row_distribution(int i) const {
    return AtomDistribution(grid, probs.row(i).transpose());
  }
};

// Distribution with arbitrary finite support: strictly increasing values,
// nonnegative masses summing to one. Construction sorts the points and
// merges values closer than 1e-12.
struct FiniteSupportDistribution {
  Vector values;
  Vector masses;

  FiniteSupportDistribution(Vector values, Vector masses);

  Real cdf_at(Real x) const;
  Real mean() const { return values.dot(masses); }

  FiniteSupportDistribution shifted(Real offset) const;
  // Scale by c >= 0; c = 0 collapses to a point mass at zero.
  FiniteSupportDistribution scaled(Real c) const;
};

FiniteSupportDistribution to_finite_support(const AtomDistribution& p);

FiniteSupportDistribution mix_finite_support(
    const std::vector<FiniteSupportDistribution>& parts,
    const Vector& weights);

// Squared Cramer distance between grid distributions sharing one grid:
// delta_z * sum_j (F_p(z_j) - F_q(z_j))^2. Exact for step CDFs on the grid;
// the j = m summand is always zero.
template <class D1, class D2>
Real cramer_sq_kernel(typename D1::Scalar delta_z,
                      const Eigen::MatrixBase<D1>& p,
                      const Eigen::MatrixBase<D2>& q) {
  using Scalar = typename D1::Scalar;
  Scalar fp = 0, fq = 0, acc = 0;
  for (int j = 0; j < p.size(); ++j) {
    fp += p[j];
    fq += q[j];
    const Scalar d = fp - fq;
    acc += d * d;
  }
  return delta_z * acc;
}

Real cramer_sq(const AtomDistribution& p, const AtomDistribution& q);
Real cramer(const AtomDistribution& p, const AtomDistribution& q);

// Exact squared Cramer distance between arbitrary finite-support
// distributions (piecewise-constant CDF difference integrated in closed
// form over the merged breakpoints).
Real cramer_sq_exact(const FiniteSupportDistribution& p,
                     const FiniteSupportDistribution& q);

// sup over rows of the (root) Cramer distance. The mask selects rows;
// omitted mask means all rows.
Real max_cramer(const ValueDistributionTable& p,
                const ValueDistributionTable& q);
Real max_cramer(const ValueDistributionTable& p,
                const ValueDistributionTable& q,
                const std::vector<bool>& mask);

enum class BackupMode { state_value, state_action };

// Distributional Bellman backup with nearest-atom projection: mass
// p(row', k) * weight lands on the grid index nearest to r + gamma * z_k.
// gamma_override admits the degenerate gamma = 0 backup; by default the
// MDP's discount is used.
ValueDistributionTable bellman_backup_grid(
    const ValueDistributionTable& z, const TabularMDP& mdp,
    const Policy& policy, BackupMode mode,
    std::optional<Real> gamma_override = std::nullopt);

// Same backup without any projection; supports grow as needed.
std::vector<FiniteSupportDistribution> bellman_backup_exact(
    const std::vector<FiniteSupportDistribution>& z, const TabularMDP& mdp,
    const Policy& policy, BackupMode mode,
    std::optional<Real> gamma_override = std::nullopt);

}  // namespace dgtd
