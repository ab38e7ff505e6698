#include "dgtd/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dgtd {

namespace {

void check_probability_row(const VectorRef& p, const char* what) {
  Real sum = 0;
  for (int j = 0; j < p.size(); ++j) {
    if (!(p[j] >= -1e-12))
      throw std::invalid_argument(std::string(what) + ": negative mass");
    sum += p[j];
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument(std::string(what) + ": masses must sum to 1");
}

}  // namespace

AtomDistribution::AtomDistribution(SupportGrid grid_, Vector probs_)
    : grid(grid_), probs(std::move(probs_)) {
  if (probs.size() != grid.size())
    throw std::invalid_argument("AtomDistribution: wrong number of masses");
  check_probability_row(probs, "AtomDistribution");
}

Vector AtomDistribution::cdf() const {
  Vector f(probs.size());
  Real acc = 0;
  for (int j = 0; j < probs.size(); ++j) {
    acc += probs[j];
    f[j] = acc;
  }
  return f;
}

ValueDistributionTable::ValueDistributionTable(SupportGrid grid_, Matrix probs_)
    : grid(grid_), probs(std::move(probs_)) {
  if (probs.cols() != grid.size())
    throw std::invalid_argument("ValueDistributionTable: column count != m");
  if (probs.rows() < 1)
    throw std::invalid_argument("ValueDistributionTable: no rows");
  for (int i = 0; i < probs.rows(); ++i)
    check_probability_row(probs.row(i).transpose(), "ValueDistributionTable");
}

ValueDistributionTable ValueDistributionTable::point_mass(SupportGrid grid,
                                                          int rows,
                                                          int atom_index) {
  if (atom_index < 0 || atom_index >= grid.size())
    throw std::invalid_argument("point_mass: atom index out of range");
  Matrix p = Matrix::Zero(rows, grid.size());
  p.col(atom_index).setOnes();
  return ValueDistributionTable(grid, std::move(p));
}

FiniteSupportDistribution::FiniteSupportDistribution(Vector values_,
                                                     Vector masses_) {
  if (values_.size() != masses_.size() || values_.size() == 0)
    throw std::invalid_argument("FiniteSupportDistribution: bad point list");
  const int n = static_cast<int>(values_.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return values_[a] < values_[b]; });
  std::vector<Real> vals, mass;
  vals.reserve(n);
  mass.reserve(n);
  Real sum = 0;
  for (int idx : order) {
    const Real v = values_[idx];
    Real m = masses_[idx];
    if (!(m >= -1e-12))
      throw std::invalid_argument("FiniteSupportDistribution: negative mass");
    if (m < 0) m = 0;
    sum += m;
    if (!vals.empty() && v - vals.back() <= 1e-12) {
      mass.back() += m;
    } else {
      vals.push_back(v);
      mass.push_back(m);
    }
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument(
        "FiniteSupportDistribution: masses must sum to 1");
  values = Eigen::Map<Vector>(vals.data(), static_cast<long>(vals.size()));
  masses = Eigen::Map<Vector>(mass.data(), static_cast<long>(mass.size()));
}

Real FiniteSupportDistribution::cdf_at(Real x) const {
  Real acc = 0;
  for (int i = 0; i < values.size() && values[i] <= x; ++i) acc += masses[i];
  return acc;
}

FiniteSupportDistribution FiniteSupportDistribution::shifted(
    Real offset) const {
  return FiniteSupportDistribution(values.array() + offset, masses);
}

FiniteSupportDistribution FiniteSupportDistribution::scaled(Real c) const {
  if (c < 0)
    throw std::invalid_argument("FiniteSupportDistribution: negative scale");
  if (c == 0) {
    Vector v(1), m(1);
    v[0] = 0;
    m[0] = 1;
    return FiniteSupportDistribution(std::move(v), std::move(m));
  }
  return FiniteSupportDistribution(values * c, masses);
}

FiniteSupportDistribution to_finite_support(const AtomDistribution& p) {
  std::vector<Real> vals, mass;
  for (int j = 0; j < p.probs.size(); ++j) {
    if (p.probs[j] > 0) {
      vals.push_back(p.grid.atom(j));
      mass.push_back(p.probs[j]);
    }
  }
  if (vals.empty()) {
    vals.push_back(p.grid.v_min());
    mass.push_back(0);
  }
  return FiniteSupportDistribution(
      Eigen::Map<Vector>(vals.data(), static_cast<long>(vals.size())),
      Eigen::Map<Vector>(mass.data(), static_cast<long>(mass.size())));
}

FiniteSupportDistribution mix_finite_support(
    const std::vector<FiniteSupportDistribution>& parts,
    const Vector& weights) {
  if (parts.empty() || weights.size() != static_cast<long>(parts.size()))
    throw std::invalid_argument("mix_finite_support: shape mismatch");
  std::vector<Real> vals, mass;
  for (size_t i = 0; i < parts.size(); ++i) {
    const Real w = weights[static_cast<long>(i)];
    if (!(w >= -1e-12))
      throw std::invalid_argument("mix_finite_support: negative weight");
    if (w <= 0) continue;
    for (int j = 0; j < parts[i].values.size(); ++j) {
      vals.push_back(parts[i].values[j]);
      mass.push_back(w * parts[i].masses[j]);
    }
  }
  return FiniteSupportDistribution(
      Eigen::Map<Vector>(vals.data(), static_cast<long>(vals.size())),
      Eigen::Map<Vector>(mass.data(), static_cast<long>(mass.size())));
}

Real cramer_sq(const AtomDistribution& p, const AtomDistribution& q) {
  if (p.grid != q.grid)
    throw std::invalid_argument("cramer_sq: grids do not match");
  return cramer_sq_kernel(p.grid.delta_z(), p.probs, q.probs);
}

Real cramer(const AtomDistribution& p, const AtomDistribution& q) {
  return std::sqrt(cramer_sq(p, q));
}

Real cramer_sq_exact(const FiniteSupportDistribution& p,
                     const FiniteSupportDistribution& q) {
  int i = 0, j = 0;
  Real fp = 0, fq = 0, acc = 0;
  Real x_prev = 0;
  bool started = false;
  while (i < p.values.size() || j < q.values.size()) {
    Real x;
    if (j >= q.values.size() ||
        (i < p.values.size() && p.values[i] <= q.values[j]))
      x = p.values[i];
    else
      x = q.values[j];
    if (started) {
      const Real d = fp - fq;
      acc += d * d * (x - x_prev);
    }
    while (i < p.values.size() && p.values[i] <= x) fp += p.masses[i++];
    while (j < q.values.size() && q.values[j] <= x) fq += q.masses[j++];
    x_prev = x;
    started = true;
  }
  return acc;
}

namespace {

Real max_cramer_impl(const ValueDistributionTable& p,
                     const ValueDistributionTable& q,
                     const std::vector<bool>* mask) {
  if (p.grid != q.grid)
    throw std::invalid_argument("max_cramer: grids do not match");
  if (p.rows() != q.rows())
    throw std::invalid_argument("max_cramer: row counts differ");
  if (mask && static_cast<int>(mask->size()) != p.rows())
    throw std::invalid_argument("max_cramer: mask length mismatch");
  Real worst = 0;
  for (int i = 0; i < p.rows(); ++i) {
    if (mask && !(*mask)[i]) continue;
    worst = std::max(worst, cramer_sq_kernel(p.grid.delta_z(), p.probs.row(i),
                                             q.probs.row(i)));
  }
  return std::sqrt(worst);
}

void check_backup_args(int z_rows, const TabularMDP& mdp, const Policy& policy,
                       BackupMode mode, Real gamma) {
  if (policy.n_states() != mdp.n_states ||
      policy.n_actions() != mdp.n_actions)
    throw std::invalid_argument("bellman backup: policy shape mismatch");
  const int want = mode == BackupMode::state_value
                       ? mdp.n_states
                       : mdp.n_states * mdp.n_actions;
  if (z_rows != want)
    throw std::invalid_argument("bellman backup: table row count mismatch");
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw std::invalid_argument("bellman backup: gamma must lie in [0, 1)");
}

}  // namespace

Real max_cramer(const ValueDistributionTable& p,
                const ValueDistributionTable& q) {
  return max_cramer_impl(p, q, nullptr);
}

Real max_cramer(const ValueDistributionTable& p,
                const ValueDistributionTable& q,
                const std::vector<bool>& mask) {
  return max_cramer_impl(p, q, &mask);
}

ValueDistributionTable bellman_backup_grid(const ValueDistributionTable& z,
                                           const TabularMDP& mdp,
                                           const Policy& policy,
                                           BackupMode mode,
                                           std::optional<Real> gamma_override) {
  const Real gamma = gamma_override.value_or(mdp.gamma);
  check_backup_args(z.rows(), mdp, policy, mode, gamma);
  const SupportGrid& grid = z.grid;
  const int m = grid.size();
  Matrix out = Matrix::Zero(z.rows(), m);

  // Pushes `weight` times row `src` of z, shifted by r and scaled by gamma,
  // into `dst`, projecting each displaced atom to its nearest grid index.
  auto scatter = [&](int dst, int src, Real r, Real weight) {
    if (weight <= 0) return;
    for (int k = 0; k < m; ++k) {
      const Real mass = z.probs(src, k);
      if (mass == 0) continue;
      const int idx = grid.project_index(r + gamma * grid.atom(k));
      out(dst, idx) += weight * mass;
    }
  };

  if (mode == BackupMode::state_value) {
    for (int s = 0; s < mdp.n_states; ++s)
      for (int a = 0; a < mdp.n_actions; ++a) {
        const Real pa = policy.probs(s, a);
        if (pa == 0) continue;
        for (int s2 = 0; s2 < mdp.n_states; ++s2)
          scatter(s, s2, mdp.R(s, a), pa * mdp.P(mdp.sa_index(s, a), s2));
      }
  } else {
    for (int s = 0; s < mdp.n_states; ++s)
      for (int a = 0; a < mdp.n_actions; ++a) {
        const int row = mdp.sa_index(s, a);
        for (int s2 = 0; s2 < mdp.n_states; ++s2) {
          const Real ps2 = mdp.P(row, s2);
          if (ps2 == 0) continue;
          for (int a2 = 0; a2 < mdp.n_actions; ++a2)
            scatter(row, mdp.sa_index(s2, a2), mdp.R(s, a),
                    ps2 * policy.probs(s2, a2));
        }
      }
  }
  return ValueDistributionTable(grid, std::move(out));
}

std::vector<FiniteSupportDistribution> bellman_backup_exact(
    const std::vector<FiniteSupportDistribution>& z, const TabularMDP& mdp,
    const Policy& policy, BackupMode mode,
    std::optional<Real> gamma_override) {
  const Real gamma = gamma_override.value_or(mdp.gamma);
  check_backup_args(static_cast<int>(z.size()), mdp, policy, mode, gamma);
  std::vector<FiniteSupportDistribution> out;
  out.reserve(z.size());

  if (mode == BackupMode::state_value) {
    for (int s = 0; s < mdp.n_states; ++s) {
      std::vector<FiniteSupportDistribution> parts;
      std::vector<Real> weights;
      for (int a = 0; a < mdp.n_actions; ++a) {
        const Real pa = policy.probs(s, a);
        if (pa == 0) continue;
        for (int s2 = 0; s2 < mdp.n_states; ++s2) {
          const Real w = pa * mdp.P(mdp.sa_index(s, a), s2);
          if (w == 0) continue;
          parts.push_back(z[s2].scaled(gamma).shifted(mdp.R(s, a)));
          weights.push_back(w);
        }
      }
      out.push_back(mix_finite_support(
          parts, Eigen::Map<Vector>(weights.data(),
                                    static_cast<long>(weights.size()))));
    }
  } else {
    for (int s = 0; s < mdp.n_states; ++s)
      for (int a = 0; a < mdp.n_actions; ++a) {
        std::vector<FiniteSupportDistribution> parts;
        std::vector<Real> weights;
        const int row = mdp.sa_index(s, a);
        for (int s2 = 0; s2 < mdp.n_states; ++s2) {
          const Real ps2 = mdp.P(row, s2);
          if (ps2 == 0) continue;
          for (int a2 = 0; a2 < mdp.n_actions; ++a2) {
            const Real w = ps2 * policy.probs(s2, a2);
            if (w == 0) continue;
            parts.push_back(
                z[mdp.sa_index(s2, a2)].scaled(gamma).shifted(mdp.R(s, a)));
            weights.push_back(w);
          }
        }
        out.push_back(mix_finite_support(
            parts, Eigen::Map<Vector>(weights.data(),
                                      static_cast<long>(weights.size()))));
      }
  }
  return out;
}

}  // namespace dgtd
