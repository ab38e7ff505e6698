#include "dgtd/support_grid.hpp"

#include <cmath>
#include <stdexcept>

namespace dgtd {

SupportGrid::SupportGrid(Real v_min, Real v_max, int m)
    : v_min_(v_min), v_max_(v_max), m_(m) {
  if (!(v_min < v_max))
    throw std::invalid_argument("SupportGrid: v_min must be below v_max");
  if (m < 2) throw std::invalid_argument("SupportGrid: need at least 2 atoms");
  if (!std::isfinite(v_min) || !std::isfinite(v_max))
    throw std::invalid_argument("SupportGrid: bounds must be finite");
}

Vector SupportGrid::atoms() const {
  Vector z(m_);
  for (int j = 0; j < m_; ++j) z[j] = atom(j);
  return z;
}

int SupportGrid::project_index(Real x) const {
  Real u = (x - v_min_) / delta_z();
  // floor(u + 1/2) is round-half-up, so ties go to the larger index.
  Real r = std::floor(u + 0.5);
  if (r < 0) return 0;
  if (r > m_ - 1) return m_ - 1;
  return static_cast<int>(r);
}

}  // namespace dgtd
