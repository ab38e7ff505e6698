#pragma once

#include "dgtd/types.hpp"

namespace dgtd {

// Evenly spaced atom locations z_j = v_min + j * delta_z, j = 0..m-1.
class SupportGrid {
 public:
  SupportGrid(Real v_min, Real v_max, int m);

  Real v_min() const { return v_min_; }
  Real v_max() const { return v_max_; }
  int size() const { return m_; }
  Real delta_z() const { return (v_max_ - v_min_) / (m_ - 1); }
  Real atom(int j) const { return v_min_ + j * delta_z(); }
  Vector atoms() const;

  // Index of the nearest atom, clamped to [0, m-1]. Half-way points round
  // toward the larger index.
  int project_index(Real x) const;

  bool operator==(const SupportGrid& other) const {
    return v_min_ == other.v_min_ && v_max_ == other.v_max_ && m_ == other.m_;
  }
  bool operator!=(const SupportGrid& other) const { return !(*this == other); }

 private:
  Real v_min_;
  Real v_max_;
  int m_;
};

}  // namespace dgtd
