#pragma once

#include <cstdint>
#include <optional>

#include "dgtd/mdp.hpp"
#include "dgtd/rng.hpp"
#include "dgtd/types.hpp"

namespace dgtd {

enum class StreamMode { trajectory, iid };

struct StreamOptions {
  StreamMode mode = StreamMode::iid;
  // Trajectory mode: steps discarded before the first emitted transition.
  int burn_in = 1000;
  // Evaluation mode also draws a_next at s_next.
  bool evaluation = false;
  // Transitions (a, r, s') are drawn under this policy when set; the state
  // process itself always follows the behavior policy. Leaving it empty
  // couples the chain to the emitted transitions (on-policy trajectories).
  std::optional<Policy> target;
  Real teleport = 1e-6;
};

// Generator of transitions. The behavior policy fixes the state marginal:
// trajectory mode follows the behavior chain (teleport-mixed, so absorbing
// chains never stall), iid mode draws each state fresh from the behavior
// chain's stationary distribution. This makes the iid stream match exact
// enumeration against that stationary weighting.
class TransitionStream {
 public:
  TransitionStream(const TabularMDP& mdp, Policy behavior, StreamOptions opts,
                   std::uint64_t master_seed, std::uint64_t seed_index);

  Transition next();

  const Vector& state_weights() const { return d_; }

 private:
  int advance_chain(int s);

  const TabularMDP& mdp_;
  Policy behavior_;
  StreamOptions opts_;
  SplitMix64 rng_;
  Vector d_;  // stationary distribution of the behavior chain
  int chain_state_ = 0;
};

TransitionStream sample_stream(const TabularMDP& mdp, const Policy& behavior,
                               StreamMode mode, std::uint64_t master_seed,
                               std::uint64_t seed_index = 0);

}  // namespace dgtd
