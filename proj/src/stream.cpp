#include "dgtd/stream.hpp"

#include <stdexcept>

namespace dgtd {

TransitionStream::TransitionStream(const TabularMDP& mdp, Policy behavior,
                                   StreamOptions opts,
                                   std::uint64_t master_seed,
                                   std::uint64_t seed_index)
    : mdp_(mdp),
      behavior_(std::move(behavior)),
      opts_(std::move(opts)),
      rng_(rng_for_seed(master_seed, seed_index)),
      d_(stationary_distribution(mdp, behavior_, 1e-10, opts_.teleport)) {
  if (opts_.target && (opts_.target->n_states() != mdp.n_states ||
                       opts_.target->n_actions() != mdp.n_actions))
    throw std::invalid_argument("TransitionStream: target policy mismatch");
  if (opts_.mode == StreamMode::trajectory) {
    chain_state_ = sample_index(rng_, d_);
    for (int i = 0; i < opts_.burn_in; ++i)
      chain_state_ = advance_chain(chain_state_);
  }
}

int TransitionStream::advance_chain(int s) {
  if (uniform_real(rng_) < opts_.teleport)
    return uniform_int(rng_, mdp_.n_states);
  const int a = sample_index(rng_, behavior_.probs.row(s).transpose());
  return sample_index(rng_, mdp_.P.row(mdp_.sa_index(s, a)).transpose());
}

Transition TransitionStream::next() {
  Transition t;
  t.s = opts_.mode == StreamMode::iid ? sample_index(rng_, d_) : chain_state_;
  const Policy& tuple_policy = opts_.target ? *opts_.target : behavior_;
  t.a = sample_index(rng_, tuple_policy.probs.row(t.s).transpose());
  t.r = mdp_.R(t.s, t.a);
  t.s_next = sample_index(rng_, mdp_.P.row(mdp_.sa_index(t.s, t.a)).transpose());
  if (opts_.evaluation)
    t.a_next = sample_index(rng_, tuple_policy.probs.row(t.s_next).transpose());
  if (opts_.mode == StreamMode::trajectory) {
    if (!opts_.target && uniform_real(rng_) >= opts_.teleport) {
      // On-policy trajectories reuse the emitted next state.
      chain_state_ = t.s_next;
    } else if (!opts_.target) {
      chain_state_ = uniform_int(rng_, mdp_.n_states);
    } else {
      chain_state_ = advance_chain(chain_state_);
    }
  }
  return t;
}

TransitionStream sample_stream(const TabularMDP& mdp, const Policy& behavior,
                               StreamMode mode, std::uint64_t master_seed,
                               std::uint64_t seed_index) {
  StreamOptions opts;
  opts.mode = mode;
  return TransitionStream(mdp, behavior, std::move(opts), master_seed,
                          seed_index);
}

}  // namespace dgtd
