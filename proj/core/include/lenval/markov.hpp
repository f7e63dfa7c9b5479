#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lenval/discount.hpp"

namespace lenval {

// Finite-state emission process used as a ground-truth generation world.
// Each non-terminal state emits one token per step from its emission row and
// moves to transition[state][token]. Emitting EOS always lands in an absorbing
// terminal state; terminal states emit nothing. Remaining length from a state
// is therefore the number of emissions until absorption, EOS included.
struct MarkovGenerator {
  int num_states = 0;
  int vocab_size = 0;
  int eos_token = -1;

  // emission[s][x]: probability that state s emits token x (all-zero row for
  // terminal states). transition[s][x]: successor state, -1 where emission is 0.
  std::vector<std::vector<double>> emission;
  std::vector<std::vector<int>> transition;
  std::vector<std::uint8_t> terminal;
  std::vector<std::uint8_t> success;

  // Ordered so that every per-prompt iteration is deterministic.
  std::map<std::string, int> prompts;

  bool is_terminal(int state) const { return terminal[static_cast<std::size_t>(state)] != 0; }
  bool is_success(int state) const { return success[static_cast<std::size_t>(state)] != 0; }

  // Structural invariants: stochastic emission rows, transitions present for
  // every positive-probability pair, EOS (and only EOS) reaches terminals,
  // every non-terminal state can reach a terminal. Throws std::invalid_argument.
  void validate() const;
};

// Text format with [states], [emission], [transition], [terminals], [success]
// and [prompts] sections; see the shipped world files. Errors carry the
// offending line number.
MarkovGenerator parse_world(std::string_view text, const std::string& name);
MarkovGenerator load_world(const std::filesystem::path& path);

// Copy of the emission row of a non-terminal state.
std::vector<double> next_distribution(const MarkovGenerator& gen, int state);

// Seeded ancestral sampling from the prompt's start state. Stops after the
// EOS emission (complete) or after max_len emissions without EOS (truncated).
Trajectory sample_rollout(const MarkovGenerator& gen, const std::string& prompt_id,
                          std::uint64_t seed, int max_len);

// Exact per-state quantities obtained by solving the absorbing-chain linear
// systems: phi(s) = gamma * sum_x emission(s,x) * phi(transition(s,x)) with
// phi = 1 at terminals, value = -(1 - phi), and the reward-free analogue for
// the probability of absorbing in a success state.
struct ValueOracle {
  std::vector<double> phi;
  std::vector<double> value;
  std::vector<double> success_prob;
};

ValueOracle exact_value(const MarkovGenerator& gen, const DiscountSpec& spec);

// Rollout corpus with per-trajectory return schedules. Truncated rollouts are
// dropped (and counted); they have no defined return targets.
struct Dataset {
  std::vector<Trajectory> trajectories;
  std::vector<ReturnSchedule> schedules;
  int truncated_dropped = 0;
};

// rollout i of prompt p uses seed = base_seed + global rollout index, prompts
// in sorted id order; identical inputs produce an identical dataset.
Dataset build_dataset(const MarkovGenerator& gen, const DiscountSpec& spec,
                      int rollouts_per_prompt, std::uint64_t base_seed, int max_len,
                      int threads = 1);

}  // namespace lenval
