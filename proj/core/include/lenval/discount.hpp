#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lenval {

// Discount factor gamma in (0, 1), validated once at construction.
// Every emitting step pays reward -(1 - gamma); the terminal step pays 0.
class DiscountSpec {
 public:
  explicit DiscountSpec(double gamma);

  double gamma() const noexcept { return gamma_; }
  double log_gamma() const noexcept { return log_gamma_; }

 private:
  double gamma_;
  double log_gamma_;
};

// gamma chosen so that 1 - gamma^l99 = 0.99, i.e. gamma = 0.01^(1/l99).
// A trajectory at the 99th length percentile then realizes 99% of the
// maximum cost magnitude.
DiscountSpec select_gamma(std::int64_t l99);

double per_step_reward(const DiscountSpec& spec, bool terminal) noexcept;

// Discounted return for `remaining` further emissions: -(1 - gamma^remaining).
// Lies in (-1, 0] and increases toward 0 as remaining shrinks.
double return_target(const DiscountSpec& spec, std::int64_t remaining);

// Inverse of return_target on reals: l = ln(1 + g) / ln(gamma).
// Requires -1 < g <= 0.
double invert_to_length(const DiscountSpec& spec, double g);

// One sampled generation. `length` counts every emission including the final
// EOS, so a completed trajectory has L >= 1 always. tokens holds the L emitted
// token ids (EOS last when complete); states holds the L+1 visited generator
// states, states[0] the prompt start and states[L] the absorbing terminal.
// A truncated rollout stops after `length` emissions with no EOS and a
// non-terminal final state; it must not be used for target construction.
struct Trajectory {
  std::string prompt_id;
  std::uint64_t seed = 0;
  std::vector<int> tokens;
  std::vector<int> states;
  int length = 0;
  bool truncated = false;
};

// Shape checks only (sizes, flags); terminality of states is a generator
// property and is checked by the sampler that produced the trajectory.
bool trajectory_well_formed(const Trajectory& traj) noexcept;

// Per-step discounted-return targets along one trajectory:
// values[t] = -(1 - gamma^(L-t)) for t = 0..L, so values[L] = 0 at the
// terminal state and every adjacent pair satisfies the Bellman identity
// values[t] = r + gamma * values[t+1] with r = -(1 - gamma).
struct ReturnSchedule {
  std::vector<double> values;
};

ReturnSchedule return_schedule(const DiscountSpec& spec, std::int64_t length);
ReturnSchedule schedule_for_trajectory(const DiscountSpec& spec, const Trajectory& traj);

}  // namespace lenval
