#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lenval/discount.hpp"
#include "lenval/markov.hpp"
#include "lenval/value_net.hpp"

namespace lenval {

// One surviving token after truncation. `value` is the predicted value of the
// successor state; successors that are terminal are pinned to 0 exactly, so it
// lies in (-1, 0] overall.
struct Candidate {
  int token = 0;
  double base_prob = 0.0;
  double value = 0.0;
};

struct CandidateSet {
  std::vector<Candidate> entries;
};

enum class RuleKind { EqualTo, AtMost, AtLeast, Tilt };

// EqualTo and AtLeast require target >= 1 (total emissions including EOS).
// AtMost uses target only for scoring, Tilt only beta (<= 0).
struct ControlRule {
  RuleKind kind = RuleKind::EqualTo;
  int target = 0;
  double beta = 0.0;
};

void validate_rule(const ControlRule& rule);
std::string rule_name(RuleKind kind);

// Sentinels disable a stage: top_k <= 0, top_p >= 1, min_p <= 0.
struct TruncationConfig {
  int top_k = 0;
  double top_p = 1.0;
  double min_p = 0.0;
};

// Truncation order: top-k on the raw distribution, then nucleus top-p over the
// renormalized survivors (the crossing token is kept), then min-p relative to
// the largest surviving probability; final probabilities renormalized to 1.
CandidateSet build_candidates(const MarkovGenerator& gen, const ValueFn& value, int state,
                              const TruncationConfig& trunc);
CandidateSet build_candidates(const MarkovGenerator& gen, const ValueHead& head,
                              const FeatureMap& features, int state,
                              const TruncationConfig& trunc);

// Desired value after emitting one more token; clamps to 0 once the target is
// reached so overshoot prefers immediate EOS.
double target_value_schedule(const DiscountSpec& spec, int total_target, int step);

// Hard selectors. Ties break toward higher base_prob, then lower token id, so
// the result is invariant to candidate order.
int select_equal_to(const CandidateSet& candidates, double v_star);
int select_at_least(const CandidateSet& candidates);
int select_at_most(const CandidateSet& candidates);

// p'(x) proportional to p(x) * exp(beta * v(x)), computed with a max-shift.
std::vector<double> tilt_distribution(const CandidateSet& candidates, double beta);

// E_q[v] - (1/beta) * KL(q || p) with 0 ln 0 = 0; requires beta < 0.
double kl_objective(std::span<const double> q, const CandidateSet& candidates, double beta);

struct DecodeResult {
  Trajectory trajectory;
  std::vector<double> chosen_values;  // one per emission
};

// Hard rules pick deterministically; Tilt samples from p' under the seed.
// While the next emission would still leave the trajectory short of an
// AtLeast target, EOS candidates are removed (falling back to the full set if
// nothing else survives).
DecodeResult run_controlled_decode(const MarkovGenerator& gen, const ValueFn& value,
                                   const ControlRule& rule, const DiscountSpec& spec,
                                   const std::string& prompt_id, std::uint64_t seed, int max_len,
                                   const TruncationConfig& trunc);
DecodeResult run_controlled_decode(const MarkovGenerator& gen, const ValueHead& head,
                                   const FeatureMap& features, const ControlRule& rule,
                                   const DiscountSpec& spec, const std::string& prompt_id,
                                   std::uint64_t seed, int max_len, const TruncationConfig& trunc);

}  // namespace lenval
