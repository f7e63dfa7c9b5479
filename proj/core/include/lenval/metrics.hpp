#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lenval/decode.hpp"
#include "lenval/discount.hpp"
#include "lenval/markov.hpp"
#include "lenval/value_net.hpp"

namespace lenval {

enum class ConstraintKind { EqualTo, AtMost, AtLeast };

std::string constraint_name(ConstraintKind kind);

struct MetricReport {
  double ld = 0.0;
  double ls = 0.0;
  double mre = 0.0;
  double jensen_gap = 0.0;
};

struct FrontierPoint {
  std::string method;  // "tilt" or "hard_budget"
  double beta = 0.0;   // tilt rows
  int budget = 0;      // hard_budget rows
  double pass_rate = 0.0;
  double avg_truncated_length = 0.0;
};

// (observed - target) / target; positive means over-generation.
double length_deviation(std::int64_t observed, std::int64_t target);

// Piecewise exponential score in [0, 100] with k1 = 5 (under-generation) and
// k2 = 2 (over-generation); one-sided kinds leave the compliant side at 100.
double length_score(double ld, ConstraintKind kind);

// L_GT = ln(1 - mean(1 - gamma^L_i)) / ln gamma.
double ground_truth_horizon(std::span<const int> lengths, const DiscountSpec& spec);

double mre(std::span<const double> predicted, std::span<const double> ground_truth);

// mean(L) - L_GT; nonnegative by Jensen's inequality.
double jensen_gap(std::span<const int> lengths, const DiscountSpec& spec);

double predict_boundary_length(const ValueFn& value, const MarkovGenerator& gen,
                               const std::string& prompt_id, const DiscountSpec& spec);
double predict_boundary_length(const ValueHead& head, const FeatureMap& features,
                               const MarkovGenerator& gen, const std::string& prompt_id,
                               const DiscountSpec& spec);

// One tilt point per beta (controlled decode rollouts; pass = absorbed in a
// success state) and one hard-budget point per B (a single shared set of base
// rollouts, truncated at B; truncation fails). Budgets must not exceed
// max_len so the shared sample is truly truncated per budget.
std::vector<FrontierPoint> frontier_sweep(const MarkovGenerator& gen, const ValueFn& value,
                                          const DiscountSpec& spec, const std::string& prompt_id,
                                          std::span<const double> betas,
                                          std::span<const int> budgets, int rollouts,
                                          std::uint64_t seed, int max_len,
                                          const TruncationConfig& trunc);

}  // namespace lenval
