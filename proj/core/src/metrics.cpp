#include "lenval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lenval {

std::string constraint_name(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::EqualTo: return "equal_to";
    case ConstraintKind::AtMost: return "at_most";
    case ConstraintKind::AtLeast: return "at_least";
  }
  throw std::invalid_argument("unknown constraint kind");
}

double length_deviation(std::int64_t observed, std::int64_t target) {
  if (target < 1) throw std::invalid_argument("length_deviation: target must be >= 1");
  return static_cast<double>(observed - target) / static_cast<double>(target);
}

double length_score(double ld, ConstraintKind kind) {
  constexpr double k1 = 5.0;  // under-generation decay
  constexpr double k2 = 2.0;  // over-generation decay
  const bool penalize_under = kind != ConstraintKind::AtMost;
  const bool penalize_over = kind != ConstraintKind::AtLeast;
  if (ld < 0.0 && penalize_under) return 100.0 * std::exp(k1 * ld);
  if (ld > 0.0 && penalize_over) return 100.0 * std::exp(-k2 * ld);
  return 100.0;
}

double ground_truth_horizon(std::span<const int> lengths, const DiscountSpec& spec) {
  if (lengths.empty()) throw std::invalid_argument("ground_truth_horizon: empty length list");
  double mean_u = 0.0;
  for (int length : lengths) {
    if (length < 1) throw std::invalid_argument("ground_truth_horizon: lengths must be >= 1");
    // u = 1 - gamma^L, accumulated as -expm1(L ln gamma) to keep precision.
    mean_u += -std::expm1(static_cast<double>(length) * spec.log_gamma());
  }
  mean_u /= static_cast<double>(lengths.size());
  return std::log1p(-mean_u) / spec.log_gamma();
}

double mre(std::span<const double> predicted, std::span<const double> ground_truth) {
  if (predicted.size() != ground_truth.size()) {
    throw std::invalid_argument("mre: prediction/ground-truth lists differ in length");
  }
  if (predicted.empty()) throw std::invalid_argument("mre: empty lists");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!(ground_truth[i] > 0.0)) throw std::invalid_argument("mre: ground truth must be > 0");
    sum += std::fabs(predicted[i] - ground_truth[i]) / ground_truth[i];
  }
  return sum / static_cast<double>(predicted.size());
}

double jensen_gap(std::span<const int> lengths, const DiscountSpec& spec) {
  if (lengths.empty()) throw std::invalid_argument("jensen_gap: empty length list");
  double mean = 0.0;
  for (int length : lengths) mean += static_cast<double>(length);
  mean /= static_cast<double>(lengths.size());
  return mean - ground_truth_horizon(lengths, spec);
}

double predict_boundary_length(const ValueFn& value, const MarkovGenerator& gen,
                               const std::string& prompt_id, const DiscountSpec& spec) {
  const auto prompt = gen.prompts.find(prompt_id);
  if (prompt == gen.prompts.end()) {
    throw std::invalid_argument("predict_boundary_length: unknown prompt '" + prompt_id + "'");
  }
  return invert_to_length(spec, value(prompt->second));
}

double predict_boundary_length(const ValueHead& head, const FeatureMap& features,
                               const MarkovGenerator& gen, const std::string& prompt_id,
                               const DiscountSpec& spec) {
  return predict_boundary_length(head_value_fn(head, features), gen, prompt_id, spec);
}

std::vector<FrontierPoint> frontier_sweep(const MarkovGenerator& gen, const ValueFn& value,
                                          const DiscountSpec& spec, const std::string& prompt_id,
                                          std::span<const double> betas,
                                          std::span<const int> budgets, int rollouts,
                                          std::uint64_t seed, int max_len,
                                          const TruncationConfig& trunc) {
  if (rollouts < 1) throw std::invalid_argument("frontier_sweep: rollouts must be >= 1");
  for (int budget : budgets) {
    if (budget < 1 || budget > max_len) {
      throw std::invalid_argument("frontier_sweep: budgets must lie in [1, max_len]");
    }
  }

  std::vector<FrontierPoint> points;
  points.reserve(betas.size() + budgets.size());

  // One shared base sample; truncating it per budget makes pass_rate exactly
  // non-decreasing in B.
  if (!budgets.empty()) {
    std::vector<Trajectory> base;
    base.reserve(static_cast<std::size_t>(rollouts));
    for (int i = 0; i < rollouts; ++i) {
      base.push_back(sample_rollout(gen, prompt_id, seed + static_cast<std::uint64_t>(i), max_len));
    }
    for (int budget : budgets) {
      FrontierPoint point;
      point.method = "hard_budget";
      point.budget = budget;
      double passes = 0.0;
      double length_sum = 0.0;
      for (const auto& traj : base) {
        const bool within = !traj.truncated && traj.length <= budget;
        const bool success = within && gen.is_success(traj.states.back());
        passes += success ? 1.0 : 0.0;
        length_sum += static_cast<double>(std::min(traj.length, budget));
      }
      point.pass_rate = passes / static_cast<double>(rollouts);
      point.avg_truncated_length = length_sum / static_cast<double>(rollouts);
      points.push_back(point);
    }
  }

  for (std::size_t j = 0; j < betas.size(); ++j) {
    ControlRule rule;
    rule.kind = RuleKind::Tilt;
    rule.beta = betas[j];
    FrontierPoint point;
    point.method = "tilt";
    point.beta = betas[j];
    double passes = 0.0;
    double length_sum = 0.0;
    const std::uint64_t block = seed + static_cast<std::uint64_t>(j + 1) * static_cast<std::uint64_t>(rollouts);
    for (int i = 0; i < rollouts; ++i) {
      const DecodeResult run = run_controlled_decode(gen, value, rule, spec, prompt_id,
                                                     block + static_cast<std::uint64_t>(i),
                                                     max_len, trunc);
      const Trajectory& traj = run.trajectory;
      const bool success = !traj.truncated && gen.is_success(traj.states.back());
      passes += success ? 1.0 : 0.0;
      length_sum += static_cast<double>(traj.length);
    }
    point.pass_rate = passes / static_cast<double>(rollouts);
    point.avg_truncated_length = length_sum / static_cast<double>(rollouts);
    points.push_back(point);
  }

  std::stable_sort(points.begin(), points.end(), [](const FrontierPoint& a, const FrontierPoint& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.method == "hard_budget") return a.budget < b.budget;
    return a.beta < b.beta;
  });
  return points;
}

}  // namespace lenval
