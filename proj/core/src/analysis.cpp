#include "lenval/analysis.hpp"

#include <cmath>
#include <stdexcept>

namespace lenval {

std::int64_t LengthTokenStats::total() const {
  std::int64_t sum = 0;
  for (const auto& [token, counts] : per_token) sum += counts.positive + counts.negative;
  return sum;
}

double td_residual(double v_prev, double v_cur, const DiscountSpec& spec) {
  return -(1.0 - spec.gamma()) + spec.gamma() * v_cur - v_prev;
}

std::vector<TdRecord> td_records(const Trajectory& traj, std::span<const double> values,
                                 const DiscountSpec& spec) {
  if (!trajectory_well_formed(traj)) throw std::invalid_argument("td_records: malformed trajectory");
  if (values.size() != static_cast<std::size_t>(traj.length)) {
    throw std::invalid_argument("td_records: values misaligned with trajectory");
  }
  std::vector<TdRecord> out;
  out.reserve(values.size());
  for (std::size_t t = 0; t < values.size(); ++t) {
    const double v_next = t + 1 < values.size() ? values[t + 1] : 0.0;
    out.push_back({static_cast<int>(t), traj.tokens[t], td_residual(values[t], v_next, spec)});
  }
  return out;
}

LengthTokenStats length_token_stats(std::span<const Trajectory> trajectories,
                                    const std::vector<std::vector<double>>& values,
                                    const DiscountSpec& spec, double threshold) {
  if (trajectories.size() != values.size()) {
    throw std::invalid_argument("length_token_stats: trajectory/value counts differ");
  }
  if (!(threshold >= 0.0)) throw std::invalid_argument("length_token_stats: threshold must be >= 0");
  LengthTokenStats stats;
  stats.threshold = threshold;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    for (const TdRecord& record : td_records(trajectories[i], values[i], spec)) {
      if (record.residual > threshold) {
        ++stats.per_token[record.token].positive;
      } else if (record.residual < -threshold) {
        ++stats.per_token[record.token].negative;
      }
    }
  }
  return stats;
}

std::vector<double> shaping_rewards(std::span<const double> potentials, const DiscountSpec& spec) {
  if (potentials.empty()) throw std::invalid_argument("shaping_rewards: empty potential trace");
  std::vector<double> out;
  out.reserve(potentials.size() - 1);
  for (std::size_t t = 0; t + 1 < potentials.size(); ++t) {
    out.push_back(spec.gamma() * potentials[t + 1] - potentials[t]);
  }
  return out;
}

TelescopingCheck telescoping_check(std::span<const double> potentials, const DiscountSpec& spec) {
  if (potentials.empty()) throw std::invalid_argument("telescoping_check: empty potential trace");
  TelescopingCheck check;
  double discount = 1.0;
  for (std::size_t t = 0; t + 1 < potentials.size(); ++t) {
    check.lhs += discount * (spec.gamma() * potentials[t + 1] - potentials[t]);
    discount *= spec.gamma();
  }
  check.rhs = -potentials.front() + discount * potentials.back();
  check.residual = check.lhs - check.rhs;
  return check;
}

double combined_advantage(double a_task, double a_len, double coefficient) {
  return a_task + coefficient * a_len;
}

namespace {

double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

}  // namespace

double precision_proxy(double z, double k) {
  if (!(k > 0.0)) throw std::invalid_argument("precision_proxy: k must be > 0");
  if (z == 0.0) return 0.0;
  const double sigma = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  // ln sigma(-z) = -softplus(z), so the denominator stays accurate for large z.
  return sigma * std::fabs(z) / (k * softplus(z));
}

double logit_for_horizon(const DiscountSpec& spec, double l) {
  if (!(l > 0.0)) throw std::invalid_argument("logit_for_horizon: horizon must be > 0");
  // ln(1 - gamma^l) - l ln gamma, with the first term via expm1 for small l ln gamma.
  const double exponent = l * spec.log_gamma();
  return std::log(-std::expm1(exponent)) - exponent;
}

std::vector<double> default_precision_levels() {
  return {kPrecisionBf16, kPrecisionFp16, kPrecisionFp32};
}

std::vector<PrecisionPoint> precision_curve(const DiscountSpec& spec,
                                            std::span<const double> k_values,
                                            std::span<const double> horizons) {
  std::vector<PrecisionPoint> out;
  out.reserve(k_values.size() * horizons.size());
  for (double k : k_values) {
    for (double l : horizons) {
      const double z = logit_for_horizon(spec, l);
      out.push_back({k, z, l, precision_proxy(z, k)});
    }
  }
  return out;
}

WeightingTargets weighting_bias_demo(std::span<const std::pair<int, double>> length_distribution,
                                     const DiscountSpec& spec) {
  if (length_distribution.empty()) {
    throw std::invalid_argument("weighting_bias_demo: empty distribution");
  }
  double total_prob = 0.0;
  double token_num = 0.0;
  double traj_num = 0.0;
  double traj_den = 0.0;
  for (const auto& [length, prob] : length_distribution) {
    if (length < 1) throw std::invalid_argument("weighting_bias_demo: lengths must be >= 1");
    if (!(prob >= 0.0)) throw std::invalid_argument("weighting_bias_demo: negative probability");
    total_prob += prob;
    const double g0 = return_target(spec, length);
    token_num += prob * g0;
    traj_num += prob * g0 / static_cast<double>(length);
    traj_den += prob / static_cast<double>(length);
  }
  if (std::fabs(total_prob - 1.0) > 1e-9) {
    throw std::invalid_argument("weighting_bias_demo: probabilities must sum to 1");
  }
  return {token_num, traj_num / traj_den};
}

}  // namespace lenval
