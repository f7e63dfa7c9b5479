#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "lenval/discount.hpp"
#include "lenval/markov.hpp"

namespace lenval {

struct TdRecord {
  int step = 0;
  int token = 0;
  double residual = 0.0;
};

struct TokenExceedances {
  std::int64_t positive = 0;
  std::int64_t negative = 0;
};

struct LengthTokenStats {
  double threshold = 0.01;
  std::map<int, TokenExceedances> per_token;
  std::int64_t total() const;
};

// One-step TD residual -(1 - gamma) + gamma * v_cur - v_prev; zero along any
// Bellman-consistent schedule.
double td_residual(double v_prev, double v_cur, const DiscountSpec& spec);

// Residuals along one trajectory; `values` holds predictions for states
// 0..L-1 and the terminal value is pinned at 0.
std::vector<TdRecord> td_records(const Trajectory& traj, std::span<const double> values,
                                 const DiscountSpec& spec);

LengthTokenStats length_token_stats(std::span<const Trajectory> trajectories,
                                    const std::vector<std::vector<double>>& values,
                                    const DiscountSpec& spec, double threshold = 0.01);

// F_t = gamma * phi[t+1] - phi[t] for each step of the potential trace.
std::vector<double> shaping_rewards(std::span<const double> potentials, const DiscountSpec& spec);

struct TelescopingCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
};

// lhs = sum_t gamma^t F_t; rhs = -phi[0] + gamma^(T+1) phi[T+1].
TelescopingCheck telescoping_check(std::span<const double> potentials, const DiscountSpec& spec);

double combined_advantage(double a_task, double a_len, double coefficient);

// f(z, k) = sigma(z) |z| / (k * softplus(z)); local relative length
// resolution at logit z under effective precision level k.
double precision_proxy(double z, double k);

// z(l) = ln((1 - gamma^l) / gamma^l), so sigma(-z(l)) = gamma^l.
double logit_for_horizon(const DiscountSpec& spec, double l);

inline constexpr double kPrecisionBf16 = 128.0;
inline constexpr double kPrecisionFp16 = 1024.0;
inline constexpr double kPrecisionFp32 = 8388608.0;
std::vector<double> default_precision_levels();

struct PrecisionPoint {
  double k = 0.0;
  double z = 0.0;
  double l = 0.0;
  double f = 0.0;
};

std::vector<PrecisionPoint> precision_curve(const DiscountSpec& spec,
                                            std::span<const double> k_values,
                                            std::span<const double> horizons);

struct WeightingTargets {
  double token_avg = 0.0;
  double traj_avg = 0.0;
};

// Token-averaged regression pulls the fit toward the plain mixture of
// returns; trajectory-averaged regression reweights each length by 1/L.
WeightingTargets weighting_bias_demo(std::span<const std::pair<int, double>> length_distribution,
                                     const DiscountSpec& spec);

}  // namespace lenval
