#include "lenval/discount.hpp"

#include <cmath>
#include <stdexcept>

namespace lenval {

DiscountSpec::DiscountSpec(double gamma) : gamma_(gamma) {
  if (!(gamma > 0.0) || !(gamma < 1.0)) {
    throw std::invalid_argument("DiscountSpec: gamma must lie strictly in (0, 1)");
  }
  log_gamma_ = std::log(gamma_);
}

DiscountSpec select_gamma(std::int64_t l99) {
  if (l99 < 1) {
    throw std::invalid_argument("select_gamma: l99 must be a positive integer");
  }
  return DiscountSpec(std::pow(0.01, 1.0 / static_cast<double>(l99)));
}

double per_step_reward(const DiscountSpec& spec, bool terminal) noexcept {
  return terminal ? 0.0 : -(1.0 - spec.gamma());
}

double return_target(const DiscountSpec& spec, std::int64_t remaining) {
  if (remaining < 0) {
    throw std::invalid_argument("return_target: remaining must be >= 0");
  }
  // -(1 - gamma^n) = expm1(n * ln gamma), exact at n = 0 and accurate near 0.
  return std::expm1(static_cast<double>(remaining) * spec.log_gamma());
}

double invert_to_length(const DiscountSpec& spec, double g) {
  if (!(g > -1.0) || !(g <= 0.0)) {
    throw std::domain_error("invert_to_length: g must lie in (-1, 0]");
  }
  return std::log1p(g) / spec.log_gamma();
}

bool trajectory_well_formed(const Trajectory& traj) noexcept {
  if (traj.length < 1) return false;
  const auto len = static_cast<std::size_t>(traj.length);
  return traj.tokens.size() == len && traj.states.size() == len + 1;
}

ReturnSchedule return_schedule(const DiscountSpec& spec, std::int64_t length) {
  if (length < 1) {
    throw std::invalid_argument("return_schedule: length must be >= 1");
  }
  ReturnSchedule schedule;
  schedule.values.resize(static_cast<std::size_t>(length) + 1);
  for (std::int64_t t = 0; t <= length; ++t) {
    schedule.values[static_cast<std::size_t>(t)] = return_target(spec, length - t);
  }
  return schedule;
}

ReturnSchedule schedule_for_trajectory(const DiscountSpec& spec, const Trajectory& traj) {
  if (traj.truncated) {
    throw std::invalid_argument("schedule_for_trajectory: truncated trajectory has no defined returns");
  }
  if (!trajectory_well_formed(traj)) {
    throw std::invalid_argument("schedule_for_trajectory: malformed trajectory");
  }
  return return_schedule(spec, traj.length);
}

}  // namespace lenval
