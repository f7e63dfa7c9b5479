#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "lenval/discount.hpp"
#include "lenval/rng.hpp"

using namespace lenval;

TEST_CASE("gamma must lie strictly inside (0, 1)") {
  CHECK_THROWS_AS(DiscountSpec(0.0), std::invalid_argument);
  CHECK_THROWS_AS(DiscountSpec(1.0), std::invalid_argument);
  CHECK_THROWS_AS(DiscountSpec(-0.1), std::invalid_argument);
  CHECK_THROWS_AS(DiscountSpec(1.5), std::invalid_argument);
  CHECK_THROWS_AS(DiscountSpec(std::nan("")), std::invalid_argument);
  CHECK(DiscountSpec(0.5).gamma() == 0.5);
  CHECK(DiscountSpec(0.9998).log_gamma() == doctest::Approx(std::log(0.9998)).epsilon(1e-15));
}

TEST_CASE("select_gamma hits the 99% mass point") {
  CHECK(select_gamma(1).gamma() == doctest::Approx(0.01).epsilon(1e-12));
  // 1 - gamma^l99 = 0.99 by construction.
  for (const std::int64_t l99 : {2ll, 10ll, 100ll, 1000ll, 50000ll}) {
    const DiscountSpec spec = select_gamma(l99);
    CHECK(std::pow(spec.gamma(), static_cast<double>(l99)) == doctest::Approx(0.01).epsilon(1e-9));
  }
  CHECK(select_gamma(1000).gamma() == doctest::Approx(0.995405417351527).epsilon(1e-12));
  CHECK_THROWS_AS(select_gamma(0), std::invalid_argument);
  CHECK_THROWS_AS(select_gamma(-5), std::invalid_argument);
}

TEST_CASE("per-step reward is -(1-gamma) while emitting, 0 at the terminal") {
  const DiscountSpec spec(0.75);
  CHECK(per_step_reward(spec, false) == -0.25);
  CHECK(per_step_reward(spec, true) == 0.0);
}

TEST_CASE("return_target closed form") {
  const DiscountSpec half(0.5);
  CHECK(return_target(half, 0) == 0.0);
  CHECK(return_target(half, 1) == -0.5);
  CHECK(return_target(half, 2) == -0.75);
  CHECK(return_target(half, 3) == -0.875);
  CHECK(return_target(DiscountSpec(0.9), 1) == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK_THROWS_AS(return_target(half, -1), std::invalid_argument);

  // Inside (-1, 0] while gamma^l stays above half an ulp of 1; beyond that
  // the double result saturates at exactly -1 (gamma 0.5 crosses at l = 54).
  CHECK(return_target(half, 50) > -1.0);
  CHECK(return_target(half, 50) <= 0.0);
  CHECK(return_target(half, 54) == -1.0);
  CHECK(return_target(half, 5000) == -1.0);
}

TEST_CASE("return_target satisfies the Bellman identity for random horizons") {
  std::mt19937_64 rng(7);
  const double gammas[] = {0.5, 0.9, 0.997, 0.9998};
  for (int trial = 0; trial < 2000; ++trial) {
    const DiscountSpec spec(gammas[trial % 4]);
    const auto remaining = static_cast<std::int64_t>(1 + uniform_index(rng, 5000));
    const double g = return_target(spec, remaining);
    const double next = return_target(spec, remaining - 1);
    const double bellman = -(1.0 - spec.gamma()) + spec.gamma() * next;
    CHECK(std::fabs(g - bellman) <= 1e-12);
  }
}

TEST_CASE("invert_to_length inverts return_target") {
  const DiscountSpec spec(0.997);
  CHECK(invert_to_length(spec, -0.5) == doctest::Approx(230.702313).epsilon(1e-6));
  CHECK(invert_to_length(spec, 0.0) == 0.0);
  for (const std::int64_t n : {1ll, 7ll, 50ll, 400ll, 2000ll}) {
    const double g = return_target(spec, n);
    CHECK(invert_to_length(spec, g) == doctest::Approx(static_cast<double>(n)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(invert_to_length(spec, -1.0), std::domain_error);
  CHECK_THROWS_AS(invert_to_length(spec, 0.5), std::domain_error);
  CHECK_THROWS_AS(invert_to_length(spec, -1.5), std::domain_error);
}

TEST_CASE("return_schedule matches the closed form and ends at zero") {
  const DiscountSpec spec(0.5);
  const ReturnSchedule schedule = return_schedule(spec, 3);
  REQUIRE(schedule.values.size() == 4);
  CHECK(schedule.values[0] == -0.875);
  CHECK(schedule.values[1] == -0.75);
  CHECK(schedule.values[2] == -0.5);
  CHECK(schedule.values[3] == 0.0);
  CHECK_THROWS_AS(return_schedule(spec, 0), std::invalid_argument);
}

TEST_CASE("trajectory shape rules") {
  Trajectory traj;
  traj.prompt_id = "p0";
  traj.tokens = {4, 1};
  traj.states = {0, 2, 3};
  traj.length = 2;
  CHECK(trajectory_well_formed(traj));

  Trajectory bad = traj;
  bad.length = 3;
  CHECK_FALSE(trajectory_well_formed(bad));
  bad = traj;
  bad.states.pop_back();
  CHECK_FALSE(trajectory_well_formed(bad));
  bad = traj;
  bad.tokens.clear();
  bad.states = {0};
  bad.length = 0;
  CHECK_FALSE(trajectory_well_formed(bad));
}

TEST_CASE("schedule_for_trajectory rejects truncated rollouts") {
  const DiscountSpec spec(0.9);
  Trajectory traj;
  traj.prompt_id = "p0";
  traj.tokens = {0, 0, 1};
  traj.states = {0, 0, 0, 1};
  traj.length = 3;
  const ReturnSchedule schedule = schedule_for_trajectory(spec, traj);
  REQUIRE(schedule.values.size() == 4);
  CHECK(schedule.values[0] == doctest::Approx(-(1.0 - 0.729)).epsilon(1e-15));
  CHECK(schedule.values[3] == 0.0);

  traj.truncated = true;
  CHECK_THROWS_AS(schedule_for_trajectory(spec, traj), std::invalid_argument);
}
