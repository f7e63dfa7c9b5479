#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>

#include "lenval/errors.hpp"
#include "lenval/markov.hpp"

using namespace lenval;

namespace {

std::string fixture(const char* name) {
  return std::string(LENVAL_FIXTURE_DIR) + "/" + name;
}

// Single recurrent state emitting EOS with probability p.
std::string geometric_world(double p) {
  char buffer[64];
  std::string text =
      "[states]\n"
      "num_states = 2\n"
      "vocab_size = 2\n"
      "eos = 1\n"
      "[emission]\n";
  if (p < 1.0) {
    std::snprintf(buffer, sizeof buffer, "0 0 %.17g\n", 1.0 - p);
    text += buffer;
  }
  std::snprintf(buffer, sizeof buffer, "0 1 %.17g\n", p);
  text += buffer;
  text += "[transition]\n";
  if (p < 1.0) text += "0 0 0\n";
  text +=
      "0 1 1\n"
      "[terminals]\n1\n"
      "[success]\n1\n"
      "[prompts]\np0 0\n";
  return text;
}

}  // namespace

TEST_CASE("world files load and validate") {
  for (const char* name : {"geom.world", "two_path.world", "mix10.world", "ladder.world"}) {
    const MarkovGenerator gen = load_world(fixture(name));
    CHECK(gen.num_states >= 2);
    CHECK_NOTHROW(gen.validate());
  }
  CHECK_THROWS_AS(load_world(fixture("missing.world")), config_error);
}

TEST_CASE("parse errors carry line numbers") {
  auto line_of = [](const std::string& text) -> int {
    try {
      parse_world(text, "bad.world");
    } catch (const config_error& e) {
      return e.line();
    }
    return -1;
  };

  // Row sum off: cited at the state's first emission line.
  CHECK(line_of("[states]\nnum_states = 2\nvocab_size = 2\neos = 1\n"
                "[emission]\n0 0 0.5\n0 1 0.4\n"
                "[transition]\n0 0 0\n0 1 1\n"
                "[terminals]\n1\n[prompts]\np0 0\n") == 6);
  // Bad probability literal on its own line.
  CHECK(line_of("[states]\nnum_states = 2\nvocab_size = 2\neos = 1\n"
                "[emission]\n0 0 frog\n") == 6);
  // EOS emission must land in a terminal state; cited at the emission row.
  CHECK(line_of("[states]\nnum_states = 3\nvocab_size = 2\neos = 1\n"
                "[emission]\n0 1 1\n1 1 1\n"
                "[transition]\n0 1 1\n1 1 2\n"
                "[terminals]\n2\n[prompts]\np0 0\n") == 6);
  // Duplicate emission row.
  CHECK(line_of("[states]\nnum_states = 2\nvocab_size = 2\neos = 1\n"
                "[emission]\n0 1 0.5\n0 1 0.5\n") == 7);
  // Prompt starting at a terminal state.
  CHECK(line_of("[states]\nnum_states = 2\nvocab_size = 2\neos = 1\n"
                "[emission]\n0 1 1\n[transition]\n0 1 1\n"
                "[terminals]\n1\n[prompts]\np0 1\n") == 12);
  // Unknown section header.
  CHECK(line_of("[bogus]\n") == 1);
}

TEST_CASE("every state must be able to reach a terminal") {
  // State 0 loops forever with no EOS anywhere.
  const std::string text =
      "[states]\nnum_states = 3\nvocab_size = 2\neos = 1\n"
      "[emission]\n0 0 1\n"
      "[transition]\n0 0 0\n"
      "[terminals]\n2\n"
      "[prompts]\np0 0\n";
  CHECK_THROWS_AS(parse_world(text, "loop.world"), config_error);
}

TEST_CASE("sample_rollout is seed-deterministic and shape-correct") {
  const MarkovGenerator gen = load_world(fixture("mix10.world"));
  const Trajectory a = sample_rollout(gen, "p0", 42, 4096);
  const Trajectory b = sample_rollout(gen, "p0", 42, 4096);
  CHECK(a.tokens == b.tokens);
  CHECK(a.states == b.states);
  CHECK(a.length == b.length);
  CHECK_FALSE(a.truncated);
  CHECK(trajectory_well_formed(a));
  CHECK(a.states.front() == 0);
  CHECK(gen.is_terminal(a.states.back()));
  CHECK(a.tokens.back() == gen.eos_token);

  const Trajectory c = sample_rollout(gen, "p0", 43, 4096);
  CHECK(a.seed != c.seed);
  CHECK_THROWS_AS(sample_rollout(gen, "nope", 1, 10), std::invalid_argument);
}

TEST_CASE("truncation stops at max_len without a terminal state") {
  const MarkovGenerator gen = parse_world(geometric_world(1e-9), "slow.world");
  const Trajectory traj = sample_rollout(gen, "p0", 3, 5);
  CHECK(traj.truncated);
  CHECK(traj.length == 5);
  CHECK(traj.tokens.size() == 5);
  CHECK(traj.states.size() == 6);
  CHECK_FALSE(gen.is_terminal(traj.states.back()));
}

TEST_CASE("exact_value on immediate termination gives phi = gamma") {
  const MarkovGenerator gen = parse_world(geometric_world(1.0), "eos1.world");
  const DiscountSpec spec(0.9);
  const ValueOracle oracle = exact_value(gen, spec);
  CHECK(oracle.phi[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(oracle.value[0] == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(oracle.phi[1] == 1.0);
  CHECK(oracle.value[1] == 0.0);
  CHECK(oracle.success_prob[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("exact_value on the geometric world matches the closed form") {
  // phi = gamma * (p + (1-p) phi)  =>  phi = p gamma / (1 - (1-p) gamma).
  const MarkovGenerator gen = parse_world(geometric_world(0.5), "geom50.world");
  const DiscountSpec spec(0.8);
  const ValueOracle oracle = exact_value(gen, spec);
  const double expected = 0.5 * 0.8 / (1.0 - 0.5 * 0.8);
  CHECK(oracle.phi[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(oracle.success_prob[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("exact_value on a deterministic chain matches the schedule") {
  const std::string text =
      "[states]\nnum_states = 4\nvocab_size = 2\neos = 1\n"
      "[emission]\n0 0 1\n1 0 1\n2 1 1\n"
      "[transition]\n0 0 1\n1 0 2\n2 1 3\n"
      "[terminals]\n3\n[prompts]\np0 0\n";
  const MarkovGenerator gen = parse_world(text, "chain3.world");
  const ValueOracle oracle = exact_value(gen, DiscountSpec(0.5));
  CHECK(oracle.value[0] == doctest::Approx(-0.875).epsilon(1e-12));
  CHECK(oracle.value[1] == doctest::Approx(-0.75).epsilon(1e-12));
  CHECK(oracle.value[2] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(oracle.success_prob[0] == 0.0);  // terminal not marked as success
}

TEST_CASE("two_path oracle splits success mass evenly") {
  const MarkovGenerator gen = load_world(fixture("two_path.world"));
  const DiscountSpec spec(0.9);
  const ValueOracle oracle = exact_value(gen, spec);
  CHECK(oracle.success_prob[0] == doctest::Approx(0.5).epsilon(1e-12));
  const double phi0 = 0.9 * (0.5 * std::pow(0.9, 2) + 0.5 * std::pow(0.9, 6));
  CHECK(oracle.phi[0] == doctest::Approx(phi0).epsilon(1e-12));
  CHECK(oracle.value[4] == doctest::Approx(-(1.0 - std::pow(0.9, 6))).epsilon(1e-12));
}

TEST_CASE("oracle agrees with Monte Carlo returns on mix10") {
  const MarkovGenerator gen = load_world(fixture("mix10.world"));
  const DiscountSpec spec(0.9);
  const ValueOracle oracle = exact_value(gen, spec);
  const Dataset dataset = build_dataset(gen, spec, 2000, 9, 4096);
  REQUIRE(dataset.truncated_dropped == 0);

  double sum_p0 = 0.0, sum_p1 = 0.0;
  int n_p0 = 0, n_p1 = 0;
  for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
    const double g0 = dataset.schedules[i].values.front();
    if (dataset.trajectories[i].prompt_id == "p0") {
      sum_p0 += g0;
      ++n_p0;
    } else {
      sum_p1 += g0;
      ++n_p1;
    }
  }
  REQUIRE(n_p0 == 2000);
  REQUIRE(n_p1 == 2000);
  // Returns are bounded by 1, so 3 standard errors is well under 0.02.
  CHECK(std::fabs(sum_p0 / n_p0 - oracle.value[0]) < 0.02);
  CHECK(std::fabs(sum_p1 / n_p1 - oracle.value[4]) < 0.02);
}

TEST_CASE("build_dataset is deterministic and thread-count invariant") {
  const MarkovGenerator gen = load_world(fixture("mix10.world"));
  const DiscountSpec spec(0.9);
  const Dataset a = build_dataset(gen, spec, 50, 123, 4096, 1);
  const Dataset b = build_dataset(gen, spec, 50, 123, 4096, 4);
  REQUIRE(a.trajectories.size() == b.trajectories.size());
  for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
    CHECK(a.trajectories[i].prompt_id == b.trajectories[i].prompt_id);
    CHECK(a.trajectories[i].seed == b.trajectories[i].seed);
    CHECK(a.trajectories[i].tokens == b.trajectories[i].tokens);
    CHECK(a.schedules[i].values == b.schedules[i].values);
  }
  // Seeds are base + global index over prompts in sorted order.
  CHECK(a.trajectories.front().seed == 123);
  CHECK(a.trajectories.front().prompt_id == "p0");
}

TEST_CASE("schedules in a dataset are Bellman-consistent") {
  const MarkovGenerator gen = load_world(fixture("geom.world"));
  const DiscountSpec spec(0.9);
  const Dataset dataset = build_dataset(gen, spec, 200, 5, 4096);
  for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
    const auto& values = dataset.schedules[i].values;
    REQUIRE(values.size() == static_cast<std::size_t>(dataset.trajectories[i].length) + 1);
    CHECK(values.back() == 0.0);
    for (std::size_t t = 0; t + 1 < values.size(); ++t) {
      const double bellman = -(1.0 - spec.gamma()) + spec.gamma() * values[t + 1];
      CHECK(std::fabs(values[t] - bellman) <= 1e-12);
    }
  }
}

TEST_CASE("next_distribution copies the emission row") {
  const MarkovGenerator gen = load_world(fixture("geom.world"));
  const auto row = next_distribution(gen, 0);
  REQUIRE(row.size() == 2);
  CHECK(row[0] == 0.7);
  CHECK(row[1] == 0.3);
  CHECK_THROWS_AS(next_distribution(gen, 1), std::invalid_argument);   // terminal
  CHECK_THROWS_AS(next_distribution(gen, 99), std::invalid_argument);  // out of range
}
