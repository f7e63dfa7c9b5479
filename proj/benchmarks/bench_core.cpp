#include <benchmark/benchmark.h>

#include <cstdint>
#include <random>
#include <vector>

#include "lenval/decode.hpp"
#include "lenval/discount.hpp"
#include "lenval/markov.hpp"
#include "lenval/rng.hpp"
#include "lenval/value_net.hpp"

namespace {

using namespace lenval;

// 64-state chain: cont (0.7) advances, EOS (0.3) absorbs; the last chain
// state must emit EOS. Built directly so benchmarks need no fixture files.
MarkovGenerator chain_world(int chain_states) {
  MarkovGenerator gen;
  gen.num_states = chain_states + 1;
  gen.vocab_size = 2;
  gen.eos_token = 1;
  gen.emission.assign(static_cast<std::size_t>(gen.num_states), {0.0, 0.0});
  gen.transition.assign(static_cast<std::size_t>(gen.num_states), {-1, -1});
  gen.terminal.assign(static_cast<std::size_t>(gen.num_states), 0);
  gen.success.assign(static_cast<std::size_t>(gen.num_states), 0);
  const int term = chain_states;
  for (int s = 0; s < chain_states; ++s) {
    if (s + 1 < chain_states) {
      gen.emission[static_cast<std::size_t>(s)] = {0.7, 0.3};
      gen.transition[static_cast<std::size_t>(s)] = {s + 1, term};
    } else {
      gen.emission[static_cast<std::size_t>(s)] = {0.0, 1.0};
      gen.transition[static_cast<std::size_t>(s)] = {-1, term};
    }
  }
  gen.terminal[static_cast<std::size_t>(term)] = 1;
  gen.success[static_cast<std::size_t>(term)] = 1;
  gen.prompts["p0"] = 0;
  gen.validate();
  return gen;
}

void BM_ReturnSchedule(benchmark::State& state) {
  const DiscountSpec spec(0.9998);
  const auto length = static_cast<std::int64_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(return_schedule(spec, length));
  }
  state.SetItemsProcessed(state.iterations() * length);
}
BENCHMARK(BM_ReturnSchedule)->Arg(256)->Arg(4096);

void BM_InvertToLength(benchmark::State& state) {
  const DiscountSpec spec(0.997);
  const double g = return_target(spec, 123);
  for (auto _ : state) {
    benchmark::DoNotOptimize(invert_to_length(spec, g));
  }
}
BENCHMARK(BM_InvertToLength);

void BM_ExactValue(benchmark::State& state) {
  const MarkovGenerator gen = chain_world(static_cast<int>(state.range(0)));
  const DiscountSpec spec(0.9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(exact_value(gen, spec));
  }
}
BENCHMARK(BM_ExactValue)->Arg(16)->Arg(64);

void BM_PredictState(benchmark::State& state) {
  const FeatureMap features{64};
  const ValueHead head(64, 64, 1);
  int s = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(predict_state(head, features, s));
    s = (s + 1) % 64;
  }
}
BENCHMARK(BM_PredictState);

void BM_Gradients(benchmark::State& state) {
  const FeatureMap features{64};
  const ValueHead head(64, 32, 1);
  std::mt19937_64 rng(2);
  std::vector<TrainTraj> batch(16);
  for (auto& traj : batch) {
    traj.prompt_id = "p0";
    const std::size_t length = 2 + uniform_index(rng, 7);
    for (std::size_t t = 0; t < length; ++t) {
      traj.states.push_back(static_cast<int>(uniform_index(rng, 64)));
      traj.targets.push_back(-uniform_unit(rng));
    }
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(gradients(head, features, batch, Averaging::TokenAvg));
  }
}
BENCHMARK(BM_Gradients);

void BM_TiltDistribution(benchmark::State& state) {
  CandidateSet set;
  std::mt19937_64 rng(3);
  double total = 0.0;
  for (int i = 0; i < 16; ++i) {
    Candidate c;
    c.token = i;
    c.base_prob = 0.05 + uniform_unit(rng);
    c.value = -uniform_unit(rng);
    total += c.base_prob;
    set.entries.push_back(c);
  }
  for (auto& c : set.entries) c.base_prob /= total;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tilt_distribution(set, -2.0));
  }
}
BENCHMARK(BM_TiltDistribution);

void BM_ControlledDecode(benchmark::State& state) {
  const MarkovGenerator gen = chain_world(64);
  const DiscountSpec spec(0.9);
  const ValueOracle oracle = exact_value(gen, spec);
  const ValueFn value = oracle_value_fn(oracle);
  ControlRule rule;
  rule.kind = RuleKind::Tilt;
  rule.beta = -2.0;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        run_controlled_decode(gen, value, rule, spec, "p0", ++seed, 128, {}));
  }
}
BENCHMARK(BM_ControlledDecode);

}  // namespace

BENCHMARK_MAIN();
