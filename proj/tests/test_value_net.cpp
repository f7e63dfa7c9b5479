#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "lenval/errors.hpp"
#include "lenval/markov.hpp"
#include "lenval/rng.hpp"
#include "lenval/value_net.hpp"

using namespace lenval;

namespace {

std::string fixture(const char* name) {
  return std::string(LENVAL_FIXTURE_DIR) + "/" + name;
}

ValueHead random_head(int input_dim, int hidden, std::uint64_t seed) {
  return ValueHead(input_dim, hidden, seed);
}

}  // namespace

TEST_CASE("feature map is one-hot with an optional position slot") {
  const FeatureMap plain{4};
  CHECK(plain.dimension() == 4);
  const auto f = plain.encode(2);
  REQUIRE(f.size() == 4);
  CHECK(f[2] == 1.0);
  CHECK(f[0] + f[1] + f[3] == 0.0);
  CHECK_THROWS_AS(plain.encode(4), std::invalid_argument);
  CHECK_THROWS_AS(plain.encode(-1), std::invalid_argument);

  FeatureMap positional{4};
  positional.include_position = true;
  positional.position_horizon = 10;
  CHECK(positional.dimension() == 5);
  CHECK(positional.encode(0, 5).back() == 0.5);
  CHECK(positional.encode(0, 50).back() == 1.0);  // clamped
}

TEST_CASE("head initialization is seed-deterministic and bounded") {
  const ValueHead a = random_head(6, 8, 11);
  const ValueHead b = random_head(6, 8, 11);
  CHECK(a.w1 == b.w1);
  CHECK(a.b1 == b.b1);
  CHECK(a.w2 == b.w2);
  CHECK(a.b2 == b.b2);
  const ValueHead c = random_head(6, 8, 12);
  CHECK(a.w1 != c.w1);

  const double bound1 = 1.0 / std::sqrt(6.0);
  for (const double w : a.w1) CHECK(std::fabs(w) <= bound1);
  CHECK_THROWS_AS(ValueHead(0, 4, 1), std::invalid_argument);
}

TEST_CASE("predictions always lie in (-1, 0)") {
  const FeatureMap features{5};
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const ValueHead head = random_head(5, 7, rng());
    for (int s = 0; s < 5; ++s) {
      const double v = predict_state(head, features, s);
      CHECK(v > -1.0);
      CHECK(v < 0.0);
    }
  }
  const ValueHead head = random_head(3, 4, 0);
  const std::vector<double> wrong(5, 0.0);
  CHECK_THROWS_AS(predict(head, wrong), std::invalid_argument);
}

TEST_CASE("loss formulas on a hand example") {
  // Two trajectories: lengths 1 and 2, all errors of magnitude 0.1 and 0.3.
  const std::vector<std::vector<double>> predictions = {{-0.4}, {-0.5, -0.2}};
  const std::vector<std::vector<double>> targets = {{-0.5}, {-0.2, -0.5}};
  // Squared errors: 0.01; 0.09, 0.09.
  CHECK(loss_token_avg(predictions, targets) == doctest::Approx((0.01 + 0.18) / 3.0).epsilon(1e-12));
  CHECK(loss_trajectory_avg(predictions, targets) ==
        doctest::Approx((0.01 + 0.09) / 2.0).epsilon(1e-12));
  CHECK_THROWS_AS(loss_token_avg({{0.0}}, {{0.0, 0.0}}), std::invalid_argument);
}

TEST_CASE("gae targets collapse to Monte Carlo at lambda = 1") {
  const DiscountSpec spec(0.9);
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto length = static_cast<std::int64_t>(1 + uniform_index(rng, 60));
    // Arbitrary value estimates; lambda = 1 must ignore them entirely.
    std::vector<double> values(static_cast<std::size_t>(length) + 1);
    for (auto& v : values) v = -uniform_unit(rng);
    values.back() = 0.0;
    const auto targets = gae_targets(values, spec, 1.0);
    const ReturnSchedule schedule = return_schedule(spec, length);
    REQUIRE(targets.size() == static_cast<std::size_t>(length));
    for (std::size_t t = 0; t < targets.size(); ++t) {
      CHECK(std::fabs(targets[t] - schedule.values[t]) <= 1e-12);
    }
  }
}

TEST_CASE("gae targets collapse to one-step TD at lambda = 0") {
  const DiscountSpec spec(0.8);
  std::mt19937_64 rng(23);
  std::vector<double> values(12);
  for (auto& v : values) v = -uniform_unit(rng);
  values.back() = 0.0;
  const auto targets = gae_targets(values, spec, 0.0);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const double td = -(1.0 - 0.8) + 0.8 * values[t + 1];
    CHECK(targets[t] == td);  // exact: the recursion degenerates termwise
  }
}

TEST_CASE("gae target validation") {
  const DiscountSpec spec(0.9);
  const std::vector<double> ok = {-0.5, 0.0};
  CHECK_NOTHROW(gae_targets(ok, spec, 0.5));
  CHECK_THROWS_AS(gae_targets(std::vector<double>{0.0}, spec, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(gae_targets(std::vector<double>{-0.5, -0.1}, spec, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(gae_targets(ok, spec, 1.5), std::invalid_argument);
}

TEST_CASE("make_train_data drops the terminal row") {
  const MarkovGenerator gen = load_world(fixture("geom.world"));
  const DiscountSpec spec(0.9);
  const Dataset dataset = build_dataset(gen, spec, 20, 1, 4096);
  const auto data = make_train_data(dataset);
  REQUIRE(data.size() == dataset.trajectories.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int length = dataset.trajectories[i].length;
    CHECK(data[i].states.size() == static_cast<std::size_t>(length));
    CHECK(data[i].targets.size() == static_cast<std::size_t>(length));
    CHECK(data[i].targets.front() == dataset.schedules[i].values.front());
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  const FeatureMap features{4};
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    ValueHead head(4, 5, rng());
    std::vector<TrainTraj> batch;
    for (int i = 0; i < 3; ++i) {
      TrainTraj traj;
      traj.prompt_id = "p";
      const std::size_t length = 1 + uniform_index(rng, 4);
      for (std::size_t t = 0; t < length; ++t) {
        traj.states.push_back(static_cast<int>(uniform_index(rng, 4)));
        traj.targets.push_back(-uniform_unit(rng));
      }
      batch.push_back(traj);
    }
    const Averaging mode = trial % 2 == 0 ? Averaging::TokenAvg : Averaging::TrajectoryAvg;
    const Gradients grad = gradients(head, features, batch, mode);

    auto batch_loss = [&](const ValueHead& h) {
      std::vector<std::vector<double>> predictions, targets;
      for (const auto& traj : batch) {
        std::vector<double> row;
        for (std::size_t t = 0; t < traj.states.size(); ++t) {
          row.push_back(predict_state(h, features, traj.states[t], static_cast<int>(t)));
        }
        predictions.push_back(row);
        targets.push_back(traj.targets);
      }
      return mode == Averaging::TokenAvg ? loss_token_avg(predictions, targets)
                                         : loss_trajectory_avg(predictions, targets);
    };

    const double eps = 1e-6;
    auto check_param = [&](double* param, double analytic) {
      const double saved = *param;
      *param = saved + eps;
      const double up = batch_loss(head);
      *param = saved - eps;
      const double down = batch_loss(head);
      *param = saved;
      const double numeric = (up - down) / (2.0 * eps);
      CHECK(std::fabs(analytic - numeric) <= 1e-6 + 1e-4 * std::fabs(numeric));
    };

    check_param(&head.w1[1], grad.w1[1]);
    check_param(&head.b1[2], grad.b1[2]);
    check_param(&head.w2[3], grad.w2[3]);
    check_param(&head.b2, grad.b2);
  }
}

TEST_CASE("training is bitwise deterministic and reduces the loss") {
  const MarkovGenerator gen = load_world(fixture("mix10.world"));
  const DiscountSpec spec(0.9);
  const Dataset dataset = build_dataset(gen, spec, 40, 3, 4096);
  const auto data = make_train_data(dataset);
  const FeatureMap features{gen.num_states};

  TrainConfig config;
  config.learning_rate = 0.2;
  config.batch_size = 8;
  config.epochs = 40;
  config.seed = 5;

  ValueHead head_a(features.dimension(), 16, 5);
  ValueHead head_b(features.dimension(), 16, 5);
  const TrainResult result_a = train(head_a, features, spec, data, {}, config);
  const TrainResult result_b = train(head_b, features, spec, data, {}, config);
  CHECK(head_a.w1 == head_b.w1);
  CHECK(head_a.b2 == head_b.b2);
  CHECK(result_a.train_loss == result_b.train_loss);
  CHECK(result_a.val_loss == result_a.train_loss);  // empty val set falls back
  CHECK(result_a.train_loss.back() < result_a.train_loss.front());
}

TEST_CASE("training without shuffle groups trajectories by prompt") {
  const MarkovGenerator gen = load_world(fixture("mix10.world"));
  const DiscountSpec spec(0.9);
  const Dataset dataset = build_dataset(gen, spec, 10, 3, 4096);
  const auto data = make_train_data(dataset);
  const FeatureMap features{gen.num_states};

  TrainConfig config;
  config.epochs = 3;
  config.shuffle = false;
  ValueHead head_a(features.dimension(), 8, 1);
  ValueHead head_b(features.dimension(), 8, 1);
  const TrainResult a = train(head_a, features, spec, data, {}, config);
  // The grouping is a stable sort by prompt id, so any permutation that keeps
  // each prompt's internal order (here: swapping whole prompt blocks) must
  // train identically.
  auto reordered = data;
  std::stable_partition(reordered.begin(), reordered.end(),
                        [](const TrainTraj& traj) { return traj.prompt_id == "p1"; });
  const TrainResult b = train(head_b, features, spec, reordered, {}, config);
  CHECK(a.train_loss.back() == b.train_loss.back());
  CHECK(head_a.w1 == head_b.w1);
}

TEST_CASE("lambda < 1 refreshes targets from the current head") {
  const MarkovGenerator gen = load_world(fixture("geom.world"));
  const DiscountSpec spec(0.9);
  const Dataset dataset = build_dataset(gen, spec, 30, 7, 4096);
  const auto data = make_train_data(dataset);
  const FeatureMap features{gen.num_states};

  TrainConfig config;
  config.epochs = 300;
  config.learning_rate = 0.3;
  config.gae_lambda = 0.0;
  ValueHead head(features.dimension(), 8, 2);
  const TrainResult result = train(head, features, spec, data, {}, config);
  // One-step TD on the geometric world still drives the start state toward a
  // fixed point near the oracle value.
  const ValueOracle oracle = exact_value(gen, spec);
  CHECK(std::fabs(predict_state(head, features, 0) - oracle.value[0]) < 0.1);
  CHECK(std::isfinite(result.train_loss.back()));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  const ValueHead head = random_head(7, 9, 77);
  const std::string text = dump_checkpoint(head);
  const ValueHead back = parse_checkpoint(text, "mem");
  CHECK(back.input_dim == head.input_dim);
  CHECK(back.hidden == head.hidden);
  CHECK(back.w1 == head.w1);
  CHECK(back.b1 == head.b1);
  CHECK(back.w2 == head.w2);
  CHECK(back.b2 == head.b2);

  const auto path = std::filesystem::temp_directory_path() / "lenval_test_head.ckpt";
  save_checkpoint(head, path);
  const ValueHead loaded = load_checkpoint(path);
  CHECK(loaded.w1 == head.w1);
  std::filesystem::remove(path);

  // Leading comment lines are tolerated (emitted checkpoints carry headers).
  const ValueHead commented = parse_checkpoint("# provenance\n" + text, "mem");
  CHECK(commented.w1 == head.w1);
}

TEST_CASE("checkpoint parse errors carry line numbers") {
  auto line_of = [](const std::string& text) -> int {
    try {
      parse_checkpoint(text, "bad.ckpt");
    } catch (const config_error& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("nonsense\n") == 1);
  CHECK(line_of("lenval-head v1\ndims 0 4\n") == 2);
  CHECK(line_of("lenval-head v1\ndims 1 1\nw1 zzz\n") == 3);
  CHECK(line_of("lenval-head v1\ndims 1 1\nw1 0x1p-1 0x1p-1\n") == 3);  // too long
  CHECK(line_of("lenval-head v1\ndims 1 1\nb1 0x1p-1\n") == 3);        // wrong label
}
