#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lenval/discount.hpp"
#include "lenval/markov.hpp"

namespace lenval {

// One-hot state features, optionally extended with a normalized step position
// (min(step, horizon) / horizon). The Markov worlds are fully described by the
// state alone, so the position channel defaults to off.
struct FeatureMap {
  int num_states = 0;
  bool include_position = false;
  int position_horizon = 1;

  int dimension() const noexcept { return num_states + (include_position ? 1 : 0); }
  std::vector<double> encode(int state, int step = 0) const;
};

// Two-layer head v = -sigmoid(w2 . silu(w1 f + b1) + b2), output in (-1, 0).
// Parameters are public: training and checkpointing touch them directly.
struct ValueHead {
  int input_dim = 0;
  int hidden = 0;
  std::vector<double> w1;  // hidden x input_dim, row-major
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden
  double b2 = 0.0;

  ValueHead() = default;
  // Uniform init in [-a, a] with a = 1/sqrt(fan_in) per layer, seeded.
  ValueHead(int input_dim, int hidden, std::uint64_t seed);
};

double predict(const ValueHead& head, std::span<const double> features);
double predict_state(const ValueHead& head, const FeatureMap& features, int state, int step = 0);

// Per-state value source used by decoding and evaluation; lets an exact
// oracle stand in for a trained head.
using ValueFn = std::function<double(int state)>;
ValueFn head_value_fn(const ValueHead& head, const FeatureMap& features);
ValueFn oracle_value_fn(const ValueOracle& oracle);

// Squared-error losses over per-trajectory prediction/target rows.
// token_avg divides the full sum by the total token count; trajectory_avg
// averages per-trajectory means, reweighting each token by 1/L(tau).
double loss_token_avg(const std::vector<std::vector<double>>& predictions,
                      const std::vector<std::vector<double>>& targets);
double loss_trajectory_avg(const std::vector<std::vector<double>>& predictions,
                           const std::vector<std::vector<double>>& targets);

// TD(lambda) regression targets from per-step values v[0..L] (v[L] pinned 0):
// target_t = r + gamma ((1-lambda) v[t+1] + lambda target_{t+1}). lambda = 1
// collapses to the Monte Carlo returns independently of v; lambda = 0 gives
// the one-step TD target exactly.
std::vector<double> gae_targets(std::span<const double> values, const DiscountSpec& spec,
                                double lambda);

enum class Averaging { TokenAvg, TrajectoryAvg };

// One training trajectory: the states at predicted steps t = 0..L-1 and their
// regression targets. Step index within the trajectory is implicit.
struct TrainTraj {
  std::string prompt_id;
  std::vector<int> states;
  std::vector<double> targets;
};

std::vector<TrainTraj> make_train_data(const Dataset& dataset);

struct Gradients {
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;
};

// Exact analytic gradient of the configured loss over the batch, accumulated
// in a fixed order.
Gradients gradients(const ValueHead& head, const FeatureMap& features,
                    std::span<const TrainTraj> batch, Averaging averaging);

struct TrainConfig {
  double learning_rate = 0.05;
  int batch_size = 16;
  int epochs = 100;
  Averaging averaging = Averaging::TokenAvg;
  double gae_lambda = 1.0;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

struct TrainResult {
  std::vector<double> train_loss;  // one entry per epoch
  std::vector<double> val_loss;
};

// Plain minibatch SGD. Batches are whole trajectories: shuffled order when
// config.shuffle, otherwise grouped by prompt id. With gae_lambda < 1 the
// regression targets are rebuilt from the current head at each epoch start.
// Throws numeric_error naming the epoch if the loss stops being finite.
// Identical inputs yield bitwise-identical parameters.
TrainResult train(ValueHead& head, const FeatureMap& features, const DiscountSpec& spec,
                  std::vector<TrainTraj> train_data, const std::vector<TrainTraj>& val_data,
                  const TrainConfig& config);

// Versioned text checkpoint; values are hex floats, so reload is bit-exact.
std::string dump_checkpoint(const ValueHead& head);
ValueHead parse_checkpoint(std::string_view text, const std::string& name);
void save_checkpoint(const ValueHead& head, const std::filesystem::path& path);
ValueHead load_checkpoint(const std::filesystem::path& path);

}  // namespace lenval
