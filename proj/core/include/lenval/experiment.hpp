#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lenval/decode.hpp"
#include "lenval/discount.hpp"
#include "lenval/metrics.hpp"
#include "lenval/value_net.hpp"

namespace lenval {

enum class ValueSource { Oracle, Head };

// Flat sectioned key=value config; every command is a pure function of
// (config, seed), so all outputs embed the config digest.
struct ExperimentConfig {
  std::string config_name;  // for error reporting
  std::string config_digest;
  std::filesystem::path config_dir;

  std::filesystem::path world_path;

  std::optional<double> gamma;       // exactly one of gamma / l99
  std::optional<std::int64_t> l99;

  int rollouts_per_prompt = 64;
  int rollout_max_len = 4096;

  int hidden = 32;
  double learning_rate = 0.05;
  int batch_size = 16;
  int epochs = 100;
  Averaging averaging = Averaging::TokenAvg;
  double gae_lambda = 1.0;
  bool shuffle = true;
  double val_fraction = 0.2;

  ValueSource value_source = ValueSource::Oracle;
  std::filesystem::path checkpoint = "head.ckpt";  // relative to output_dir

  ConstraintKind control_kind = ConstraintKind::EqualTo;
  std::vector<int> control_targets;
  std::string control_prompt;  // empty: first prompt of the world
  TruncationConfig control_trunc;
  int control_max_len = 4096;

  std::vector<double> frontier_betas;
  std::vector<int> frontier_budgets;
  int frontier_rollouts = 256;
  std::string frontier_prompt;  // empty: first prompt of the world
  TruncationConfig frontier_trunc;
  int frontier_max_len = 4096;

  double td_threshold = 0.01;
  std::vector<double> precision_horizons;  // empty: powers of two up to 32768

  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";

  DiscountSpec discount() const;
  std::filesystem::path resolved_world() const;
  std::filesystem::path resolved_checkpoint() const;
};

std::uint64_t fnv1a64(std::string_view bytes);

ExperimentConfig parse_experiment_config(std::string_view text, const std::string& name);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

void cmd_rollout(const ExperimentConfig& config, int threads);
void cmd_train(const ExperimentConfig& config, int threads);
void cmd_control(const ExperimentConfig& config);
void cmd_frontier(const ExperimentConfig& config);
void cmd_analyze(const ExperimentConfig& config, int threads);
void cmd_gamma(const ExperimentConfig& config);

}  // namespace lenval
