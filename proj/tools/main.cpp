#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "lenval/errors.hpp"
#include "lenval/experiment.hpp"

namespace {

struct Options {
  std::string config;
  std::string seed;  // empty: keep the config's seed
  std::string out;   // empty: keep the config's output_dir
  int threads = 1;
};

std::uint64_t parse_seed(const std::string& text) {
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
  // strtoull wraps negatives silently, so reject the sign up front.
  if (text.empty() || text.front() == '-' || end != text.c_str() + text.size() ||
      errno == ERANGE) {
    throw std::invalid_argument("--seed must be a nonnegative integer");
  }
  return v;
}

int run(const std::string& command, const Options& options) {
  lenval::ExperimentConfig config = lenval::load_experiment_config(options.config);
  if (!options.seed.empty()) config.seed = parse_seed(options.seed);
  if (!options.out.empty()) config.output_dir = options.out;

  if (command == "rollout") {
    lenval::cmd_rollout(config, options.threads);
  } else if (command == "train") {
    lenval::cmd_train(config, options.threads);
  } else if (command == "control") {
    lenval::cmd_control(config);
  } else if (command == "frontier") {
    lenval::cmd_frontier(config);
  } else if (command == "analyze") {
    lenval::cmd_analyze(config, options.threads);
  } else if (command == "gamma") {
    lenval::cmd_gamma(config);
  } else {
    throw std::invalid_argument("unknown command '" + command + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"length value model experiments"};
  app.require_subcommand(1);

  Options options;
  const struct {
    const char* name;
    const char* help;
  } commands[] = {
      {"rollout", "sample trajectories into trajectories.jsonl"},
      {"train", "fit the value head; writes head.ckpt and loss.csv"},
      {"control", "hard-constraint decoding report and metrics"},
      {"frontier", "tilt vs hard-budget frontier sweep"},
      {"analyze", "TD, shaping, precision, and weighting exports"},
      {"gamma", "print the discount selected for the configured l99"},
  };
  for (const auto& command : commands) {
    CLI::App* sub = app.add_subcommand(command.name, command.help);
    sub->add_option("--config", options.config, "experiment config file")->required();
    sub->add_option("--seed", options.seed, "override the config seed");
    sub->add_option("--out", options.out, "override the config output directory");
    sub->add_option("--threads", options.threads, "rollout worker threads")
        ->check(CLI::Range(1, 256));
  }

  CLI11_PARSE(app, argc, argv);

  try {
    return run(app.get_subcommands().front()->get_name(), options);
  } catch (const lenval::config_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
