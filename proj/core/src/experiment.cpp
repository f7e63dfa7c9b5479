#include "lenval/experiment.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lenval/analysis.hpp"
#include "lenval/errors.hpp"
#include "lenval/rng.hpp"

namespace lenval {

namespace {

using njson = nlohmann::ordered_json;

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

struct Entry {
  std::string value;
  int line = 0;
  mutable bool used = false;
};

// Sectioned key = value text; full-line '#' comments; strict about unknown
// sections/keys so typos fail loudly with their line number.
struct RawConfig {
  std::string name;
  std::map<std::string, std::map<std::string, Entry>> sections;

  const Entry* find(const std::string& section, const std::string& key) const {
    const auto sec = sections.find(section);
    if (sec == sections.end()) return nullptr;
    const auto entry = sec->second.find(key);
    if (entry == sec->second.end()) return nullptr;
    entry->second.used = true;
    return &entry->second;
  }

  std::int64_t parse_int(const Entry& entry) const {
    const std::string text = trim(entry.value);
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(text.c_str(), &end, 10);
    if (text.empty() || end != text.c_str() + text.size() || errno == ERANGE) {
      throw config_error(name, entry.line, "expected an integer, got '" + entry.value + "'");
    }
    return v;
  }

  double parse_double(const Entry& entry) const {
    const std::string text = trim(entry.value);
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v)) {
      throw config_error(name, entry.line, "expected a finite number, got '" + entry.value + "'");
    }
    return v;
  }

  bool parse_bool(const Entry& entry) const {
    const std::string text = trim(entry.value);
    if (text == "true" || text == "yes" || text == "1") return true;
    if (text == "false" || text == "no" || text == "0") return false;
    throw config_error(name, entry.line, "expected a boolean, got '" + entry.value + "'");
  }

  std::vector<Entry> split_list(const Entry& entry) const {
    std::vector<Entry> items;
    std::string_view rest = entry.value;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const std::string item = trim(rest.substr(0, comma));
      if (item.empty()) throw config_error(name, entry.line, "empty element in list");
      items.push_back({item, entry.line, true});
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    return items;
  }

  void check_all_used() const {
    const Entry* first = nullptr;
    std::string first_name;
    for (const auto& [section, keys] : sections) {
      for (const auto& [key, entry] : keys) {
        if (!entry.used && (first == nullptr || entry.line < first->line)) {
          first = &entry;
          first_name = section + "." + key;
        }
      }
    }
    if (first != nullptr) {
      throw config_error(name, first->line, "unknown key '" + first_name + "'");
    }
  }
};

const std::set<std::string> kKnownSections = {"world", "discount", "rollout", "train",
                                             "values", "control", "frontier", "analyze", "run"};

RawConfig parse_raw(std::string_view text, const std::string& name) {
  RawConfig raw;
  raw.name = name;
  std::istringstream in{std::string(text)};
  std::string line;
  std::string current;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    if (body.front() == '[') {
      if (body.back() != ']' || body.size() < 3) {
        throw config_error(name, line_no, "malformed section header");
      }
      current = trim(std::string_view(body).substr(1, body.size() - 2));
      if (!kKnownSections.contains(current)) {
        throw config_error(name, line_no, "unknown section '" + current + "'");
      }
      raw.sections[current];
      continue;
    }
    if (current.empty()) throw config_error(name, line_no, "key outside any section");
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw config_error(name, line_no, "expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw config_error(name, line_no, "empty key");
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (!raw.sections[current].emplace(key, Entry{value, line_no}).second) {
      throw config_error(name, line_no, "duplicate key '" + key + "'");
    }
  }
  return raw;
}

int checked_int(const RawConfig& raw, const Entry& entry, std::int64_t lo, std::int64_t hi,
                const char* what) {
  const std::int64_t v = raw.parse_int(entry);
  if (v < lo || v > hi) {
    throw config_error(raw.name, entry.line, std::string(what) + " out of range");
  }
  return static_cast<int>(v);
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (const char c : bytes) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ull;
  }
  return hash;
}

DiscountSpec ExperimentConfig::discount() const {
  if (l99) return select_gamma(*l99);
  if (gamma) return DiscountSpec(*gamma);
  throw config_error(config_name, 0, "discount section missing gamma or l99");
}

std::filesystem::path ExperimentConfig::resolved_world() const {
  if (world_path.empty()) throw config_error(config_name, 0, "world.path required");
  return world_path.is_absolute() ? world_path : config_dir / world_path;
}

std::filesystem::path ExperimentConfig::resolved_checkpoint() const {
  return checkpoint.is_absolute() ? checkpoint : output_dir / checkpoint;
}

ExperimentConfig parse_experiment_config(std::string_view text, const std::string& name) {
  const RawConfig raw = parse_raw(text, name);
  ExperimentConfig c;
  c.config_name = name;
  char digest[17];
  std::snprintf(digest, sizeof digest, "%016llx",
                static_cast<unsigned long long>(fnv1a64(text)));
  c.config_digest = digest;
  c.config_dir = ".";

  if (const Entry* e = raw.find("world", "path")) {
    if (e->value.empty()) throw config_error(name, e->line, "world.path must not be empty");
    c.world_path = e->value;
  }

  {
    const Entry* g = raw.find("discount", "gamma");
    const Entry* l = raw.find("discount", "l99");
    if (g != nullptr && l != nullptr) {
      throw config_error(name, l->line, "give exactly one of discount.gamma or discount.l99");
    }
    if (g != nullptr) {
      const double v = raw.parse_double(*g);
      if (!(v > 0.0) || !(v < 1.0)) {
        throw config_error(name, g->line, "discount.gamma must lie strictly in (0, 1)");
      }
      c.gamma = v;
    } else if (l != nullptr) {
      const std::int64_t v = raw.parse_int(*l);
      if (v < 1) throw config_error(name, l->line, "discount.l99 must be >= 1");
      c.l99 = v;
    }
  }

  if (const Entry* e = raw.find("rollout", "rollouts_per_prompt")) {
    c.rollouts_per_prompt = checked_int(raw, *e, 1, 1 << 24, "rollout.rollouts_per_prompt");
  }
  if (const Entry* e = raw.find("rollout", "max_len")) {
    c.rollout_max_len = checked_int(raw, *e, 1, 1 << 24, "rollout.max_len");
  }

  if (const Entry* e = raw.find("train", "hidden")) {
    c.hidden = checked_int(raw, *e, 1, 1 << 16, "train.hidden");
  }
  if (const Entry* e = raw.find("train", "learning_rate")) {
    c.learning_rate = raw.parse_double(*e);
    if (!(c.learning_rate > 0.0)) {
      throw config_error(name, e->line, "train.learning_rate must be > 0");
    }
  }
  if (const Entry* e = raw.find("train", "batch_size")) {
    c.batch_size = checked_int(raw, *e, 1, 1 << 24, "train.batch_size");
  }
  if (const Entry* e = raw.find("train", "epochs")) {
    c.epochs = checked_int(raw, *e, 1, 1 << 24, "train.epochs");
  }
  if (const Entry* e = raw.find("train", "averaging")) {
    const std::string v = trim(e->value);
    if (v == "token") {
      c.averaging = Averaging::TokenAvg;
    } else if (v == "trajectory") {
      c.averaging = Averaging::TrajectoryAvg;
    } else {
      throw config_error(name, e->line, "train.averaging must be 'token' or 'trajectory'");
    }
  }
  if (const Entry* e = raw.find("train", "gae_lambda")) {
    c.gae_lambda = raw.parse_double(*e);
    if (!(c.gae_lambda >= 0.0) || !(c.gae_lambda <= 1.0)) {
      throw config_error(name, e->line, "train.gae_lambda must lie in [0, 1]");
    }
  }
  if (const Entry* e = raw.find("train", "shuffle")) c.shuffle = raw.parse_bool(*e);
  if (const Entry* e = raw.find("train", "val_fraction")) {
    c.val_fraction = raw.parse_double(*e);
    if (!(c.val_fraction >= 0.0) || !(c.val_fraction < 1.0)) {
      throw config_error(name, e->line, "train.val_fraction must lie in [0, 1)");
    }
  }

  if (const Entry* e = raw.find("values", "source")) {
    const std::string v = trim(e->value);
    if (v == "oracle") {
      c.value_source = ValueSource::Oracle;
    } else if (v == "head") {
      c.value_source = ValueSource::Head;
    } else {
      throw config_error(name, e->line, "values.source must be 'oracle' or 'head'");
    }
  }
  if (const Entry* e = raw.find("values", "checkpoint")) {
    if (e->value.empty()) throw config_error(name, e->line, "values.checkpoint must not be empty");
    c.checkpoint = e->value;
  }

  if (const Entry* e = raw.find("control", "kind")) {
    const std::string v = trim(e->value);
    if (v == "equal_to") {
      c.control_kind = ConstraintKind::EqualTo;
    } else if (v == "at_most") {
      c.control_kind = ConstraintKind::AtMost;
    } else if (v == "at_least") {
      c.control_kind = ConstraintKind::AtLeast;
    } else if (v == "tilt") {
      throw config_error(name, e->line, "tilting runs through the frontier command");
    } else {
      throw config_error(name, e->line, "control.kind must be equal_to, at_most, or at_least");
    }
  }
  if (const Entry* e = raw.find("control", "targets")) {
    for (const Entry& item : raw.split_list(*e)) {
      c.control_targets.push_back(checked_int(raw, item, 1, 1 << 24, "control.targets"));
    }
  }
  if (const Entry* e = raw.find("control", "prompt")) c.control_prompt = trim(e->value);
  if (const Entry* e = raw.find("control", "top_k")) {
    c.control_trunc.top_k = checked_int(raw, *e, 0, 1 << 24, "control.top_k");
  }
  if (const Entry* e = raw.find("control", "top_p")) {
    c.control_trunc.top_p = raw.parse_double(*e);
    if (!(c.control_trunc.top_p > 0.0) || c.control_trunc.top_p > 1.0) {
      throw config_error(name, e->line, "control.top_p must lie in (0, 1]");
    }
  }
  if (const Entry* e = raw.find("control", "min_p")) {
    c.control_trunc.min_p = raw.parse_double(*e);
    if (c.control_trunc.min_p < 0.0 || c.control_trunc.min_p > 1.0) {
      throw config_error(name, e->line, "control.min_p must lie in [0, 1]");
    }
  }
  if (const Entry* e = raw.find("control", "max_len")) {
    c.control_max_len = checked_int(raw, *e, 1, 1 << 24, "control.max_len");
  }

  if (const Entry* e = raw.find("frontier", "betas")) {
    for (const Entry& item : raw.split_list(*e)) {
      const double beta = raw.parse_double(item);
      if (!(beta <= 0.0)) throw config_error(name, item.line, "frontier.betas must be <= 0");
      c.frontier_betas.push_back(beta);
    }
  }
  if (const Entry* e = raw.find("frontier", "budgets")) {
    for (const Entry& item : raw.split_list(*e)) {
      c.frontier_budgets.push_back(checked_int(raw, item, 1, 1 << 24, "frontier.budgets"));
    }
  }
  if (const Entry* e = raw.find("frontier", "rollouts")) {
    c.frontier_rollouts = checked_int(raw, *e, 1, 1 << 24, "frontier.rollouts");
  }
  if (const Entry* e = raw.find("frontier", "prompt")) c.frontier_prompt = trim(e->value);
  if (const Entry* e = raw.find("frontier", "top_k")) {
    c.frontier_trunc.top_k = checked_int(raw, *e, 0, 1 << 24, "frontier.top_k");
  }
  if (const Entry* e = raw.find("frontier", "top_p")) {
    c.frontier_trunc.top_p = raw.parse_double(*e);
    if (!(c.frontier_trunc.top_p > 0.0) || c.frontier_trunc.top_p > 1.0) {
      throw config_error(name, e->line, "frontier.top_p must lie in (0, 1]");
    }
  }
  if (const Entry* e = raw.find("frontier", "min_p")) {
    c.frontier_trunc.min_p = raw.parse_double(*e);
    if (c.frontier_trunc.min_p < 0.0 || c.frontier_trunc.min_p > 1.0) {
      throw config_error(name, e->line, "frontier.min_p must lie in [0, 1]");
    }
  }
  if (const Entry* e = raw.find("frontier", "max_len")) {
    c.frontier_max_len = checked_int(raw, *e, 1, 1 << 24, "frontier.max_len");
  }

  if (const Entry* e = raw.find("analyze", "threshold")) {
    c.td_threshold = raw.parse_double(*e);
    if (c.td_threshold < 0.0) throw config_error(name, e->line, "analyze.threshold must be >= 0");
  }
  if (const Entry* e = raw.find("analyze", "horizons")) {
    for (const Entry& item : raw.split_list(*e)) {
      const double horizon = raw.parse_double(item);
      if (!(horizon > 0.0)) throw config_error(name, item.line, "analyze.horizons must be > 0");
      c.precision_horizons.push_back(horizon);
    }
  }

  if (const Entry* e = raw.find("run", "seed")) {
    const std::string text_value = trim(e->value);
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(text_value.c_str(), &end, 10);
    // strtoull wraps negatives silently, so reject the sign up front.
    if (text_value.empty() || text_value.front() == '-' ||
        end != text_value.c_str() + text_value.size() || errno == ERANGE) {
      throw config_error(name, e->line, "run.seed must be a nonnegative integer");
    }
    c.seed = v;
  }
  if (const Entry* e = raw.find("run", "output_dir")) {
    if (e->value.empty()) throw config_error(name, e->line, "run.output_dir must not be empty");
    c.output_dir = e->value;
  }

  raw.check_all_used();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error(path.string(), 0, "cannot open config");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  ExperimentConfig c = parse_experiment_config(buffer.str(), path.string());
  c.config_dir = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  if (!c.world_path.empty() && !std::filesystem::exists(c.resolved_world())) {
    throw config_error(path.string(), 0,
                       "world file not found: " + c.resolved_world().string());
  }
  return c;
}

namespace {

#if defined(__GNUC__)
__attribute__((format(printf, 2, 3)))
#endif
void appendf(std::string& out, const char* fmt, ...) {
  char buffer[256];
  va_list args;
  va_start(args, fmt);
  const int n = std::vsnprintf(buffer, sizeof buffer, fmt, args);
  va_end(args);
  if (n > 0) out.append(buffer, std::min(static_cast<std::size_t>(n), sizeof buffer - 1));
}

std::string header_line(const ExperimentConfig& config, const char* command) {
  std::string out;
  appendf(out, "# lenval %s config_digest=%s seed=%llu\n", command, config.config_digest.c_str(),
          static_cast<unsigned long long>(config.seed));
  return out;
}

njson header_object(const ExperimentConfig& config, const char* command) {
  njson header;
  header["_header"] = njson{{"command", command},
                            {"config_digest", config.config_digest},
                            {"seed", config.seed}};
  return header;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw config_error(path.string(), 0, "cannot open output file");
  out << content;
  if (!out.good()) throw config_error(path.string(), 0, "failed writing output file");
}

// Values backing decode/analysis: the exact oracle, or a trained checkpoint.
ValueFn make_value_fn(const ExperimentConfig& config, const MarkovGenerator& gen,
                      const DiscountSpec& spec) {
  if (config.value_source == ValueSource::Oracle) {
    return oracle_value_fn(exact_value(gen, spec));
  }
  auto head = std::make_shared<ValueHead>(load_checkpoint(config.resolved_checkpoint()));
  const FeatureMap features{gen.num_states};
  if (head->input_dim != features.dimension()) {
    throw config_error(config.resolved_checkpoint().string(), 0,
                       "checkpoint input dimension does not match the world");
  }
  return [head, features](int state) { return predict_state(*head, features, state); };
}

int percentile(const std::vector<int>& sorted, double q) {
  const auto n = static_cast<double>(sorted.size());
  const auto index = static_cast<std::size_t>(std::max(std::ceil(q * n) - 1.0, 0.0));
  return sorted[std::min(index, sorted.size() - 1)];
}

RuleKind rule_kind_for(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::EqualTo: return RuleKind::EqualTo;
    case ConstraintKind::AtMost: return RuleKind::AtMost;
    case ConstraintKind::AtLeast: return RuleKind::AtLeast;
  }
  throw std::invalid_argument("unknown constraint kind");
}

std::string pick_prompt(const MarkovGenerator& gen, const std::string& requested,
                        const ExperimentConfig& config, const char* key) {
  if (!requested.empty()) {
    if (!gen.prompts.contains(requested)) {
      throw config_error(config.config_name, 0,
                         std::string(key) + ": unknown prompt '" + requested + "'");
    }
    return requested;
  }
  return gen.prompts.begin()->first;
}

}  // namespace

void cmd_rollout(const ExperimentConfig& config, int threads) {
  const MarkovGenerator gen = load_world(config.resolved_world());
  const DiscountSpec spec = config.discount();
  const Dataset dataset = build_dataset(gen, spec, config.rollouts_per_prompt, config.seed,
                                        config.rollout_max_len, threads);

  std::string out = header_object(config, "rollout").dump();
  out += '\n';
  std::vector<int> lengths;
  lengths.reserve(dataset.trajectories.size());
  for (const Trajectory& traj : dataset.trajectories) {
    njson row;
    row["prompt"] = traj.prompt_id;
    row["seed"] = traj.seed;
    row["length"] = traj.length;
    row["truncated"] = traj.truncated;
    row["tokens"] = traj.tokens;
    row["states"] = traj.states;
    out += row.dump();
    out += '\n';
    lengths.push_back(traj.length);
  }
  write_file(config.output_dir / "trajectories.jsonl", out);

  std::sort(lengths.begin(), lengths.end());
  double mean = 0.0;
  for (int length : lengths) mean += static_cast<double>(length);
  mean /= static_cast<double>(lengths.size());
  std::printf("rollouts=%zu dropped_truncated=%d mean_length=%.9g p50=%d p90=%d p99=%d\n",
              lengths.size(), dataset.truncated_dropped, mean, percentile(lengths, 0.50),
              percentile(lengths, 0.90), percentile(lengths, 0.99));
}

void cmd_train(const ExperimentConfig& config, int threads) {
  const MarkovGenerator gen = load_world(config.resolved_world());
  const DiscountSpec spec = config.discount();
  const Dataset dataset = build_dataset(gen, spec, config.rollouts_per_prompt, config.seed,
                                        config.rollout_max_len, threads);
  std::vector<TrainTraj> all = make_train_data(dataset);

  // Deterministic validation split off a fixed permutation.
  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 split_rng(config.seed + 0x76616cull);
  deterministic_shuffle(order, split_rng);
  auto n_val = static_cast<std::size_t>(
      std::llround(config.val_fraction * static_cast<double>(all.size())));
  if (n_val >= all.size()) n_val = all.size() - 1;
  std::vector<TrainTraj> val_data, train_data;
  val_data.reserve(n_val);
  train_data.reserve(all.size() - n_val);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? val_data : train_data).push_back(std::move(all[order[i]]));
  }

  const FeatureMap features{gen.num_states};
  ValueHead head(features.dimension(), config.hidden, config.seed);
  TrainConfig tc;
  tc.learning_rate = config.learning_rate;
  tc.batch_size = config.batch_size;
  tc.epochs = config.epochs;
  tc.averaging = config.averaging;
  tc.gae_lambda = config.gae_lambda;
  tc.seed = config.seed;
  tc.shuffle = config.shuffle;
  const TrainResult result = train(head, features, spec, std::move(train_data), val_data, tc);

  write_file(config.output_dir / "head.ckpt", header_line(config, "train") + dump_checkpoint(head));

  std::string csv = header_line(config, "train");
  csv += "epoch,train_loss,val_loss\n";
  for (std::size_t epoch = 0; epoch < result.train_loss.size(); ++epoch) {
    appendf(csv, "%zu,%.17g,%.17g\n", epoch, result.train_loss[epoch], result.val_loss[epoch]);
  }
  write_file(config.output_dir / "loss.csv", csv);

  std::printf("epochs=%d train_loss=%.17g val_loss=%.17g\n", config.epochs,
              result.train_loss.back(), result.val_loss.back());
}

void cmd_control(const ExperimentConfig& config) {
  if (config.control_targets.empty()) {
    throw config_error(config.config_name, 0, "control.targets required");
  }
  const MarkovGenerator gen = load_world(config.resolved_world());
  const DiscountSpec spec = config.discount();
  const ValueFn value = make_value_fn(config, gen, spec);
  const std::string prompt = pick_prompt(gen, config.control_prompt, config, "control.prompt");

  std::string report = header_object(config, "control").dump();
  report += '\n';
  std::string csv = header_line(config, "control");
  csv += "kind,target,observed,ld,ls\n";
  for (const int target : config.control_targets) {
    ControlRule rule;
    rule.kind = rule_kind_for(config.control_kind);
    rule.target = target;
    const DecodeResult run = run_controlled_decode(gen, value, rule, spec, prompt, config.seed,
                                                   config.control_max_len, config.control_trunc);
    const double ld = length_deviation(run.trajectory.length, target);
    const double ls = length_score(ld, config.control_kind);

    njson row;
    row["rule"] = rule_name(rule.kind);
    row["target"] = target;
    row["prompt"] = prompt;
    row["length"] = run.trajectory.length;
    row["truncated"] = run.trajectory.truncated;
    row["chosen_values"] = run.chosen_values;
    report += row.dump();
    report += '\n';
    appendf(csv, "%s,%d,%d,%.9g,%.9g\n", constraint_name(config.control_kind).c_str(), target,
            run.trajectory.length, ld, ls);
  }
  write_file(config.output_dir / "decode_report.jsonl", report);
  write_file(config.output_dir / "control_metrics.csv", csv);
  std::printf("control kind=%s targets=%zu prompt=%s\n",
              constraint_name(config.control_kind).c_str(), config.control_targets.size(),
              prompt.c_str());
}

void cmd_frontier(const ExperimentConfig& config) {
  if (config.frontier_betas.empty() && config.frontier_budgets.empty()) {
    throw config_error(config.config_name, 0, "frontier.betas or frontier.budgets required");
  }
  const MarkovGenerator gen = load_world(config.resolved_world());
  const DiscountSpec spec = config.discount();
  const ValueFn value = make_value_fn(config, gen, spec);
  const std::string prompt = pick_prompt(gen, config.frontier_prompt, config, "frontier.prompt");

  const std::vector<FrontierPoint> points =
      frontier_sweep(gen, value, spec, prompt, config.frontier_betas, config.frontier_budgets,
                     config.frontier_rollouts, config.seed, config.frontier_max_len,
                     config.frontier_trunc);

  std::string csv = header_line(config, "frontier");
  csv += "method,beta,budget,pass_rate,avg_truncated_length\n";
  for (const FrontierPoint& point : points) {
    if (point.method == "tilt") {
      appendf(csv, "tilt,%.9g,,%.9g,%.9g\n", point.beta, point.pass_rate,
              point.avg_truncated_length);
    } else {
      appendf(csv, "hard_budget,,%d,%.9g,%.9g\n", point.budget, point.pass_rate,
              point.avg_truncated_length);
    }
  }
  write_file(config.output_dir / "frontier.csv", csv);
  std::printf("frontier points=%zu prompt=%s rollouts=%d\n", points.size(), prompt.c_str(),
              config.frontier_rollouts);
}

void cmd_analyze(const ExperimentConfig& config, int threads) {
  const MarkovGenerator gen = load_world(config.resolved_world());
  const DiscountSpec spec = config.discount();
  const ValueFn value = make_value_fn(config, gen, spec);
  const Dataset dataset = build_dataset(gen, spec, config.rollouts_per_prompt, config.seed,
                                        config.rollout_max_len, threads);

  std::vector<std::vector<double>> values(dataset.trajectories.size());
  for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
    const Trajectory& traj = dataset.trajectories[i];
    values[i].reserve(static_cast<std::size_t>(traj.length));
    for (int t = 0; t < traj.length; ++t) {
      values[i].push_back(value(traj.states[static_cast<std::size_t>(t)]));
    }
  }

  {
    const LengthTokenStats stats =
        length_token_stats(dataset.trajectories, values, spec, config.td_threshold);
    std::string csv = header_line(config, "analyze");
    appendf(csv, "# threshold=%.9g total_exceedances=%lld\n", stats.threshold,
            static_cast<long long>(stats.total()));
    csv += "token,pos_count,neg_count\n";
    for (const auto& [token, counts] : stats.per_token) {
      appendf(csv, "%d,%lld,%lld\n", token, static_cast<long long>(counts.positive),
              static_cast<long long>(counts.negative));
    }
    write_file(config.output_dir / "td_stats.csv", csv);
  }

  {
    std::string rows;
    double max_abs = 0.0;
    for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
      std::vector<double> potentials = values[i];
      potentials.push_back(0.0);  // terminal potential
      const TelescopingCheck check = telescoping_check(potentials, spec);
      max_abs = std::max(max_abs, std::fabs(check.residual));
      appendf(rows, "%zu,%zu,%.17g,%.17g,%.17g\n", i, potentials.size() - 1, check.lhs, check.rhs,
              check.residual);
    }
    std::string csv = header_line(config, "analyze");
    appendf(csv, "# max_abs_residual=%.17g\n", max_abs);
    csv += "trajectory,steps,lhs,rhs,residual\n";
    csv += rows;
    write_file(config.output_dir / "shaping.csv", csv);
  }

  {
    std::vector<double> horizons = config.precision_horizons;
    if (horizons.empty()) {
      for (int p = 0; p <= 15; ++p) horizons.push_back(static_cast<double>(1 << p));
    }
    const std::vector<double> levels = default_precision_levels();
    std::string csv = header_line(config, "analyze");
    csv += "k,z,l,f\n";
    for (const PrecisionPoint& point : precision_curve(spec, levels, horizons)) {
      appendf(csv, "%.9g,%.9g,%.9g,%.9g\n", point.k, point.z, point.l, point.f);
    }
    write_file(config.output_dir / "precision.csv", csv);
  }

  {
    std::string csv = header_line(config, "analyze");
    csv += "distribution,gamma,token_avg,traj_avg\n";
    const std::vector<std::pair<int, double>> fixture = {{1, 0.5}, {3, 0.5}};
    const DiscountSpec half(0.5);
    const WeightingTargets fixture_targets = weighting_bias_demo(fixture, half);
    appendf(csv, "fixture_1_3,%.9g,%.9g,%.9g\n", half.gamma(), fixture_targets.token_avg,
            fixture_targets.traj_avg);

    std::map<int, std::int64_t> histogram;
    for (const Trajectory& traj : dataset.trajectories) ++histogram[traj.length];
    std::vector<std::pair<int, double>> empirical;
    empirical.reserve(histogram.size());
    const auto total = static_cast<double>(dataset.trajectories.size());
    for (const auto& [length, count] : histogram) {
      empirical.emplace_back(length, static_cast<double>(count) / total);
    }
    const WeightingTargets world_targets = weighting_bias_demo(empirical, spec);
    appendf(csv, "world_empirical,%.9g,%.9g,%.9g\n", spec.gamma(), world_targets.token_avg,
            world_targets.traj_avg);
    write_file(config.output_dir / "weighting.csv", csv);
  }

  std::printf("analyze trajectories=%zu threshold=%.9g\n", dataset.trajectories.size(),
              config.td_threshold);
}

void cmd_gamma(const ExperimentConfig& config) {
  if (!config.l99) throw config_error(config.config_name, 0, "gamma command requires discount.l99");
  const DiscountSpec spec = config.discount();
  std::string out = header_line(config, "gamma");
  appendf(out, "l99=%lld\ngamma=%.17g\n", static_cast<long long>(*config.l99), spec.gamma());
  write_file(config.output_dir / "gamma.txt", out);
  std::printf("gamma=%.17g\n", spec.gamma());
}

}  // namespace lenval
