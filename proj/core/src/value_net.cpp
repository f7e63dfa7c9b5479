#include "lenval/value_net.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lenval/errors.hpp"
#include "lenval/rng.hpp"

namespace lenval {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double silu(double z) { return z * sigmoid(z); }

double silu_grad(double z) {
  const double s = sigmoid(z);
  return s * (1.0 + z * (1.0 - s));
}

// Forward pass storing the pre-activations needed by backprop.
struct Forward {
  std::vector<double> z1;
  std::vector<double> h;
  double z = 0.0;
  double v = 0.0;
};

void forward_pass(const ValueHead& head, std::span<const double> features, Forward& fwd) {
  const auto hidden = static_cast<std::size_t>(head.hidden);
  const auto dim = static_cast<std::size_t>(head.input_dim);
  fwd.z1.resize(hidden);
  fwd.h.resize(hidden);
  double z = head.b2;
  for (std::size_t j = 0; j < hidden; ++j) {
    double acc = head.b1[j];
    const double* row = head.w1.data() + j * dim;
    for (std::size_t k = 0; k < dim; ++k) acc += row[k] * features[k];
    fwd.z1[j] = acc;
    fwd.h[j] = silu(acc);
    z += head.w2[j] * fwd.h[j];
  }
  fwd.z = z;
  fwd.v = -sigmoid(z);
}

void check_rows(const std::vector<std::vector<double>>& predictions,
                const std::vector<std::vector<double>>& targets) {
  if (predictions.size() != targets.size()) {
    throw std::invalid_argument("loss: prediction/target trajectory counts differ");
  }
  if (predictions.empty()) throw std::invalid_argument("loss: empty batch");
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != targets[i].size()) {
      throw std::invalid_argument("loss: prediction/target lengths differ");
    }
    if (predictions[i].empty()) throw std::invalid_argument("loss: empty trajectory row");
  }
}

}  // namespace

std::vector<double> FeatureMap::encode(int state, int step) const {
  if (num_states < 1) throw std::invalid_argument("FeatureMap: num_states must be positive");
  if (state < 0 || state >= num_states) throw std::invalid_argument("FeatureMap: state out of range");
  if (step < 0) throw std::invalid_argument("FeatureMap: step must be >= 0");
  std::vector<double> out(static_cast<std::size_t>(dimension()), 0.0);
  out[static_cast<std::size_t>(state)] = 1.0;
  if (include_position) {
    const int horizon = std::max(position_horizon, 1);
    out.back() = static_cast<double>(std::min(step, horizon)) / static_cast<double>(horizon);
  }
  return out;
}

ValueHead::ValueHead(int input_dim_, int hidden_, std::uint64_t seed)
    : input_dim(input_dim_), hidden(hidden_) {
  if (input_dim < 1 || hidden < 1) {
    throw std::invalid_argument("ValueHead: dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  auto draw = [&rng](double bound) { return (2.0 * uniform_unit(rng) - 1.0) * bound; };
  const double a1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  w1.resize(static_cast<std::size_t>(hidden) * static_cast<std::size_t>(input_dim));
  b1.resize(static_cast<std::size_t>(hidden));
  w2.resize(static_cast<std::size_t>(hidden));
  for (auto& w : w1) w = draw(a1);
  for (auto& b : b1) b = draw(a1);
  for (auto& w : w2) w = draw(a2);
  b2 = draw(a2);
}

double predict(const ValueHead& head, std::span<const double> features) {
  if (features.size() != static_cast<std::size_t>(head.input_dim)) {
    throw std::invalid_argument("predict: feature dimension mismatch");
  }
  Forward fwd;
  forward_pass(head, features, fwd);
  return fwd.v;
}

double predict_state(const ValueHead& head, const FeatureMap& features, int state, int step) {
  return predict(head, features.encode(state, step));
}

ValueFn head_value_fn(const ValueHead& head, const FeatureMap& features) {
  return [&head, features](int state) { return predict_state(head, features, state); };
}

ValueFn oracle_value_fn(const ValueOracle& oracle) {
  return [values = oracle.value](int state) { return values.at(static_cast<std::size_t>(state)); };
}

double loss_token_avg(const std::vector<std::vector<double>>& predictions,
                      const std::vector<std::vector<double>>& targets) {
  check_rows(predictions, targets);
  double sum = 0.0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    for (std::size_t t = 0; t < predictions[i].size(); ++t) {
      const double e = predictions[i][t] - targets[i][t];
      sum += e * e;
    }
    tokens += predictions[i].size();
  }
  return sum / static_cast<double>(tokens);
}

double loss_trajectory_avg(const std::vector<std::vector<double>>& predictions,
                           const std::vector<std::vector<double>>& targets) {
  check_rows(predictions, targets);
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    double traj = 0.0;
    for (std::size_t t = 0; t < predictions[i].size(); ++t) {
      const double e = predictions[i][t] - targets[i][t];
      traj += e * e;
    }
    sum += traj / static_cast<double>(predictions[i].size());
  }
  return sum / static_cast<double>(predictions.size());
}

std::vector<double> gae_targets(std::span<const double> values, const DiscountSpec& spec,
                                double lambda) {
  if (values.size() < 2) {
    throw std::invalid_argument("gae_targets: need values for t = 0..L with L >= 1");
  }
  if (!(lambda >= 0.0) || !(lambda <= 1.0)) {
    throw std::invalid_argument("gae_targets: lambda must lie in [0, 1]");
  }
  if (values.back() != 0.0) {
    throw std::invalid_argument("gae_targets: terminal value must be pinned at 0");
  }
  const std::size_t steps = values.size() - 1;
  const double gamma = spec.gamma();
  const double reward = -(1.0 - gamma);
  std::vector<double> targets(steps);
  double next_target = 0.0;  // target beyond the last step coincides with the terminal value
  for (std::size_t t = steps; t-- > 0;) {
    const double blended = (1.0 - lambda) * values[t + 1] + lambda * next_target;
    next_target = reward + gamma * blended;
    targets[t] = next_target;
  }
  return targets;
}

std::vector<TrainTraj> make_train_data(const Dataset& dataset) {
  std::vector<TrainTraj> out;
  out.reserve(dataset.trajectories.size());
  for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
    const auto& traj = dataset.trajectories[i];
    const auto& schedule = dataset.schedules[i].values;
    TrainTraj row;
    row.prompt_id = traj.prompt_id;
    row.states.assign(traj.states.begin(), traj.states.end() - 1);
    row.targets.assign(schedule.begin(), schedule.end() - 1);
    out.push_back(std::move(row));
  }
  return out;
}

Gradients gradients(const ValueHead& head, const FeatureMap& features,
                    std::span<const TrainTraj> batch, Averaging averaging) {
  if (batch.empty()) throw std::invalid_argument("gradients: empty batch");
  if (features.dimension() != head.input_dim) {
    throw std::invalid_argument("gradients: feature dimension mismatch");
  }
  std::size_t total_tokens = 0;
  for (const auto& traj : batch) {
    if (traj.states.empty() || traj.states.size() != traj.targets.size()) {
      throw std::invalid_argument("gradients: malformed training trajectory");
    }
    total_tokens += traj.states.size();
  }

  Gradients grad;
  grad.w1.assign(head.w1.size(), 0.0);
  grad.b1.assign(head.b1.size(), 0.0);
  grad.w2.assign(head.w2.size(), 0.0);
  grad.b2 = 0.0;

  const auto hidden = static_cast<std::size_t>(head.hidden);
  const auto dim = static_cast<std::size_t>(head.input_dim);
  Forward fwd;
  for (const auto& traj : batch) {
    const double weight = averaging == Averaging::TokenAvg
                              ? 1.0 / static_cast<double>(total_tokens)
                              : 1.0 / (static_cast<double>(batch.size()) *
                                       static_cast<double>(traj.states.size()));
    for (std::size_t t = 0; t < traj.states.size(); ++t) {
      const auto f = features.encode(traj.states[t], static_cast<int>(t));
      forward_pass(head, f, fwd);
      const double s = sigmoid(fwd.z);
      const double dloss_dv = 2.0 * weight * (fwd.v - traj.targets[t]);
      const double gz = dloss_dv * (-s * (1.0 - s));
      grad.b2 += gz;
      for (std::size_t j = 0; j < hidden; ++j) {
        grad.w2[j] += gz * fwd.h[j];
        const double gz1 = gz * head.w2[j] * silu_grad(fwd.z1[j]);
        grad.b1[j] += gz1;
        double* row = grad.w1.data() + j * dim;
        for (std::size_t k = 0; k < dim; ++k) row[k] += gz1 * f[k];
      }
    }
  }
  return grad;
}

namespace {

double dataset_loss(const ValueHead& head, const FeatureMap& features,
                    std::span<const TrainTraj> data, Averaging averaging) {
  std::vector<std::vector<double>> predictions(data.size());
  std::vector<std::vector<double>> targets(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    predictions[i].reserve(data[i].states.size());
    for (std::size_t t = 0; t < data[i].states.size(); ++t) {
      predictions[i].push_back(predict_state(head, features, data[i].states[t], static_cast<int>(t)));
    }
    targets[i] = data[i].targets;
  }
  return averaging == Averaging::TokenAvg ? loss_token_avg(predictions, targets)
                                          : loss_trajectory_avg(predictions, targets);
}

void refresh_gae_targets(const ValueHead& head, const FeatureMap& features,
                         const DiscountSpec& spec, double lambda,
                         std::vector<TrainTraj>& data) {
  std::vector<double> values;
  for (auto& traj : data) {
    values.resize(traj.states.size() + 1);
    for (std::size_t t = 0; t < traj.states.size(); ++t) {
      values[t] = predict_state(head, features, traj.states[t], static_cast<int>(t));
    }
    values.back() = 0.0;
    traj.targets = gae_targets(values, spec, lambda);
  }
}

}  // namespace

TrainResult train(ValueHead& head, const FeatureMap& features, const DiscountSpec& spec,
                  std::vector<TrainTraj> train_data, const std::vector<TrainTraj>& val_data,
                  const TrainConfig& config) {
  if (train_data.empty()) throw std::invalid_argument("train: empty training set");
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
    throw std::invalid_argument("train: learning_rate must be positive and finite");
  }
  if (config.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (config.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (!(config.gae_lambda >= 0.0) || !(config.gae_lambda <= 1.0)) {
    throw std::invalid_argument("train: gae_lambda must lie in [0, 1]");
  }

  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (!config.shuffle) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return train_data[a].prompt_id < train_data[b].prompt_id;
    });
  }

  std::mt19937_64 rng(config.seed);
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  TrainResult result;
  result.train_loss.reserve(static_cast<std::size_t>(config.epochs));
  result.val_loss.reserve(static_cast<std::size_t>(config.epochs));

  std::vector<TrainTraj> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.gae_lambda < 1.0) {
      refresh_gae_targets(head, features, spec, config.gae_lambda, train_data);
    }
    if (config.shuffle) deterministic_shuffle(order, rng);

    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t end = std::min(order.size(), begin + batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(train_data[order[i]]);
      const Gradients grad = gradients(head, features, batch, config.averaging);
      const double lr = config.learning_rate;
      for (std::size_t i = 0; i < head.w1.size(); ++i) head.w1[i] -= lr * grad.w1[i];
      for (std::size_t i = 0; i < head.b1.size(); ++i) head.b1[i] -= lr * grad.b1[i];
      for (std::size_t i = 0; i < head.w2.size(); ++i) head.w2[i] -= lr * grad.w2[i];
      head.b2 -= lr * grad.b2;
    }

    const double train_loss = dataset_loss(head, features, train_data, config.averaging);
    const double val_loss = val_data.empty()
                                ? train_loss
                                : dataset_loss(head, features, val_data, config.averaging);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
      throw numeric_error("train: loss diverged at epoch " + std::to_string(epoch));
    }
    result.train_loss.push_back(train_loss);
    result.val_loss.push_back(val_loss);
  }
  return result;
}

namespace {

void append_hex_row(std::string& out, const char* label, std::span<const double> values) {
  out += label;
  char buffer[48];
  for (double v : values) {
    std::snprintf(buffer, sizeof buffer, " %a", v);
    out += buffer;
  }
  out += '\n';
}

}  // namespace

std::string dump_checkpoint(const ValueHead& head) {
  std::string out = "lenval-head v1\n";
  out += "dims " + std::to_string(head.input_dim) + " " + std::to_string(head.hidden) + "\n";
  append_hex_row(out, "w1", head.w1);
  append_hex_row(out, "b1", head.b1);
  append_hex_row(out, "w2", head.w2);
  append_hex_row(out, "b2", std::span<const double>(&head.b2, 1));
  return out;
}

ValueHead parse_checkpoint(std::string_view text, const std::string& name) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  // '#' lines let emitted checkpoints carry provenance headers.
  auto next_line = [&]() -> std::string& {
    do {
      if (!std::getline(in, line)) throw config_error(name, line_no, "unexpected end of checkpoint");
      ++line_no;
    } while (line.empty() || line.front() == '#');
    return line;
  };

  if (next_line() != "lenval-head v1") {
    throw config_error(name, 1, "not a lenval-head v1 checkpoint");
  }

  ValueHead head;
  {
    std::istringstream dims(next_line());
    std::string tag;
    if (!(dims >> tag >> head.input_dim >> head.hidden) || tag != "dims" || head.input_dim < 1 ||
        head.hidden < 1) {
      throw config_error(name, line_no, "malformed dims line");
    }
  }

  auto read_row = [&](const char* label, std::span<double> out) {
    std::istringstream row(next_line());
    std::string tag;
    row >> tag;
    if (tag != label) throw config_error(name, line_no, std::string("expected row '") + label + "'");
    std::string value;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!(row >> value)) throw config_error(name, line_no, std::string("row '") + label + "' too short");
      char* end = nullptr;
      out[i] = std::strtod(value.c_str(), &end);
      if (end == value.c_str() || *end != '\0') {
        throw config_error(name, line_no, "invalid value '" + value + "'");
      }
    }
    std::string extra;
    if (row >> extra) throw config_error(name, line_no, std::string("row '") + label + "' too long");
  };

  head.w1.resize(static_cast<std::size_t>(head.input_dim) * static_cast<std::size_t>(head.hidden));
  head.b1.resize(static_cast<std::size_t>(head.hidden));
  head.w2.resize(static_cast<std::size_t>(head.hidden));
  read_row("w1", head.w1);
  read_row("b1", head.b1);
  read_row("w2", head.w2);
  read_row("b2", std::span<double>(&head.b2, 1));
  return head;
}

void save_checkpoint(const ValueHead& head, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw config_error(path.string(), 0, "cannot open checkpoint for writing");
  out << dump_checkpoint(head);
  if (!out.good()) throw config_error(path.string(), 0, "failed writing checkpoint");
}

ValueHead load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error(path.string(), 0, "cannot open checkpoint");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str(), path.string());
}

}  // namespace lenval
