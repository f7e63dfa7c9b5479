#include "lenval/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lenval/rng.hpp"

namespace lenval {

void validate_rule(const ControlRule& rule) {
  switch (rule.kind) {
    case RuleKind::EqualTo:
    case RuleKind::AtLeast:
      if (rule.target < 1) {
        throw std::invalid_argument(rule_name(rule.kind) + ": target must be >= 1");
      }
      break;
    case RuleKind::AtMost:
      if (rule.target < 0) throw std::invalid_argument("at_most: target must be >= 0");
      break;
    case RuleKind::Tilt:
      if (!(rule.beta <= 0.0)) throw std::invalid_argument("tilt: beta must be <= 0");
      break;
  }
}

std::string rule_name(RuleKind kind) {
  switch (kind) {
    case RuleKind::EqualTo: return "equal_to";
    case RuleKind::AtMost: return "at_most";
    case RuleKind::AtLeast: return "at_least";
    case RuleKind::Tilt: return "tilt";
  }
  throw std::invalid_argument("unknown rule kind");
}

CandidateSet build_candidates(const MarkovGenerator& gen, const ValueFn& value, int state,
                              const TruncationConfig& trunc) {
  if (state < 0 || state >= gen.num_states) {
    throw std::invalid_argument("build_candidates: state out of range");
  }
  if (gen.is_terminal(state)) {
    throw std::invalid_argument("build_candidates: state is terminal");
  }

  std::vector<Candidate> pool;
  const auto& row = gen.emission[static_cast<std::size_t>(state)];
  for (int token = 0; token < gen.vocab_size; ++token) {
    const double p = row[static_cast<std::size_t>(token)];
    if (p > 0.0) pool.push_back({token, p, 0.0});
  }
  std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
    if (a.base_prob != b.base_prob) return a.base_prob > b.base_prob;
    return a.token < b.token;
  });

  if (trunc.top_k > 0 && pool.size() > static_cast<std::size_t>(trunc.top_k)) {
    pool.resize(static_cast<std::size_t>(trunc.top_k));
  }

  if (trunc.top_p < 1.0) {
    if (!(trunc.top_p > 0.0)) throw std::invalid_argument("build_candidates: top_p must be > 0");
    double total = 0.0;
    for (const auto& c : pool) total += c.base_prob;
    double cum = 0.0;
    std::size_t keep = pool.size();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      cum += pool[i].base_prob / total;
      if (cum >= trunc.top_p) {
        keep = i + 1;
        break;
      }
    }
    pool.resize(keep);
  }

  if (trunc.min_p > 0.0) {
    if (trunc.min_p > 1.0) throw std::invalid_argument("build_candidates: min_p must be <= 1");
    const double floor = trunc.min_p * pool.front().base_prob;
    std::erase_if(pool, [floor](const Candidate& c) { return c.base_prob < floor; });
  }

  if (pool.empty()) throw std::invalid_argument("build_candidates: empty candidate set");

  double total = 0.0;
  for (const auto& c : pool) total += c.base_prob;
  CandidateSet out;
  out.entries.reserve(pool.size());
  for (auto& c : pool) {
    const int next = gen.transition[static_cast<std::size_t>(state)][static_cast<std::size_t>(c.token)];
    c.base_prob /= total;
    c.value = gen.is_terminal(next) ? 0.0 : value(next);
    out.entries.push_back(c);
  }
  return out;
}

CandidateSet build_candidates(const MarkovGenerator& gen, const ValueHead& head,
                              const FeatureMap& features, int state,
                              const TruncationConfig& trunc) {
  return build_candidates(gen, head_value_fn(head, features), state, trunc);
}

double target_value_schedule(const DiscountSpec& spec, int total_target, int step) {
  if (total_target < 1) throw std::invalid_argument("target_value_schedule: target must be >= 1");
  if (step < 0) throw std::invalid_argument("target_value_schedule: step must be >= 0");
  const std::int64_t remaining = std::max<std::int64_t>(total_target - step - 1, 0);
  return return_target(spec, remaining);
}

namespace {

// Shared scan: `better` returns true when a strictly improves on b.
template <typename Better>
int select_by(const CandidateSet& candidates, Better better) {
  if (candidates.entries.empty()) throw std::invalid_argument("selection from empty candidate set");
  const Candidate* best = &candidates.entries.front();
  for (const auto& c : candidates.entries) {
    if (better(c, *best)) best = &c;
  }
  return best->token;
}

bool tie_break(const Candidate& a, const Candidate& b) {
  if (a.base_prob != b.base_prob) return a.base_prob > b.base_prob;
  return a.token < b.token;
}

}  // namespace

int select_equal_to(const CandidateSet& candidates, double v_star) {
  return select_by(candidates, [v_star](const Candidate& a, const Candidate& b) {
    const double da = std::fabs(a.value - v_star);
    const double db = std::fabs(b.value - v_star);
    if (da != db) return da < db;
    return tie_break(a, b);
  });
}

int select_at_least(const CandidateSet& candidates) {
  return select_by(candidates, [](const Candidate& a, const Candidate& b) {
    if (a.value != b.value) return a.value < b.value;
    return tie_break(a, b);
  });
}

int select_at_most(const CandidateSet& candidates) {
  return select_by(candidates, [](const Candidate& a, const Candidate& b) {
    if (a.value != b.value) return a.value > b.value;
    return tie_break(a, b);
  });
}

std::vector<double> tilt_distribution(const CandidateSet& candidates, double beta) {
  if (!(beta <= 0.0)) throw std::invalid_argument("tilt_distribution: beta must be <= 0");
  if (candidates.entries.empty()) throw std::invalid_argument("tilt_distribution: empty candidate set");
  double max_exp = -std::numeric_limits<double>::infinity();
  for (const auto& c : candidates.entries) max_exp = std::max(max_exp, beta * c.value);
  std::vector<double> out;
  out.reserve(candidates.entries.size());
  double total = 0.0;
  for (const auto& c : candidates.entries) {
    const double w = c.base_prob * std::exp(beta * c.value - max_exp);
    out.push_back(w);
    total += w;
  }
  for (auto& w : out) w /= total;
  return out;
}

double kl_objective(std::span<const double> q, const CandidateSet& candidates, double beta) {
  if (!(beta < 0.0)) throw std::invalid_argument("kl_objective: beta must be < 0");
  if (q.size() != candidates.entries.size()) {
    throw std::invalid_argument("kl_objective: q size does not match candidate set");
  }
  double expected = 0.0;
  double kl = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] < 0.0) throw std::invalid_argument("kl_objective: q has negative mass");
    if (q[i] == 0.0) continue;
    const double p = candidates.entries[i].base_prob;
    if (p <= 0.0) throw std::invalid_argument("kl_objective: q support exceeds p support");
    expected += q[i] * candidates.entries[i].value;
    kl += q[i] * std::log(q[i] / p);
  }
  return expected - kl / beta;
}

DecodeResult run_controlled_decode(const MarkovGenerator& gen, const ValueFn& value,
                                   const ControlRule& rule, const DiscountSpec& spec,
                                   const std::string& prompt_id, std::uint64_t seed, int max_len,
                                   const TruncationConfig& trunc) {
  validate_rule(rule);
  if (max_len < 1) throw std::invalid_argument("run_controlled_decode: max_len must be >= 1");
  const auto prompt = gen.prompts.find(prompt_id);
  if (prompt == gen.prompts.end()) {
    throw std::invalid_argument("run_controlled_decode: unknown prompt '" + prompt_id + "'");
  }

  std::mt19937_64 rng(seed);
  DecodeResult result;
  Trajectory& traj = result.trajectory;
  traj.prompt_id = prompt_id;
  traj.seed = seed;
  int state = prompt->second;
  traj.states.push_back(state);

  for (int step = 0; step < max_len; ++step) {
    CandidateSet candidates = build_candidates(gen, value, state, trunc);

    if (rule.kind == RuleKind::AtLeast && step + 1 < rule.target) {
      CandidateSet floor;
      double total = 0.0;
      for (const auto& c : candidates.entries) {
        const int next = gen.transition[static_cast<std::size_t>(state)][static_cast<std::size_t>(c.token)];
        if (gen.is_terminal(next)) continue;
        floor.entries.push_back(c);
        total += c.base_prob;
      }
      if (!floor.entries.empty()) {
        for (auto& c : floor.entries) c.base_prob /= total;
        candidates = std::move(floor);
      }
    }

    int token = 0;
    switch (rule.kind) {
      case RuleKind::EqualTo:
        token = select_equal_to(candidates, target_value_schedule(spec, rule.target, step));
        break;
      case RuleKind::AtLeast:
        token = select_at_least(candidates);
        break;
      case RuleKind::AtMost:
        token = select_at_most(candidates);
        break;
      case RuleKind::Tilt: {
        const auto tilted = tilt_distribution(candidates, rule.beta);
        token = candidates.entries[sample_categorical(rng, tilted)].token;
        break;
      }
    }

    double chosen_value = 0.0;
    for (const auto& c : candidates.entries) {
      if (c.token == token) {
        chosen_value = c.value;
        break;
      }
    }
    result.chosen_values.push_back(chosen_value);

    state = gen.transition[static_cast<std::size_t>(state)][static_cast<std::size_t>(token)];
    traj.tokens.push_back(token);
    traj.states.push_back(state);
    if (gen.is_terminal(state)) break;
  }

  traj.length = static_cast<int>(traj.tokens.size());
  traj.truncated = !gen.is_terminal(state);
  return result;
}

DecodeResult run_controlled_decode(const MarkovGenerator& gen, const ValueHead& head,
                                   const FeatureMap& features, const ControlRule& rule,
                                   const DiscountSpec& spec, const std::string& prompt_id,
                                   std::uint64_t seed, int max_len, const TruncationConfig& trunc) {
  return run_controlled_decode(gen, head_value_fn(head, features), rule, spec, prompt_id, seed,
                               max_len, trunc);
}

}  // namespace lenval
