#include "lenval/markov.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <sstream>
#include <thread>

#include "lenval/errors.hpp"
#include "lenval/rng.hpp"

namespace lenval {

namespace {

constexpr double kRowSumTolerance = 1e-12;

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream in(line);
  std::string field;
  while (in >> field) fields.push_back(field);
  return fields;
}

bool parse_int(const std::string& text, long long& out) {
  char* end = nullptr;
  errno = 0;
  out = std::strtoll(text.c_str(), &end, 10);
  return errno == 0 && end != nullptr && *end == '\0' && end != text.c_str();
}

bool parse_prob(const std::string& text, double& out) {
  char* end = nullptr;
  errno = 0;
  out = std::strtod(text.c_str(), &end);
  return errno == 0 && end != nullptr && *end == '\0' && end != text.c_str() && std::isfinite(out);
}

struct WorldError {
  std::string name;
  [[noreturn]] void at(int line, const std::string& message) const {
    throw config_error(name, line, message);
  }
};

// Backward reachability from the terminal set over positive-probability edges.
std::vector<std::uint8_t> can_reach_terminal(const MarkovGenerator& gen) {
  const auto n = static_cast<std::size_t>(gen.num_states);
  std::vector<std::vector<int>> reverse_edges(n);
  for (int s = 0; s < gen.num_states; ++s) {
    if (gen.is_terminal(s)) continue;
    for (int x = 0; x < gen.vocab_size; ++x) {
      if (gen.emission[s][x] > 0.0) {
        reverse_edges[static_cast<std::size_t>(gen.transition[s][x])].push_back(s);
      }
    }
  }
  std::vector<std::uint8_t> reached(n, 0);
  std::deque<int> frontier;
  for (int s = 0; s < gen.num_states; ++s) {
    if (gen.is_terminal(s)) {
      reached[static_cast<std::size_t>(s)] = 1;
      frontier.push_back(s);
    }
  }
  while (!frontier.empty()) {
    const int s = frontier.front();
    frontier.pop_front();
    for (int prev : reverse_edges[static_cast<std::size_t>(s)]) {
      if (!reached[static_cast<std::size_t>(prev)]) {
        reached[static_cast<std::size_t>(prev)] = 1;
        frontier.push_back(prev);
      }
    }
  }
  return reached;
}

// Partial-pivot Gaussian elimination on the augmented system [a | b].
// a is row-major n x n and is destroyed. Suited to the modest direct-solve
// sizes; larger systems go through the iterative path.
std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  constexpr double kPivotEps = 1e-12;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    double best = std::fabs(a[col * n + col]);
    for (std::size_t row = col + 1; row < n; ++row) {
      const double mag = std::fabs(a[row * n + col]);
      if (mag > best) {
        best = mag;
        pivot = row;
      }
    }
    if (best < kPivotEps) {
      throw numeric_error("exact_value: singular absorbing-chain system");
    }
    if (pivot != col) {
      for (std::size_t k = col; k < n; ++k) std::swap(a[col * n + k], a[pivot * n + k]);
      std::swap(b[col], b[pivot]);
    }
    const double inv = 1.0 / a[col * n + col];
    for (std::size_t row = col + 1; row < n; ++row) {
      const double factor = a[row * n + col] * inv;
      if (factor == 0.0) continue;
      a[row * n + col] = 0.0;
      for (std::size_t k = col + 1; k < n; ++k) a[row * n + k] -= factor * a[col * n + k];
      b[row] -= factor * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t row = n; row-- > 0;) {
    double sum = b[row];
    for (std::size_t k = row + 1; k < n; ++k) sum -= a[row * n + k] * x[k];
    x[row] = sum / a[row * n + row];
  }
  return x;
}

constexpr int kDirectSolveLimit = 2000;

// Solves x = scale * (Q x + b) over transient states, where Q holds the
// one-step probabilities into transient states and b the mass into the
// boundary set. Direct elimination up to kDirectSolveLimit unknowns,
// Gauss-Seidel sweeps above.
std::vector<double> solve_hitting_system(const MarkovGenerator& gen,
                                         const std::vector<int>& transient,
                                         const std::vector<int>& index_of,
                                         const std::vector<double>& boundary_mass,
                                         double scale) {
  const std::size_t n = transient.size();
  if (n == 0) return {};
  if (n <= static_cast<std::size_t>(kDirectSolveLimit)) {
    std::vector<double> a(n * n, 0.0);
    std::vector<double> b(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const int s = transient[i];
      a[i * n + i] = 1.0;
      for (int x = 0; x < gen.vocab_size; ++x) {
        const double p = gen.emission[s][x];
        if (p <= 0.0) continue;
        const int next = gen.transition[s][x];
        if (!gen.is_terminal(next)) {
          a[i * n + static_cast<std::size_t>(index_of[static_cast<std::size_t>(next)])] -= scale * p;
        }
      }
      b[i] = scale * boundary_mass[i];
    }
    return solve_dense(std::move(a), std::move(b));
  }

  std::vector<double> x(n, 0.0);
  constexpr int kMaxSweeps = 200000;
  constexpr double kSweepTolerance = 1e-14;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double max_delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int s = transient[i];
      double sum = boundary_mass[i];
      double self = 0.0;
      for (int tok = 0; tok < gen.vocab_size; ++tok) {
        const double p = gen.emission[s][tok];
        if (p <= 0.0) continue;
        const int next = gen.transition[s][tok];
        if (gen.is_terminal(next)) continue;
        if (next == s) {
          self += p;
        } else {
          sum += p * x[static_cast<std::size_t>(index_of[static_cast<std::size_t>(next)])];
        }
      }
      const double denom = 1.0 - scale * self;
      const double updated = scale * sum / denom;
      max_delta = std::max(max_delta, std::fabs(updated - x[i]));
      x[i] = updated;
    }
    if (max_delta <= kSweepTolerance) return x;
  }
  throw numeric_error("exact_value: hitting system did not converge (non-absorbing generator?)");
}

}  // namespace

void MarkovGenerator::validate() const {
  auto fail = [](const std::string& message) { throw std::invalid_argument("MarkovGenerator: " + message); };

  if (num_states < 2) fail("need at least one terminal and one non-terminal state");
  if (vocab_size < 1) fail("vocab_size must be positive");
  if (eos_token < 0 || eos_token >= vocab_size) fail("eos token out of range");
  const auto n = static_cast<std::size_t>(num_states);
  if (emission.size() != n || transition.size() != n || terminal.size() != n || success.size() != n) {
    fail("per-state table sizes disagree with num_states");
  }

  bool has_terminal = false;
  for (int s = 0; s < num_states; ++s) {
    const auto& row = emission[static_cast<std::size_t>(s)];
    const auto& next_row = transition[static_cast<std::size_t>(s)];
    if (row.size() != static_cast<std::size_t>(vocab_size) ||
        next_row.size() != static_cast<std::size_t>(vocab_size)) {
      fail("emission/transition row size mismatch at state " + std::to_string(s));
    }
    if (is_success(s) && !is_terminal(s)) fail("success state " + std::to_string(s) + " is not terminal");
    if (is_terminal(s)) {
      has_terminal = true;
      for (int x = 0; x < vocab_size; ++x) {
        if (row[static_cast<std::size_t>(x)] != 0.0) {
          fail("terminal state " + std::to_string(s) + " has emissions");
        }
      }
      continue;
    }
    double sum = 0.0;
    for (int x = 0; x < vocab_size; ++x) {
      const double p = row[static_cast<std::size_t>(x)];
      if (p < 0.0 || p > 1.0 || !std::isfinite(p)) {
        fail("emission probability out of range at state " + std::to_string(s));
      }
      if (p > 0.0) {
        const int next = next_row[static_cast<std::size_t>(x)];
        if (next < 0 || next >= num_states) {
          fail("missing transition for state " + std::to_string(s) + " token " + std::to_string(x));
        }
        const bool lands_terminal = terminal[static_cast<std::size_t>(next)] != 0;
        if (x == eos_token && !lands_terminal) {
          fail("EOS from state " + std::to_string(s) + " must land in a terminal state");
        }
        if (x != eos_token && lands_terminal) {
          fail("non-EOS token " + std::to_string(x) + " from state " + std::to_string(s) +
               " lands in a terminal state");
        }
      }
      sum += p;
    }
    if (std::fabs(sum - 1.0) > kRowSumTolerance) {
      fail("emission probabilities at state " + std::to_string(s) + " sum to " + std::to_string(sum));
    }
  }
  if (!has_terminal) fail("no terminal state");

  const auto reached = can_reach_terminal(*this);
  for (int s = 0; s < num_states; ++s) {
    if (!reached[static_cast<std::size_t>(s)]) {
      fail("state " + std::to_string(s) + " cannot reach a terminal state (non-absorbing)");
    }
  }

  for (const auto& [id, state] : prompts) {
    if (id.empty()) fail("empty prompt id");
    if (state < 0 || state >= num_states) fail("prompt '" + id + "' start state out of range");
    if (is_terminal(state)) fail("prompt '" + id + "' starts at a terminal state");
  }
}

MarkovGenerator parse_world(std::string_view text, const std::string& name) {
  const WorldError err{name};

  MarkovGenerator gen;
  bool have_num_states = false, have_vocab = false, have_eos = false;
  int states_line = 0;

  // Row bookkeeping so semantic errors can cite their source line.
  std::vector<std::vector<int>> emission_lines;
  std::vector<int> first_emission_line;

  enum class Section { None, States, Emission, Transition, Terminals, Success, Prompts };
  Section section = Section::None;

  auto require_sized = [&](int line) {
    if (!have_num_states || !have_vocab || !have_eos) {
      err.at(line, "section requires [states] with num_states, vocab_size and eos first");
    }
  };
  auto check_state = [&](long long s, int line) {
    if (s < 0 || s >= gen.num_states) err.at(line, "state id " + std::to_string(s) + " out of range");
    return static_cast<int>(s);
  };
  auto check_token = [&](long long x, int line) {
    if (x < 0 || x >= gen.vocab_size) err.at(line, "token id " + std::to_string(x) + " out of range");
    return static_cast<int>(x);
  };

  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const auto fields = split_fields(raw);
    if (fields.empty()) continue;

    if (fields[0].front() == '[') {
      const std::string header = fields.size() == 1 ? fields[0] : std::string();
      if (header == "[states]") {
        section = Section::States;
        states_line = line_no;
      } else if (header == "[emission]") {
        section = Section::Emission;
      } else if (header == "[transition]") {
        section = Section::Transition;
      } else if (header == "[terminals]") {
        section = Section::Terminals;
      } else if (header == "[success]") {
        section = Section::Success;
      } else if (header == "[prompts]") {
        section = Section::Prompts;
      } else {
        err.at(line_no, "unknown section '" + raw + "'");
      }
      if (section != Section::States) require_sized(line_no);
      continue;
    }

    switch (section) {
      case Section::None:
        err.at(line_no, "content before any section header");
      case Section::States: {
        if (fields.size() != 3 || fields[1] != "=") {
          err.at(line_no, "expected 'key = value'");
        }
        long long value = 0;
        if (!parse_int(fields[2], value)) err.at(line_no, "invalid integer '" + fields[2] + "'");
        if (fields[0] == "num_states") {
          if (value < 2) err.at(line_no, "num_states must be >= 2");
          gen.num_states = static_cast<int>(value);
          have_num_states = true;
        } else if (fields[0] == "vocab_size") {
          if (value < 1) err.at(line_no, "vocab_size must be >= 1");
          gen.vocab_size = static_cast<int>(value);
          have_vocab = true;
        } else if (fields[0] == "eos") {
          gen.eos_token = static_cast<int>(value);
          have_eos = true;
        } else {
          err.at(line_no, "unknown [states] key '" + fields[0] + "'");
        }
        if (have_num_states && have_vocab && have_eos && gen.emission.empty()) {
          if (gen.eos_token < 0 || gen.eos_token >= gen.vocab_size) {
            err.at(line_no, "eos token out of range");
          }
          const auto n = static_cast<std::size_t>(gen.num_states);
          gen.emission.assign(n, std::vector<double>(static_cast<std::size_t>(gen.vocab_size), 0.0));
          gen.transition.assign(n, std::vector<int>(static_cast<std::size_t>(gen.vocab_size), -1));
          gen.terminal.assign(n, 0);
          gen.success.assign(n, 0);
          emission_lines.assign(n, std::vector<int>(static_cast<std::size_t>(gen.vocab_size), 0));
          first_emission_line.assign(n, 0);
        }
        break;
      }
      case Section::Emission: {
        if (fields.size() != 3) err.at(line_no, "expected 'state token probability'");
        long long s = 0, x = 0;
        double p = 0.0;
        if (!parse_int(fields[0], s) || !parse_int(fields[1], x)) {
          err.at(line_no, "invalid state or token id");
        }
        const int state = check_state(s, line_no);
        const int token = check_token(x, line_no);
        if (!parse_prob(fields[2], p)) err.at(line_no, "invalid probability '" + fields[2] + "'");
        if (p <= 0.0 || p > 1.0) err.at(line_no, "probability must lie in (0, 1]");
        auto& cell = gen.emission[static_cast<std::size_t>(state)][static_cast<std::size_t>(token)];
        if (cell != 0.0) {
          err.at(line_no, "duplicate emission for state " + std::to_string(state) + " token " +
                              std::to_string(token));
        }
        cell = p;
        emission_lines[static_cast<std::size_t>(state)][static_cast<std::size_t>(token)] = line_no;
        if (first_emission_line[static_cast<std::size_t>(state)] == 0) {
          first_emission_line[static_cast<std::size_t>(state)] = line_no;
        }
        break;
      }
      case Section::Transition: {
        if (fields.size() != 3) err.at(line_no, "expected 'state token next_state'");
        long long s = 0, x = 0, next = 0;
        if (!parse_int(fields[0], s) || !parse_int(fields[1], x) || !parse_int(fields[2], next)) {
          err.at(line_no, "invalid id");
        }
        const int state = check_state(s, line_no);
        const int token = check_token(x, line_no);
        const int target = check_state(next, line_no);
        auto& cell = gen.transition[static_cast<std::size_t>(state)][static_cast<std::size_t>(token)];
        if (cell != -1) {
          err.at(line_no, "duplicate transition for state " + std::to_string(state) + " token " +
                              std::to_string(token));
        }
        cell = target;
        break;
      }
      case Section::Terminals: {
        for (const auto& field : fields) {
          long long s = 0;
          if (!parse_int(field, s)) err.at(line_no, "invalid state id '" + field + "'");
          gen.terminal[static_cast<std::size_t>(check_state(s, line_no))] = 1;
        }
        break;
      }
      case Section::Success: {
        for (const auto& field : fields) {
          long long s = 0;
          if (!parse_int(field, s)) err.at(line_no, "invalid state id '" + field + "'");
          const int state = check_state(s, line_no);
          if (!gen.terminal[static_cast<std::size_t>(state)]) {
            err.at(line_no, "success state " + std::to_string(state) + " is not terminal");
          }
          gen.success[static_cast<std::size_t>(state)] = 1;
        }
        break;
      }
      case Section::Prompts: {
        if (fields.size() != 2) err.at(line_no, "expected 'prompt_id start_state'");
        long long s = 0;
        if (!parse_int(fields[1], s)) err.at(line_no, "invalid state id '" + fields[1] + "'");
        const int state = check_state(s, line_no);
        if (gen.terminal[static_cast<std::size_t>(state)]) {
          err.at(line_no, "prompt '" + fields[0] + "' starts at a terminal state");
        }
        if (!gen.prompts.emplace(fields[0], state).second) {
          err.at(line_no, "duplicate prompt id '" + fields[0] + "'");
        }
        break;
      }
    }
  }

  if (!have_num_states || !have_vocab || !have_eos) {
    err.at(0, "missing [states] section with num_states, vocab_size and eos");
  }
  if (gen.prompts.empty()) err.at(0, "missing [prompts] section with at least one prompt");

  // Cross-row checks, citing the most relevant source line.
  for (int s = 0; s < gen.num_states; ++s) {
    const auto si = static_cast<std::size_t>(s);
    if (gen.terminal[si]) {
      for (int x = 0; x < gen.vocab_size; ++x) {
        if (gen.emission[si][static_cast<std::size_t>(x)] > 0.0) {
          err.at(emission_lines[si][static_cast<std::size_t>(x)],
                 "terminal state " + std::to_string(s) + " must not emit");
        }
      }
      continue;
    }
    if (first_emission_line[si] == 0) {
      err.at(0, "non-terminal state " + std::to_string(s) + " has no emissions");
    }
    double sum = 0.0;
    for (int x = 0; x < gen.vocab_size; ++x) {
      const auto xi = static_cast<std::size_t>(x);
      const double p = gen.emission[si][xi];
      if (p <= 0.0) {
        if (gen.transition[si][xi] != -1) {
          err.at(0, "transition declared for zero-probability pair state " + std::to_string(s) +
                        " token " + std::to_string(x));
        }
        continue;
      }
      sum += p;
      const int next = gen.transition[si][xi];
      if (next == -1) {
        err.at(emission_lines[si][xi],
               "no transition for state " + std::to_string(s) + " token " + std::to_string(x));
      }
      const bool lands_terminal = gen.terminal[static_cast<std::size_t>(next)] != 0;
      if (x == gen.eos_token && !lands_terminal) {
        err.at(emission_lines[si][xi],
               "EOS from state " + std::to_string(s) + " must land in a terminal state");
      }
      if (x != gen.eos_token && lands_terminal) {
        err.at(emission_lines[si][xi], "non-EOS token " + std::to_string(x) + " from state " +
                                           std::to_string(s) + " lands in a terminal state");
      }
    }
    if (std::fabs(sum - 1.0) > kRowSumTolerance) {
      std::ostringstream msg;
      msg << "emission probabilities for state " << s << " sum to " << sum;
      err.at(first_emission_line[si], msg.str());
    }
  }

  const auto reached = can_reach_terminal(gen);
  for (int s = 0; s < gen.num_states; ++s) {
    if (!reached[static_cast<std::size_t>(s)]) {
      err.at(states_line, "state " + std::to_string(s) + " cannot reach a terminal state (non-absorbing)");
    }
  }

  gen.validate();
  return gen;
}

MarkovGenerator load_world(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error(path.string(), 0, "cannot open world file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_world(buffer.str(), path.string());
}

std::vector<double> next_distribution(const MarkovGenerator& gen, int state) {
  if (state < 0 || state >= gen.num_states) {
    throw std::invalid_argument("next_distribution: state out of range");
  }
  if (gen.is_terminal(state)) {
    throw std::invalid_argument("next_distribution: terminal state has no emissions");
  }
  return gen.emission[static_cast<std::size_t>(state)];
}

Trajectory sample_rollout(const MarkovGenerator& gen, const std::string& prompt_id,
                          std::uint64_t seed, int max_len) {
  const auto prompt = gen.prompts.find(prompt_id);
  if (prompt == gen.prompts.end()) {
    throw std::invalid_argument("sample_rollout: unknown prompt id '" + prompt_id + "'");
  }
  if (max_len < 1) throw std::invalid_argument("sample_rollout: max_len must be >= 1");

  Trajectory traj;
  traj.prompt_id = prompt_id;
  traj.seed = seed;
  int state = prompt->second;
  traj.states.push_back(state);

  std::mt19937_64 rng(seed);
  for (int step = 0; step < max_len; ++step) {
    const auto si = static_cast<std::size_t>(state);
    const int token = sample_categorical(rng, gen.emission[si]);
    state = gen.transition[si][static_cast<std::size_t>(token)];
    traj.tokens.push_back(token);
    traj.states.push_back(state);
    if (gen.is_terminal(state)) break;
  }
  traj.length = static_cast<int>(traj.tokens.size());
  traj.truncated = !gen.is_terminal(state);
  return traj;
}

ValueOracle exact_value(const MarkovGenerator& gen, const DiscountSpec& spec) {
  gen.validate();

  const auto n = static_cast<std::size_t>(gen.num_states);
  std::vector<int> transient;
  std::vector<int> index_of(n, -1);
  for (int s = 0; s < gen.num_states; ++s) {
    if (!gen.is_terminal(s)) {
      index_of[static_cast<std::size_t>(s)] = static_cast<int>(transient.size());
      transient.push_back(s);
    }
  }

  std::vector<double> mass_to_terminal(transient.size(), 0.0);
  std::vector<double> mass_to_success(transient.size(), 0.0);
  for (std::size_t i = 0; i < transient.size(); ++i) {
    const int s = transient[i];
    for (int x = 0; x < gen.vocab_size; ++x) {
      const double p = gen.emission[static_cast<std::size_t>(s)][static_cast<std::size_t>(x)];
      if (p <= 0.0) continue;
      const int next = gen.transition[static_cast<std::size_t>(s)][static_cast<std::size_t>(x)];
      if (gen.is_terminal(next)) {
        mass_to_terminal[i] += p;
        if (gen.is_success(next)) mass_to_success[i] += p;
      }
    }
  }

  const auto phi_transient = solve_hitting_system(gen, transient, index_of, mass_to_terminal, spec.gamma());
  const auto hit_transient = solve_hitting_system(gen, transient, index_of, mass_to_success, 1.0);

  ValueOracle oracle;
  oracle.phi.assign(n, 1.0);
  oracle.value.assign(n, 0.0);
  oracle.success_prob.assign(n, 0.0);
  for (int s = 0; s < gen.num_states; ++s) {
    const auto si = static_cast<std::size_t>(s);
    if (gen.is_terminal(s)) {
      oracle.success_prob[si] = gen.is_success(s) ? 1.0 : 0.0;
    } else {
      const auto i = static_cast<std::size_t>(index_of[si]);
      oracle.phi[si] = phi_transient[i];
      oracle.value[si] = -(1.0 - phi_transient[i]);
      oracle.success_prob[si] = hit_transient[i];
    }
  }

  // Fixed-point residual doubles as a non-absorption guard for the direct path.
  double max_residual = 0.0;
  for (std::size_t i = 0; i < transient.size(); ++i) {
    const int s = transient[i];
    double expect_phi = 0.0;
    double expect_hit = 0.0;
    for (int x = 0; x < gen.vocab_size; ++x) {
      const double p = gen.emission[static_cast<std::size_t>(s)][static_cast<std::size_t>(x)];
      if (p <= 0.0) continue;
      const int next = gen.transition[static_cast<std::size_t>(s)][static_cast<std::size_t>(x)];
      expect_phi += p * oracle.phi[static_cast<std::size_t>(next)];
      expect_hit += p * oracle.success_prob[static_cast<std::size_t>(next)];
    }
    max_residual = std::max(max_residual, std::fabs(oracle.phi[static_cast<std::size_t>(s)] -
                                                    spec.gamma() * expect_phi));
    max_residual = std::max(max_residual,
                            std::fabs(oracle.success_prob[static_cast<std::size_t>(s)] - expect_hit));
  }
  if (max_residual > 1e-10) {
    throw numeric_error("exact_value: fixed-point residual " + std::to_string(max_residual));
  }
  return oracle;
}

Dataset build_dataset(const MarkovGenerator& gen, const DiscountSpec& spec,
                      int rollouts_per_prompt, std::uint64_t base_seed, int max_len,
                      int threads) {
  if (rollouts_per_prompt < 1) {
    throw std::invalid_argument("build_dataset: rollouts_per_prompt must be >= 1");
  }
  std::vector<std::string> prompt_ids;
  for (const auto& [id, state] : gen.prompts) prompt_ids.push_back(id);

  const std::size_t total = prompt_ids.size() * static_cast<std::size_t>(rollouts_per_prompt);
  std::vector<Trajectory> rollouts(total);
  auto sample_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& prompt = prompt_ids[i / static_cast<std::size_t>(rollouts_per_prompt)];
      rollouts[i] = sample_rollout(gen, prompt, base_seed + i, max_len);
    }
  };

  const int worker_count = std::clamp(threads, 1, static_cast<int>(std::min<std::size_t>(total, 64)));
  if (worker_count <= 1) {
    sample_range(0, total);
  } else {
    std::vector<std::thread> workers;
    const std::size_t chunk = (total + static_cast<std::size_t>(worker_count) - 1) /
                              static_cast<std::size_t>(worker_count);
    for (int w = 0; w < worker_count; ++w) {
      const std::size_t begin = static_cast<std::size_t>(w) * chunk;
      const std::size_t end = std::min(total, begin + chunk);
      if (begin >= end) break;
      workers.emplace_back(sample_range, begin, end);
    }
    for (auto& worker : workers) worker.join();
  }

  Dataset dataset;
  for (auto& traj : rollouts) {
    if (traj.truncated) {
      ++dataset.truncated_dropped;
      continue;
    }
    dataset.schedules.push_back(schedule_for_trajectory(spec, traj));
    dataset.trajectories.push_back(std::move(traj));
  }
  if (dataset.trajectories.empty()) {
    throw std::invalid_argument("build_dataset: every rollout was truncated; raise max_len");
  }
  return dataset;
}

}  // namespace lenval
