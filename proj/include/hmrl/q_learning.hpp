#pragma once

// Tabular off-policy Q-learning for the lower layer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "hmrl/env.hpp"
#include "hmrl/rng.hpp"
#include "hmrl/table_io.hpp"

namespace hmrl::ql {

// Lower-layer state: offset from the agent to its commanded target
// (target - position), plus an opaque tag naming the target family.
struct RelState {
  int dx = 0;
  int dy = 0;
  int tag = 0;
  friend bool operator==(RelState, RelState) = default;
  friend auto operator<=>(RelState, RelState) = default;
};

inline RelState relative_state(env::Position agent, env::Position target, int tag = 0) {
  return {target.x - agent.x, target.y - agent.y, tag};
}

}  // namespace hmrl::ql

template <>
struct std::hash<hmrl::ql::RelState> {
  std::size_t operator()(const hmrl::ql::RelState& s) const noexcept {
    const auto packed = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(s.dx + 512)) << 42) ^
                        (static_cast<std::uint64_t>(static_cast<std::uint32_t>(s.dy + 512)) << 21) ^
                        static_cast<std::uint64_t>(static_cast<std::uint32_t>(s.tag));
    return std::hash<std::uint64_t>{}(packed * 0x9e3779b97f4a7c15ULL);
  }
};

namespace hmrl::ql {

struct Params {
  double alpha = 0.1;
  double gamma = 0.9;

  Params() = default;
  Params(double a, double g) : alpha(a), gamma(g) { validate(); }

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("q-learning: alpha must lie in (0, 1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("q-learning: gamma must lie in [0, 1)");
  }
};

template <typename State, typename ActionT = env::Action>
class QTable {
 public:
  struct Key {
    State state;
    ActionT action;
    friend bool operator==(const Key&, const Key&) = default;
  };

  explicit QTable(Params params = {}) : params_(params) { params_.validate(); }

  double value(const State& s, ActionT a) const {
    const auto it = values_.find(Key{s, a});
    return it == values_.end() ? 0.0 : it->second;
  }

  void set(const State& s, ActionT a, double v) {
    if (!std::isfinite(v)) throw std::domain_error("q values must be finite");
    values_.insert_or_assign(Key{s, a}, v);
  }

  double max_value(const State& s, std::span<const ActionT> actions) const {
    double best = -std::numeric_limits<double>::infinity();
    for (ActionT a : actions) best = std::max(best, value(s, a));
    return actions.empty() ? 0.0 : best;
  }

  const Params& params() const { return params_; }
  void set_alpha(double alpha) {
    params_.alpha = alpha;
    params_.validate();
  }
  std::size_t size() const { return values_.size(); }

  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      const std::size_t h = std::hash<State>{}(k.state);
      return h ^ (static_cast<std::size_t>(k.action) * 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
    }
  };
  const std::unordered_map<Key, double, KeyHash>& entries() const { return values_; }

 private:
  Params params_;
  std::unordered_map<Key, double, KeyHash> values_;
};

using LowerQTable = QTable<RelState, env::Action>;

// Q(s,a) += alpha * (r + gamma * max_b Q(s',b) - Q(s,a)); the bootstrap term is
// dropped when s' is terminal. `next_actions` is the action set maximised over
// at s'.
template <typename State, typename ActionT>
void q_update(QTable<State, ActionT>& table, const State& s, ActionT a, double reward, const State& s_next,
              bool terminal, std::span<const ActionT> next_actions) {
  if (!std::isfinite(reward)) throw std::invalid_argument("q_update: reward must be finite");
  const auto& p = table.params();
  const double bootstrap = terminal ? 0.0 : p.gamma * table.max_value(s_next, next_actions);
  const double q = table.value(s, a);
  table.set(s, a, q + p.alpha * (reward + bootstrap - q));
}

inline void q_update(LowerQTable& table, const RelState& s, env::Action a, double reward,
                     const RelState& s_next, bool terminal) {
  q_update(table, s, a, reward, s_next, terminal, std::span<const env::Action>(env::kAllActions));
}

template <typename State, typename ActionT>
ActionT greedy(const QTable<State, ActionT>& table, const State& s, std::span<const ActionT> legal, Rng& rng) {
  if (legal.empty()) throw std::invalid_argument("greedy: empty legal set");
  double best = -std::numeric_limits<double>::infinity();
  std::vector<ActionT> ties;
  for (ActionT a : legal) {
    const double q = table.value(s, a);
    if (q > best) {
      best = q;
      ties.assign(1, a);
    } else if (q == best) {
      ties.push_back(a);
    }
  }
  return ties[uniform_index(rng, ties.size())];
}

// Argmax over `legal` with probability 1 - epsilon (ties uniform), otherwise a
// uniformly drawn legal action.
template <typename State, typename ActionT>
ActionT epsilon_greedy(const QTable<State, ActionT>& table, const State& s, std::span<const ActionT> legal,
                       double epsilon, Rng& rng) {
  if (legal.empty()) throw std::invalid_argument("epsilon_greedy: empty legal set");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon_greedy: epsilon outside [0,1]");
  if (uniform_unit(rng) < epsilon) return legal[uniform_index(rng, legal.size())];
  return greedy(table, s, legal, rng);
}

// Linear annealing from `start` to `end` over the first `fraction` of trials,
// then constant.
struct EpsilonSchedule {
  double start = 0.1;
  double end = 0.01;
  double anneal_fraction = 0.5;

  double at(std::size_t trial, std::size_t total_trials) const {
    const double horizon = anneal_fraction * static_cast<double>(total_trials);
    if (horizon <= 0.0) return end;
    const double t = std::min(1.0, static_cast<double>(trial) / horizon);
    return start + (end - start) * t;
  }
};

// ---------------------------------------------------------------------------
// Value iteration over a small explicit MDP. Used as a reference solution.

struct Outcome {
  std::size_t next = 0;
  double prob = 1.0;
  double reward = 0.0;
};

struct Mdp {
  double gamma = 0.9;
  // transitions[s][a] lists the outcomes of action a in state s.
  std::vector<std::vector<std::vector<Outcome>>> transitions;
  // Terminal states are absorbing with value 0.
  std::vector<bool> terminal;

  std::size_t num_states() const { return transitions.size(); }
};

struct ValueSolution {
  std::vector<double> values;
  std::vector<std::vector<double>> q;
  std::size_t iterations = 0;
};

inline ValueSolution solve_value_iteration(const Mdp& mdp, double tolerance = 1e-9,
                                           std::size_t max_iterations = 1'000'000) {
  const std::size_t n = mdp.num_states();
  if (!(mdp.gamma >= 0.0 && mdp.gamma < 1.0)) throw std::invalid_argument("value iteration: gamma must lie in [0,1)");
  if (mdp.terminal.size() != n) throw std::invalid_argument("value iteration: terminal flags misaligned");
  for (const auto& actions : mdp.transitions) {
    for (const auto& outcomes : actions) {
      double total = 0.0;
      for (const Outcome& o : outcomes) {
        if (o.next >= n) throw std::invalid_argument("value iteration: transition to unknown state");
        total += o.prob;
      }
      if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("value iteration: probabilities must sum to 1");
    }
  }

  ValueSolution sol;
  sol.values.assign(n, 0.0);
  sol.q.resize(n);
  for (std::size_t s = 0; s < n; ++s) sol.q[s].assign(mdp.transitions[s].size(), 0.0);

  // Stopping on residual * gamma / (1 - gamma) bounds the distance to the fixed point.
  const double stop = tolerance * (1.0 - mdp.gamma) / std::max(mdp.gamma, 1e-300);
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    double residual = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      if (mdp.terminal[s] || mdp.transitions[s].empty()) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < mdp.transitions[s].size(); ++a) {
        double q = 0.0;
        for (const Outcome& o : mdp.transitions[s][a]) {
          q += o.prob * (o.reward + (mdp.terminal[o.next] ? 0.0 : mdp.gamma * sol.values[o.next]));
        }
        sol.q[s][a] = q;
        best = std::max(best, q);
      }
      residual = std::max(residual, std::abs(best - sol.values[s]));
      sol.values[s] = best;
    }
    sol.iterations = it;
    if (residual <= stop) return sol;
  }
  throw std::runtime_error("value iteration did not converge within the iteration cap");
}

// Persistence in the shared table text scheme.
inline std::string encode_state(const RelState& s) {
  return std::to_string(s.dx) + "," + std::to_string(s.dy) + "," + std::to_string(s.tag);
}

inline RelState decode_state(std::string_view text) {
  const auto parts = split(text, ',');
  if (parts.size() != 3) throw std::invalid_argument("bad lower-layer state key '" + std::string(text) + "'");
  return {static_cast<int>(parse_int(parts[0])), static_cast<int>(parse_int(parts[1])),
          static_cast<int>(parse_int(parts[2]))};
}

inline void save_qtable(std::ostream& os, const LowerQTable& table, Metadata header = {}) {
  header.emplace_back("alpha", format_double(table.params().alpha));
  header.emplace_back("gamma", format_double(table.params().gamma));
  TableText text{std::move(header), {}};
  for (const auto& [key, v] : table.entries()) {
    text.rows.push_back({encode_state(key.state), std::string(env::to_string(key.action)), v});
  }
  write_table_text(os, std::move(text));
}

inline LowerQTable load_qtable(std::istream& is, Metadata* header_out = nullptr) {
  TableText text = read_table_text(is);
  const std::string* alpha = find_meta(text.header, "alpha");
  const std::string* gamma = find_meta(text.header, "gamma");
  if (!alpha || !gamma) throw std::runtime_error("q table file lacks alpha/gamma header");
  LowerQTable table(Params(parse_double(*alpha), parse_double(*gamma)));
  for (const auto& row : text.rows) table.set(decode_state(row.state), env::parse_action(row.action), row.value);
  if (header_out) *header_out = std::move(text.header);
  return table;
}

}  // namespace hmrl::ql
