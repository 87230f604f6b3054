#pragma once

// Profit Sharing: episodic credit assignment without a value function. Every
// rule fired in an episode receives a geometrically shrinking share of the
// terminal reward, newest rule first.

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hmrl/rng.hpp"
#include "hmrl/table_io.hpp"

namespace hmrl::ps {

template <typename State, typename ActionKey>
struct Rule {
  State state;
  ActionKey action;
  friend bool operator==(const Rule&, const Rule&) = default;
  friend auto operator<=>(const Rule&, const Rule&) = default;
};

struct Params {
  double discount = 5.0;  // M: each step back divides the credit by M
  int effective_rules = 4;  // L
  double reward = 100.0;

  Params() = default;
  Params(double m, int l, double r) : discount(m), effective_rules(l), reward(r) {
    if (l < 1) throw std::invalid_argument("profit sharing: L must be positive");
    if (!(m >= static_cast<double>(l) + 1.0)) {
      throw std::invalid_argument("profit sharing: discount M must satisfy M >= L + 1");
    }
    if (!std::isfinite(r)) throw std::invalid_argument("profit sharing: reward must be finite");
  }
};

template <typename Key, typename Hash = std::hash<Key>>
class WeightTable {
 public:
  WeightTable() = default;
  explicit WeightTable(double default_weight) : default_(default_weight) {}

  double weight(const Key& key) const {
    const auto it = weights_.find(key);
    return it == weights_.end() ? default_ : it->second;
  }

  void add(const Key& key, double delta) {
    auto [it, inserted] = weights_.try_emplace(key, default_);
    const double updated = it->second + delta;
    if (!std::isfinite(updated)) throw std::domain_error("weight update produced a non-finite value");
    it->second = updated;
  }

  void set(const Key& key, double value) {
    if (!std::isfinite(value)) throw std::domain_error("weights must be finite");
    weights_.insert_or_assign(key, value);
  }

  double default_weight() const { return default_; }
  std::size_t size() const { return weights_.size(); }
  bool empty() const { return weights_.empty(); }
  const std::unordered_map<Key, double, Hash>& entries() const { return weights_; }

  // Equal when every key reads the same weight (stored or default).
  friend bool operator==(const WeightTable& a, const WeightTable& b) {
    if (a.default_ != b.default_) return false;
    for (const auto& [k, w] : a.weights_) {
      if (b.weight(k) != w) return false;
    }
    for (const auto& [k, w] : b.weights_) {
      if (a.weight(k) != w) return false;
    }
    return true;
  }

 private:
  double default_ = 0.0;
  std::unordered_map<Key, double, Hash> weights_;
};

// Fired-rule history, oldest first, capped at `capacity` entries. Pushing past
// the cap drops the oldest rule: it would sit at an offset >= capacity and earn
// nothing anyway.
template <typename Key>
class EpisodeTrace {
 public:
  explicit EpisodeTrace(std::size_t capacity = std::numeric_limits<std::size_t>::max())
      : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("episode trace capacity must be positive");
  }

  void push(Key rule) {
    rules_.push_back(std::move(rule));
    if (rules_.size() > capacity_) rules_.pop_front();
  }

  void clear() { rules_.clear(); }
  std::size_t length() const { return rules_.size(); }
  bool empty() const { return rules_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<Key>& rules() const { return rules_; }

 private:
  std::size_t capacity_;
  std::deque<Key> rules_;
};

// f_i = f0 / M^i, computed through the recursion f_i = f_{i-1} / M.
inline double reinforcement_value(double f0, std::size_t i, double m) {
  double f = f0;
  for (std::size_t k = 0; k < i; ++k) f /= m;
  return f;
}

// Walks the trace from the rewarded (newest) rule backwards; the rule at offset
// i receives R / M^i. A rule fired several times collects every contribution.
// The trace is cleared afterwards. R == 0 is an unrewarded episode: the table
// is left alone.
template <typename Key, typename Hash>
void reinforce_episode(WeightTable<Key, Hash>& table, EpisodeTrace<Key>& trace, double reward,
                       const Params& params) {
  if (!std::isfinite(reward)) throw std::invalid_argument("reinforce_episode: reward must be finite");
  if (trace.empty()) {
    if (reward != 0.0) throw std::logic_error("reinforce_episode: reward delivered with an empty trace");
    return;
  }
  if (reward != 0.0) {
    double f = reward;
    const auto& rules = trace.rules();
    for (auto it = rules.rbegin(); it != rules.rend(); ++it) {
      table.add(*it, f);
      f /= params.discount;
    }
  }
  trace.clear();
}

// Ineffective-rule suppression: L * sum_{j=i..W} f_j < f_{i-1} for every
// i in 1..W. With f geometric the ratio of the two sides only depends on
// n = W - i + 1, and the inequality rearranges to
//   L - (M - 1) < L * M^-n,
// which avoids the cancellation that direct summation suffers near M = L + 1.
inline bool check_suppression(const Params& params, std::size_t episode_length) {
  if (episode_length < 1) throw std::invalid_argument("check_suppression: W must be >= 1");
  const double l = static_cast<double>(params.effective_rules);
  const double m = params.discount;
  const double lhs = l - (m - 1.0);
  for (std::size_t i = 1; i <= episode_length; ++i) {
    const std::size_t n = episode_length - i + 1;
    if (lhs <= 0.0) continue;  // right side is strictly positive
    const double rhs = l * std::pow(m, -static_cast<double>(n));
    if (!(lhs < rhs)) return false;
  }
  return true;
}

// Greedy on weight with probability 1 - epsilon (ties uniform), otherwise a
// uniform candidate.
template <typename State, typename ActionKey, typename Hash>
ActionKey select_by_weight(const WeightTable<Rule<State, ActionKey>, Hash>& table, const State& state,
                           std::span<const ActionKey> candidates, Rng& rng, double epsilon) {
  if (candidates.empty()) throw std::invalid_argument("select_by_weight: no candidates");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("select_by_weight: epsilon outside [0,1]");
  if (uniform_unit(rng) < epsilon) return candidates[uniform_index(rng, candidates.size())];

  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> ties;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double w = table.weight(Rule<State, ActionKey>{state, candidates[i]});
    if (w > best) {
      best = w;
      ties.assign(1, i);
    } else if (w == best) {
      ties.push_back(i);
    }
  }
  return candidates[ties[uniform_index(rng, ties.size())]];
}

// Persistence. Codec supplies
//   static std::pair<std::string, std::string> encode(const Key&);
//   static Key decode(std::string_view state, std::string_view action);
template <typename Codec, typename Key, typename Hash>
void save_weights(std::ostream& os, const WeightTable<Key, Hash>& table, Metadata header = {}) {
  header.emplace_back("default_weight", format_double(table.default_weight()));
  TableText text{std::move(header), {}};
  text.rows.reserve(table.size());
  for (const auto& [key, w] : table.entries()) {
    auto [s, a] = Codec::encode(key);
    text.rows.push_back({std::move(s), std::move(a), w});
  }
  write_table_text(os, std::move(text));
}

template <typename Codec, typename Key, typename Hash = std::hash<Key>>
WeightTable<Key, Hash> load_weights(std::istream& is, Metadata* header_out = nullptr) {
  TableText text = read_table_text(is);
  const std::string* def = find_meta(text.header, "default_weight");
  WeightTable<Key, Hash> table(def ? parse_double(*def) : 0.0);
  for (const auto& row : text.rows) table.set(Codec::decode(row.state, row.action), row.value);
  if (header_out) *header_out = std::move(text.header);
  return table;
}

}  // namespace hmrl::ps

template <typename State, typename ActionKey>
struct std::hash<hmrl::ps::Rule<State, ActionKey>> {
  std::size_t operator()(const hmrl::ps::Rule<State, ActionKey>& r) const noexcept {
    const std::size_t h1 = std::hash<State>{}(r.state);
    const std::size_t h2 = std::hash<ActionKey>{}(r.action);
    return h1 ^ (h2 + 0x9e3779b97f4a7c15ULL + (h1 << 6) + (h1 >> 2));
  }
};
