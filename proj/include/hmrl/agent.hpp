#pragma once

// Two-layer hunter. The upper layer keeps Profit Sharing weights over modular
// rules (hunter, prey, own cell, one peer's cell, prey cell) and picks a target
// cell; the lower layer walks there with Q-learning over the target-relative
// offset. With two prey, an AT-field gate keyed on the inter-prey distance
// scales the upper-layer credit.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmrl/env.hpp"
#include "hmrl/profit_sharing.hpp"
#include "hmrl/q_learning.hpp"
#include "hmrl/rng.hpp"
#include "hmrl/table_io.hpp"

namespace hmrl::agent {

using env::Action;
using env::Position;
using env::WorldState;

// Upper-layer rule. Read as a Profit Sharing rule its state is
// (hunter, prey, goal, peer) and its action is `own`, the cell the hunter
// occupies (when credited) or considers as a target (when selecting).
struct ModuleKey {
  int hunter = 0;
  int prey = 0;
  Position own;
  Position peer;
  Position goal;
  friend bool operator==(const ModuleKey&, const ModuleKey&) = default;
  friend auto operator<=>(const ModuleKey&, const ModuleKey&) = default;
};

struct ModuleKeyHash {
  std::size_t operator()(const ModuleKey& k) const noexcept {
    auto cell = [](Position p) {
      return (static_cast<std::uint64_t>(static_cast<std::uint16_t>(p.x)) << 8) |
             static_cast<std::uint16_t>(p.y);
    };
    std::uint64_t z = (static_cast<std::uint64_t>(k.hunter) << 56) ^ (static_cast<std::uint64_t>(k.prey) << 52) ^
                      (cell(k.own) << 32) ^ (cell(k.peer) << 16) ^ cell(k.goal);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return static_cast<std::size_t>(z ^ (z >> 31));
  }
};

using UpperTable = ps::WeightTable<ModuleKey, ModuleKeyHash>;
using UpperBanks = std::array<UpperTable, env::kNumPrey>;

struct ModuleKeyCodec {
  static std::pair<std::string, std::string> encode(const ModuleKey& k) {
    auto s = std::to_string(k.hunter) + "," + std::to_string(k.prey) + "," + std::to_string(k.goal.x) + "," +
             std::to_string(k.goal.y) + "," + std::to_string(k.peer.x) + "," + std::to_string(k.peer.y);
    return {std::move(s), std::to_string(k.own.x) + "," + std::to_string(k.own.y)};
  }

  static ModuleKey decode(std::string_view state, std::string_view action) {
    const auto s = split(state, ',');
    const auto a = split(action, ',');
    if (s.size() != 6 || a.size() != 2) {
      throw std::invalid_argument("bad module key '" + std::string(state) + "' / '" + std::string(action) + "'");
    }
    auto i = [](std::string_view t) { return static_cast<int>(parse_int(t)); };
    return ModuleKey{i(s[0]), i(s[1]), {i(a[0]), i(a[1])}, {i(s[4]), i(s[5])}, {i(s[2]), i(s[3])}};
  }
};

struct ATFieldParams {
  int near = 2;  // n1
  int far = 5;   // n2
  double rho = 0.8;

  void validate() const {
    if (!(0 < near && near < far)) throw std::invalid_argument("AT field: need 0 < n1 < n2");
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("AT field: rho must lie in [0, 1]");
  }
};

// Credit gate on the inter-prey distance gd.
inline double atf(int gd, const ATFieldParams& p) {
  if (gd < 0) throw std::invalid_argument("atf: negative distance");
  if (gd <= p.near) return 0.0;
  if (gd <= p.far) return 1.0;
  return 0.9;
}

enum class SelectMode { Single, TwoPrey };
enum class CandidateSet { Ring, All };

struct SelectParams {
  double mu = 2.0;
  SelectMode mode = SelectMode::TwoPrey;
  CandidateSet candidates = CandidateSet::Ring;
  int ring_radius = 2;

  void validate() const {
    if (!(mu >= 1.0)) throw std::invalid_argument("target selection: mu must be >= 1");
    if (ring_radius < 1) throw std::invalid_argument("target selection: ring radius must be >= 1");
  }
};

struct TargetChoice {
  Position theta;
  int prey = 0;
  double score = 0.0;
  bool equidistant_tie = false;  // both prey were equally near; the bank was drawn at random
};

// Cells the hunter may be sent to around prey `prey_index`: every in-bounds
// cell at Manhattan distance 1..radius from the prey, or every cell.
inline std::vector<Position> candidate_cells(const WorldState& s, int prey_index, const SelectParams& p) {
  std::vector<Position> cells;
  const Position g = s.prey[prey_index].pos;
  for (int y = 0; y < s.side; ++y) {
    for (int x = 0; x < s.side; ++x) {
      const Position c{x, y};
      const int d = env::manhattan_distance(c, g);
      if (p.candidates == CandidateSet::All || (d >= 1 && d <= p.ring_radius)) cells.push_back(c);
    }
  }
  return cells;
}

// Which prey's weight bank a hunter consults: the strictly nearer alive prey;
// equal distances are split uniformly at random.
inline int choose_prey(const WorldState& s, int hunter, Rng& rng, bool* tie = nullptr) {
  if (tie) *tie = false;
  const bool a0 = s.prey[0].alive;
  const bool a1 = s.prey[1].alive;
  if (!a0 && !a1) throw std::invalid_argument("choose_prey: no alive prey");
  if (a0 != a1) return a0 ? 0 : 1;
  const Position h = s.hunters[hunter];
  const int d0 = env::manhattan_distance(h, s.prey[0].pos);
  const int d1 = env::manhattan_distance(h, s.prey[1].pos);
  if (d0 < d1) return 0;
  if (d1 < d0) return 1;
  if (tie) *tie = true;
  return static_cast<int>(uniform_index(rng, 2));
}

// Discounted module score of target v: sum over peers of u(e, g, v, h_peer)
// divided by mu^|h_e - v|.
inline double target_score(const UpperTable& bank, int hunter, int prey, const WorldState& s, Position v, double mu) {
  double sum = 0.0;
  for (int peer = 0; peer < env::kNumHunters; ++peer) {
    if (peer == hunter) continue;
    sum += bank.weight(ModuleKey{hunter, prey, v, s.hunters[peer], s.prey[prey].pos});
  }
  return sum / std::pow(mu, env::manhattan_distance(s.hunters[hunter], v));
}

// Picks the prey bank (nearest prey in two-prey mode, the first alive prey in
// single mode), then the argmax target over the candidate cells with uniform
// tie-breaking. With probability epsilon a uniform candidate is taken instead.
inline TargetChoice select_target(const UpperBanks& banks, int hunter, const WorldState& s, const SelectParams& p,
                                  Rng& rng, double epsilon = 0.0) {
  p.validate();
  if (s.alive_prey_count() == 0) throw std::invalid_argument("select_target: no alive prey");
  TargetChoice choice;
  if (p.mode == SelectMode::TwoPrey) {
    choice.prey = choose_prey(s, hunter, rng, &choice.equidistant_tie);
  } else {
    choice.prey = s.prey[0].alive ? 0 : 1;
  }

  const std::vector<Position> cells = candidate_cells(s, choice.prey, p);
  const UpperTable& bank = banks[static_cast<std::size_t>(choice.prey)];
  if (epsilon > 0.0 && uniform_unit(rng) < epsilon) {
    choice.theta = cells[uniform_index(rng, cells.size())];
    choice.score = target_score(bank, hunter, choice.prey, s, choice.theta, p.mu);
    return choice;
  }

  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> ties;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const double score = target_score(bank, hunter, choice.prey, s, cells[i], p.mu);
    if (score > best) {
      best = score;
      ties.assign(1, i);
    } else if (score == best) {
      ties.push_back(i);
    }
  }
  choice.theta = cells[ties[uniform_index(rng, ties.size())]];
  choice.score = best;
  return choice;
}

// Upper-layer history for one (hunter, prey) bank: the modular keys live at
// each step, oldest first. Each step carries one key per peer.
struct UpperTrace {
  std::vector<std::vector<ModuleKey>> steps;
  void clear() { steps.clear(); }
  std::size_t depth() const { return steps.size(); }
};

// Backward credit from the rewarded step: k(0) = R and
// k(i+1) = rho * gate(gd at step i) * k(i), step i counted back from the reward.
// Every key recorded at offset i gains k(i). A missing gd (prey gone, or gating
// switched off) gates with 1. The trace is cleared afterwards.
inline void reinforce_upper(UpperTable& bank, UpperTrace& trace, double reward,
                            std::span<const std::optional<int>> gd_at_steps, const ATFieldParams& params) {
  if (gd_at_steps.size() != trace.steps.size()) {
    throw std::invalid_argument("reinforce_upper: trace and distance history are misaligned");
  }
  if (!std::isfinite(reward)) throw std::invalid_argument("reinforce_upper: reward must be finite");
  double credit = reward;
  for (std::size_t back = 0; back < trace.steps.size() && credit != 0.0; ++back) {
    const std::size_t idx = trace.steps.size() - 1 - back;
    for (const ModuleKey& key : trace.steps[idx]) bank.add(key, credit);
    const double gate = gd_at_steps[idx] ? atf(*gd_at_steps[idx], params) : 1.0;
    credit *= params.rho * gate;
  }
  trace.clear();
}

class Hunter;

// Lower-layer override: given the target-relative offset, return the action to
// take. Used to drive hunters from distilled rules.
using LowerPolicy = std::function<Action(const ql::RelState&, const WorldState&, const Hunter&, Rng&)>;

struct HunterConfig {
  SelectParams select;
  ATFieldParams atf;
  bool atf_enabled = true;
  ql::Params q;
  double capture_reward = 100.0;    // upper layer, positive prey
  double dangerous_reward = 0.0;    // upper layer, dangerous prey
  double arrival_reward = 100.0;    // lower layer, reaching the target
  std::size_t trace_cap = 3000;
};

struct PendingMove {
  ql::RelState state;
  Action action = Action::Stay;
  Position target;
};

// One hunter's learner bundle. Bundles never share mutable state.
class Hunter {
 public:
  Hunter(int id, const HunterConfig& config) : id_(id), config_(config), q_(config.q) {
    config_.select.validate();
    config_.atf.validate();
  }

  int id() const { return id_; }
  const UpperBanks& banks() const { return banks_; }
  UpperBanks& banks() { return banks_; }
  const ql::LowerQTable& q() const { return q_; }
  ql::LowerQTable& q() { return q_; }
  const HunterConfig& config() const { return config_; }
  const std::optional<TargetChoice>& target() const { return target_; }
  const std::optional<PendingMove>& pending() const { return pending_; }
  const UpperTrace& trace(int prey) const { return traces_[static_cast<std::size_t>(prey)]; }
  std::size_t target_resets() const { return target_resets_; }
  std::size_t equidistant_ties() const { return equidistant_ties_; }
  std::size_t overridden_illegal() const { return overridden_illegal_; }

  // Re-selects the target, forms the offset key and picks the lower-layer
  // action (epsilon-greedy over legal moves, or `override` when given).
  Action act(const WorldState& s, Rng& rng, double epsilon, const LowerPolicy& override = {}) {
    TargetChoice choice = select_target(banks_, id_, s, config_.select, rng, epsilon);
    if (choice.equidistant_tie) ++equidistant_ties_;
    const Position here = s.hunters[id_];
    const ql::RelState rel = ql::relative_state(here, choice.theta);
    const std::vector<Action> legal = env::legal_moves(s, id_);
    Action a;
    if (override) {
      a = override(rel, s, *this, rng);
      if (std::find(legal.begin(), legal.end(), a) == legal.end()) {
        ++overridden_illegal_;
        a = Action::Stay;
      }
    } else {
      a = ql::epsilon_greedy(q_, rel, std::span<const Action>(legal), epsilon, rng);
    }
    target_ = choice;
    pending_ = PendingMove{rel, a, choice.theta};
    return a;
  }

  // Post-step bookkeeping: lower-layer Q update against the target that was
  // active for the move, and one upper-trace entry per prey on the board.
  void observe(const WorldState& before, const env::StepOutcome& out) {
    const WorldState& after = out.next_state;
    if (pending_) {
      const Position now = after.hunters[id_];
      const bool arrived = now == pending_->target;
      const ql::RelState next = ql::relative_state(now, pending_->target);
      ql::q_update(q_, pending_->state, pending_->action, arrived ? config_.arrival_reward : 0.0, next, arrived);
      if (arrived) ++target_resets_;
      pending_.reset();
    }

    std::optional<int> gd;
    if (config_.atf_enabled && config_.select.mode == SelectMode::TwoPrey && before.prey[0].alive &&
        before.prey[1].alive) {
      gd = env::prey_distance(after);
    }
    for (int l = 0; l < env::kNumPrey; ++l) {
      if (!before.prey[l].alive) continue;
      std::vector<ModuleKey> keys;
      keys.reserve(env::kNumHunters - 1);
      for (int peer = 0; peer < env::kNumHunters; ++peer) {
        if (peer == id_) continue;
        keys.push_back(ModuleKey{id_, l, after.hunters[id_], after.hunters[peer], after.prey[l].pos});
      }
      auto& trace = traces_[static_cast<std::size_t>(l)];
      auto& gds = gds_[static_cast<std::size_t>(l)];
      trace.steps.push_back(std::move(keys));
      gds.push_back(gd);
      if (trace.steps.size() > config_.trace_cap) {
        trace.steps.erase(trace.steps.begin());
        gds.erase(gds.begin());
      }
    }
  }

  // Delivers an upper-layer reward for prey l; zero reward only clears.
  void reward_upper(int prey, double reward) {
    auto& trace = traces_[static_cast<std::size_t>(prey)];
    auto& gds = gds_[static_cast<std::size_t>(prey)];
    if (reward != 0.0) {
      reinforce_upper(banks_[static_cast<std::size_t>(prey)], trace, reward, gds, config_.atf);
    }
    trace.clear();
    gds.clear();
  }

  void end_trial() {
    for (auto& t : traces_) t.clear();
    for (auto& g : gds_) g.clear();
    pending_.reset();
    target_.reset();
  }

  // Drops everything learned (strict per-trial reset mode).
  void reset_learning() {
    for (auto& b : banks_) b = UpperTable{};
    q_ = ql::LowerQTable(config_.q);
  }

  void reset_counters() {
    target_resets_ = 0;
    equidistant_ties_ = 0;
    overridden_illegal_ = 0;
  }

 private:
  int id_;
  HunterConfig config_;
  UpperBanks banks_{};
  ql::LowerQTable q_;
  std::array<UpperTrace, env::kNumPrey> traces_{};
  std::array<std::vector<std::optional<int>>, env::kNumPrey> gds_{};
  std::optional<TargetChoice> target_;
  std::optional<PendingMove> pending_;
  std::size_t target_resets_ = 0;
  std::size_t equidistant_ties_ = 0;
  std::size_t overridden_illegal_ = 0;
};

using Team = std::array<Hunter, env::kNumHunters>;

// One decision of one hunter: re-select the target, then act toward it.
inline Action hunter_policy_step(Hunter& hunter, const WorldState& s, Rng& rng, double epsilon,
                                 const LowerPolicy& override = {}) {
  if (!s.alive(hunter.id())) throw std::invalid_argument("hunter_policy_step: hunter not on the board");
  return hunter.act(s, rng, epsilon, override);
}

inline Team make_team(const HunterConfig& config) {
  return {Hunter(0, config), Hunter(1, config), Hunter(2, config), Hunter(3, config)};
}

// Applies this step's capture rewards. A positive capture reinforces every
// hunter's trace for that prey; a dangerous capture pays `dangerous_reward`
// (zero by default, which only clears the trace).
inline void deliver_rewards(Team& team, const env::StepOutcome& out) {
  for (const env::Capture& c : out.captures) {
    for (Hunter& h : team) {
      const double r = c.kind == env::PreyKind::Positive ? h.config().capture_reward : h.config().dangerous_reward;
      h.reward_upper(c.prey_index, r);
    }
  }
}

}  // namespace hmrl::agent
