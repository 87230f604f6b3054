#pragma once

// Multi-agent pursuit gridworld: four hunters, two prey, synchronous moves.
//
// Coordinates: x grows East, y grows South. Agent ids 0..3 are hunters and
// 4..5 are prey.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hmrl/rng.hpp"

namespace hmrl::env {

inline constexpr int kDefaultSide = 7;
inline constexpr int kNumHunters = 4;
inline constexpr int kNumPrey = 2;
inline constexpr int kNumAgents = kNumHunters + kNumPrey;

struct Position {
  int x = 0;
  int y = 0;
  friend constexpr bool operator==(Position, Position) = default;
  friend constexpr auto operator<=>(Position, Position) = default;
};

enum class Action : std::uint8_t { Stay, North, South, East, West };

inline constexpr std::array<Action, 5> kAllActions = {
    Action::Stay, Action::North, Action::South, Action::East, Action::West};

// Names follow the decision-tree output: "up" is North (-y), "down" is South.
inline std::string_view to_string(Action a) {
  switch (a) {
    case Action::Stay: return "stay";
    case Action::North: return "up";
    case Action::South: return "down";
    case Action::East: return "right";
    case Action::West: return "left";
  }
  return "?";
}

inline Action parse_action(std::string_view name) {
  for (Action a : kAllActions) {
    if (to_string(a) == name) return a;
  }
  throw std::invalid_argument("unknown action '" + std::string(name) + "'");
}

inline constexpr Position offset(Action a) {
  switch (a) {
    case Action::North: return {0, -1};
    case Action::South: return {0, 1};
    case Action::East: return {1, 0};
    case Action::West: return {-1, 0};
    case Action::Stay: break;
  }
  return {0, 0};
}

inline constexpr Position apply(Position p, Action a) {
  const Position d = offset(a);
  return {p.x + d.x, p.y + d.y};
}

inline constexpr bool in_bounds(Position p, int side) {
  return p.x >= 0 && p.y >= 0 && p.x < side && p.y < side;
}

inline constexpr int manhattan_distance(Position a, Position b) {
  return (a.x > b.x ? a.x - b.x : b.x - a.x) + (a.y > b.y ? a.y - b.y : b.y - a.y);
}

enum class PreyKind : std::uint8_t { Positive, Dangerous };

inline std::string_view to_string(PreyKind k) {
  return k == PreyKind::Positive ? "positive" : "dangerous";
}

inline PreyKind parse_prey_kind(std::string_view name) {
  if (name == "positive") return PreyKind::Positive;
  if (name == "dangerous") return PreyKind::Dangerous;
  throw std::invalid_argument("unknown prey kind '" + std::string(name) + "'");
}

struct Prey {
  Position pos;
  bool alive = true;
  PreyKind kind = PreyKind::Positive;
  friend bool operator==(const Prey&, const Prey&) = default;
};

struct GridConfig {
  int side = kDefaultSide;
  std::array<PreyKind, kNumPrey> prey_kinds = {PreyKind::Positive, PreyKind::Dangerous};
};

struct WorldState {
  int side = kDefaultSide;
  std::array<Position, kNumHunters> hunters{};
  std::array<Prey, kNumPrey> prey{};
  int step_count = 0;

  friend bool operator==(const WorldState&, const WorldState&) = default;

  bool alive(int agent) const {
    check_agent(agent);
    return agent < kNumHunters || prey[agent - kNumHunters].alive;
  }

  Position position(int agent) const {
    check_agent(agent);
    return agent < kNumHunters ? hunters[agent] : prey[agent - kNumHunters].pos;
  }

  // Id of the alive agent standing on `p`, if any.
  std::optional<int> occupant(Position p) const {
    for (int a = 0; a < kNumAgents; ++a) {
      if (alive(a) && position(a) == p) return a;
    }
    return std::nullopt;
  }

  int alive_prey_count() const {
    return static_cast<int>(std::count_if(prey.begin(), prey.end(),
                                          [](const Prey& p) { return p.alive; }));
  }

  static void check_agent(int agent) {
    if (agent < 0 || agent >= kNumAgents) {
      throw std::out_of_range("unknown agent id " + std::to_string(agent));
    }
  }
};

struct Capture {
  int prey_index = 0;
  PreyKind kind = PreyKind::Positive;
  friend bool operator==(const Capture&, const Capture&) = default;
};

struct StepOutcome {
  WorldState next_state;
  std::vector<Capture> captures;
  std::vector<int> blocked_moves;  // agent ids whose declared move was refused
  std::array<Action, kNumAgents> declared{};  // intents, prey included
};

inline WorldState new_world(Rng& rng, const GridConfig& config) {
  if (config.side < 1 || config.side * config.side < kNumAgents) {
    throw std::invalid_argument("grid of side " + std::to_string(config.side) +
                                " cannot hold " + std::to_string(kNumAgents) +
                                " agents on distinct cells");
  }
  const int cells = config.side * config.side;
  // Partial Fisher-Yates over cell indices.
  std::vector<int> order(static_cast<std::size_t>(cells));
  for (int i = 0; i < cells; ++i) order[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < kNumAgents; ++i) {
    const auto j = static_cast<std::size_t>(i) +
                   uniform_index(rng, static_cast<std::size_t>(cells - i));
    std::swap(order[static_cast<std::size_t>(i)], order[j]);
  }
  auto cell = [&](int i) {
    const int c = order[static_cast<std::size_t>(i)];
    return Position{c % config.side, c / config.side};
  };

  WorldState state;
  state.side = config.side;
  for (int h = 0; h < kNumHunters; ++h) state.hunters[h] = cell(h);
  for (int p = 0; p < kNumPrey; ++p) {
    state.prey[p] = Prey{cell(kNumHunters + p), true, config.prey_kinds[p]};
  }
  return state;
}

inline WorldState new_world(std::uint64_t seed, const GridConfig& config) {
  Rng rng = make_rng(seed);
  return new_world(rng, config);
}

// Stay plus every direction whose destination is on the grid. Occupancy is not
// considered here; collisions are settled when the step resolves.
inline std::vector<Action> legal_moves(const WorldState& state, int agent) {
  if (!state.alive(agent)) {
    throw std::invalid_argument("legal_moves: agent " + std::to_string(agent) + " is not alive");
  }
  const Position from = state.position(agent);
  std::vector<Action> moves;
  for (Action a : kAllActions) {
    if (in_bounds(apply(from, a), state.side)) moves.push_back(a);
  }
  return moves;
}

inline bool is_legal(const WorldState& state, int agent, Action a) {
  return in_bounds(apply(state.position(agent), a), state.side);
}

// True iff every in-bounds 4-neighbour of the prey holds a hunter. Off-grid
// neighbours count as blocked.
inline bool is_captured(const WorldState& state, int prey_index) {
  if (prey_index < 0 || prey_index >= kNumPrey) {
    throw std::out_of_range("unknown prey index " + std::to_string(prey_index));
  }
  const Prey& prey = state.prey[prey_index];
  if (!prey.alive) throw std::invalid_argument("is_captured: prey is already dead");
  for (Action a : {Action::North, Action::South, Action::East, Action::West}) {
    const Position n = apply(prey.pos, a);
    if (!in_bounds(n, state.side)) continue;
    if (std::find(state.hunters.begin(), state.hunters.end(), n) == state.hunters.end()) {
      return false;
    }
  }
  return true;
}

// Uniformly random priority order over the alive agents.
inline std::vector<int> draw_priority(const WorldState& state, Rng& rng) {
  std::vector<int> order;
  for (int a = 0; a < kNumAgents; ++a) {
    if (state.alive(a)) order.push_back(a);
  }
  shuffle(rng, std::span<int>(order));
  return order;
}

struct Resolution {
  std::array<Position, kNumAgents> final_pos{};
  std::vector<int> blocked;
};

// Settles simultaneous intents. Passes run over the pending movers in priority
// order; a mover advances when its destination is currently free. Passes repeat
// until nothing changes, so chains (A steps into the cell B vacates) resolve
// regardless of order. Whatever is still pending afterwards stays put: swaps,
// cycles, moves into a stayer's cell, and the lower-priority side of a
// same-destination conflict.
inline Resolution resolve_moves(const WorldState& state,
                                const std::array<Action, kNumAgents>& intents,
                                const std::vector<int>& priority) {
  Resolution res;
  for (int a = 0; a < kNumAgents; ++a) res.final_pos[a] = state.position(a);

  const int side = state.side;
  std::vector<int> occupancy(static_cast<std::size_t>(side * side), -1);
  auto slot = [&](Position p) -> int& {
    return occupancy[static_cast<std::size_t>(p.y * side + p.x)];
  };
  for (int a = 0; a < kNumAgents; ++a) {
    if (state.alive(a)) slot(res.final_pos[a]) = a;
  }

  std::vector<int> pending;
  for (int a : priority) {
    if (!state.alive(a)) throw std::invalid_argument("priority lists a dead agent");
    if (intents[a] != Action::Stay) pending.push_back(a);
  }

  bool progressed = true;
  while (progressed && !pending.empty()) {
    progressed = false;
    std::vector<int> still;
    for (int a : pending) {
      const Position dest = apply(res.final_pos[a], intents[a]);
      if (slot(dest) == -1) {
        slot(res.final_pos[a]) = -1;
        slot(dest) = a;
        res.final_pos[a] = dest;
        progressed = true;
      } else {
        still.push_back(a);
      }
    }
    pending = std::move(still);
  }
  res.blocked = pending;
  std::sort(res.blocked.begin(), res.blocked.end());
  return res;
}

using PreyPolicy = std::function<Action(const WorldState&, int prey_agent, Rng&)>;

// Random prey: uniform over legal moves including Stay.
inline Action uniform_prey_policy(const WorldState& state, int prey_agent, Rng& rng) {
  const std::vector<Action> moves = legal_moves(state, prey_agent);
  return uniform_choice(rng, std::span<const Action>(moves));
}

inline StepOutcome step(const WorldState& state,
                        const std::array<Action, kNumHunters>& hunter_actions, Rng& rng,
                        const PreyPolicy& prey_policy = uniform_prey_policy) {
  StepOutcome out;
  for (int h = 0; h < kNumHunters; ++h) {
    if (!is_legal(state, h, hunter_actions[h])) {
      throw std::invalid_argument("step: illegal action '" +
                                  std::string(to_string(hunter_actions[h])) + "' for hunter " +
                                  std::to_string(h));
    }
    out.declared[h] = hunter_actions[h];
  }
  for (int p = 0; p < kNumPrey; ++p) {
    const int agent = kNumHunters + p;
    out.declared[agent] = Action::Stay;
    if (!state.prey[p].alive) continue;
    const Action a = prey_policy(state, agent, rng);
    if (!is_legal(state, agent, a)) throw std::logic_error("prey policy chose an illegal move");
    out.declared[agent] = a;
  }

  const std::vector<int> priority = draw_priority(state, rng);
  Resolution res = resolve_moves(state, out.declared, priority);

  WorldState next = state;
  for (int h = 0; h < kNumHunters; ++h) next.hunters[h] = res.final_pos[h];
  for (int p = 0; p < kNumPrey; ++p) {
    if (next.prey[p].alive) next.prey[p].pos = res.final_pos[kNumHunters + p];
  }
  next.step_count = state.step_count + 1;

  // Captures are judged on the post-move board before anyone is removed.
  for (int p = 0; p < kNumPrey; ++p) {
    if (next.prey[p].alive && is_captured(next, p)) {
      out.captures.push_back({p, next.prey[p].kind});
    }
  }
  for (const Capture& c : out.captures) next.prey[c.prey_index].alive = false;

  out.next_state = next;
  out.blocked_moves = std::move(res.blocked);
  return out;
}

// Manhattan distance between the two prey ("gd"). Defined while both exist on
// the board; callers pass the state in which they want it measured.
inline int prey_distance(const WorldState& state) {
  return manhattan_distance(state.prey[0].pos, state.prey[1].pos);
}

}  // namespace hmrl::env
