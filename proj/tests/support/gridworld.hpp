#pragma once

// Deterministic single-target gridworld used to check Q-learning against value
// iteration. States are cells y * side + x; the target cell is absorbing and
// entering it pays `reward`.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "hmrl/env.hpp"
#include "hmrl/q_learning.hpp"
#include "hmrl/rng.hpp"

namespace gridworld {

using hmrl::env::Action;
using hmrl::env::Position;

struct Grid {
  int side = 5;
  Position target{3, 1};
  double reward = 100.0;
  double gamma = 0.9;

  int cells() const { return side * side; }
  Position pos(int s) const { return {s % side, s / side}; }
  int state(Position p) const { return p.y * side + p.x; }

  std::vector<Action> legal(int s) const {
    std::vector<Action> out;
    for (Action a : hmrl::env::kAllActions) {
      if (hmrl::env::in_bounds(hmrl::env::apply(pos(s), a), side)) out.push_back(a);
    }
    return out;
  }
  int next(int s, Action a) const { return state(hmrl::env::apply(pos(s), a)); }
  bool terminal(int s) const { return pos(s) == target; }
};

// Transition lists are indexed by legal-action position.
inline hmrl::ql::Mdp to_mdp(const Grid& g) {
  hmrl::ql::Mdp mdp;
  mdp.gamma = g.gamma;
  mdp.transitions.resize(static_cast<std::size_t>(g.cells()));
  mdp.terminal.resize(static_cast<std::size_t>(g.cells()));
  for (int s = 0; s < g.cells(); ++s) {
    mdp.terminal[static_cast<std::size_t>(s)] = g.terminal(s);
    for (Action a : g.legal(s)) {
      const int n = g.next(s, a);
      mdp.transitions[static_cast<std::size_t>(s)].push_back({{static_cast<std::size_t>(n), 1.0, g.terminal(n) ? g.reward : 0.0}});
    }
  }
  return mdp;
}

using GridQ = hmrl::ql::QTable<int, Action>;

// Off-policy Q-learning from a uniform random behaviour policy, episodes from
// random non-target starts, step size 1 / n(s,a)^0.6.
inline GridQ learn(const Grid& g, std::size_t updates, std::uint64_t seed) {
  hmrl::Rng rng = hmrl::make_rng(seed);
  GridQ q(hmrl::ql::Params(1.0, g.gamma));
  std::vector<std::size_t> visits(static_cast<std::size_t>(g.cells()) * 5, 0);
  std::size_t done = 0;
  while (done < updates) {
    int s;
    do {
      s = static_cast<int>(hmrl::uniform_index(rng, static_cast<std::size_t>(g.cells())));
    } while (g.terminal(s));
    while (!g.terminal(s) && done < updates) {
      const auto legal = g.legal(s);
      const Action a = hmrl::uniform_choice(rng, std::span<const Action>(legal));
      const int n = g.next(s, a);
      auto& count = visits[static_cast<std::size_t>(s) * 5 + static_cast<std::size_t>(a)];
      ++count;
      q.set_alpha(1.0 / std::pow(static_cast<double>(count), 0.6));
      const auto next_legal = g.legal(n);
      hmrl::ql::q_update(q, s, a, g.terminal(n) ? g.reward : 0.0, n, g.terminal(n),
                         std::span<const Action>(next_legal));
      s = n;
      ++done;
    }
  }
  return q;
}

struct Comparison {
  double max_value_error = 0.0;  // over all non-terminal states
  bool same_policy = true;       // every state: Q's greedy set equals the optimal set
};

// Greedy sets: actions within `tie` of the best value. Value iteration ties are
// exact up to 1e-9; the learned table gets a slightly looser `tie`.
inline Comparison compare(const Grid& g, const GridQ& q, double tie = 2e-3) {
  const auto sol = hmrl::ql::solve_value_iteration(to_mdp(g));
  Comparison c;
  for (int s = 0; s < g.cells(); ++s) {
    if (g.terminal(s)) continue;
    const auto legal = g.legal(s);
    double best_q = -INFINITY;
    for (Action a : legal) best_q = std::max(best_q, q.value(s, a));
    c.max_value_error = std::max(c.max_value_error, std::abs(best_q - sol.values[static_cast<std::size_t>(s)]));
    for (std::size_t i = 0; i < legal.size(); ++i) {
      const bool optimal = sol.q[static_cast<std::size_t>(s)][i] >= sol.values[static_cast<std::size_t>(s)] - 1e-9;
      const bool greedy = q.value(s, legal[i]) >= best_q - tie;
      if (optimal != greedy) c.same_policy = false;
    }
  }
  return c;
}

}  // namespace gridworld
