#pragma once

// Trial loop, block metrics and CSV reports.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmrl/agent.hpp"
#include "hmrl/config.hpp"
#include "hmrl/env.hpp"
#include "hmrl/knowledge.hpp"
#include "hmrl/q_learning.hpp"
#include "hmrl/rng.hpp"
#include "hmrl/table_io.hpp"
#include "hmrl/trajectory.hpp"

namespace hmrl::experiment {

enum class TrialOutcome { PositiveCaptured, DangerousCaptured, StepCapped };

inline std::string_view to_string(TrialOutcome o) {
  switch (o) {
    case TrialOutcome::PositiveCaptured: return "positive";
    case TrialOutcome::DangerousCaptured: return "dangerous";
    case TrialOutcome::StepCapped: return "capped";
  }
  return "?";
}

inline TrialOutcome parse_outcome(std::string_view s) {
  if (s == "positive") return TrialOutcome::PositiveCaptured;
  if (s == "dangerous") return TrialOutcome::DangerousCaptured;
  if (s == "capped") return TrialOutcome::StepCapped;
  throw std::invalid_argument("unknown trial outcome '" + std::string(s) + "'");
}

struct TrialRecord {
  std::size_t trial = 0;
  std::size_t steps = 0;
  // Hunter actions summed over the team: one per hunter per step plus one
  // bookkeeping action each time a hunter reaches its target and is re-tasked.
  std::size_t actions = 0;
  TrialOutcome outcome = TrialOutcome::StepCapped;
  std::optional<int> gd_at_capture;
  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;

  // Per-hunter action count.
  double per_hunter_actions() const { return static_cast<double>(actions) / env::kNumHunters; }
};

struct RunResult {
  std::vector<TrialRecord> records;
  agent::Team team;
  std::size_t instances_logged = 0;
  std::size_t equidistant_ties = 0;
  std::vector<env::TrajectoryRow> trajectory;
};

// Optional per-run plumbing.
struct RunHooks {
  knowledge::InstanceSink instance_sink;     // receives instances inside the log window
  agent::LowerPolicy lower_policy;           // replaces the lower layer's action choice
  std::optional<agent::Team> initial_team;   // start from these tables instead of empty ones
};

// Trials run sequentially; the learned tables are the only state carried from
// one trial to the next. Each trial starts from a fresh random world and ends at
// the first capture (either prey) or at step_cap. If both prey fall on the same
// step the trial counts as a positive capture. All randomness derives from
// config.seed: stream 0 drives the world, stream 1 + e drives hunter e.
inline RunResult run_trials(const ExperimentConfig& config, const RunHooks& hooks = {}) {
  config.validate();
  RunResult result{{}, hooks.initial_team ? *hooks.initial_team : agent::make_team(config.hunter_config()), 0, 0, {}};
  agent::Team& team = result.team;

  Rng world_rng = make_rng(derive_seed(config.seed, 0));
  std::array<Rng, env::kNumHunters> hunter_rng;
  for (int e = 0; e < env::kNumHunters; ++e) hunter_rng[e] = make_rng(derive_seed(config.seed, 1 + e));

  std::optional<knowledge::InstanceLog> log;
  if (hooks.instance_sink) log.emplace(config.instance_window(), hooks.instance_sink);

  result.records.reserve(config.trials);
  for (std::size_t trial = 1; trial <= config.trials; ++trial) {
    const double epsilon = config.epsilon.at(trial - 1, config.trials);
    if (config.reset_tables_each_trial) {
      for (auto& h : team) h.reset_learning();
    }
    for (auto& h : team) h.reset_counters();

    env::WorldState state = env::new_world(world_rng, config.grid);
    env::TrajectoryRecorder recorder;
    const bool dump = trial == config.trajectory_trial;
    if (dump) recorder.start(state);

    TrialRecord rec;
    rec.trial = trial;
    for (;;) {
      std::array<env::Action, env::kNumHunters> actions{};
      for (int e = 0; e < env::kNumHunters; ++e) {
        actions[e] = team[e].act(state, hunter_rng[e], epsilon, hooks.lower_policy);
        if (log) {
          const auto& p = *team[e].pending();
          log->record(trial, knowledge::Instance{p.state.dx, p.state.dy, p.action});
        }
      }
      const env::StepOutcome out = env::step(state, actions, world_rng);
      for (auto& h : team) h.observe(state, out);
      agent::deliver_rewards(team, out);
      if (dump) recorder.record(out);
      state = out.next_state;
      ++rec.steps;

      if (!out.captures.empty()) {
        const bool positive = std::any_of(out.captures.begin(), out.captures.end(), [](const env::Capture& c) {
          return c.kind == env::PreyKind::Positive;
        });
        rec.outcome = positive ? TrialOutcome::PositiveCaptured : TrialOutcome::DangerousCaptured;
        rec.gd_at_capture = env::prey_distance(state);
        break;
      }
      if (rec.steps >= config.step_cap) {
        rec.outcome = TrialOutcome::StepCapped;
        break;
      }
    }

    std::size_t resets = 0;
    for (auto& h : team) {
      resets += h.target_resets();
      result.equidistant_ties += h.equidistant_ties();
      h.end_trial();
    }
    rec.actions = rec.steps * env::kNumHunters + resets;
    result.records.push_back(rec);
    if (dump) result.trajectory = recorder.rows();
  }
  result.instances_logged = log ? log->count() : 0;
  return result;
}

inline RunResult run_training(const ExperimentConfig& config, const RunHooks& hooks = {}) {
  return run_trials(config, hooks);
}

// Same loop with hunters walking by the distilled rules. Pass the trained team
// through hooks.initial_team to replace only its lower layer; otherwise the
// upper layer starts empty. Both layers keep learning; when no rule matches,
// the hunter falls back to its Q-greedy action (or Stay). A rule action that
// would leave the grid is replaced by Stay.
inline RunResult run_rule_eval(const ExperimentConfig& config, std::vector<knowledge::IfThenRule> rules,
                               RunHooks hooks = {}) {
  auto shared = std::make_shared<const std::vector<knowledge::IfThenRule>>(std::move(rules));
  const RuleFallback fallback = config.rule_fallback;
  hooks.lower_policy = [shared, fallback](const ql::RelState& rel, const env::WorldState& s,
                                          const agent::Hunter& hunter, Rng& rng) {
    return knowledge::rule_policy_act(std::span<const knowledge::IfThenRule>(*shared), rel.dx, rel.dy, [&] {
      if (fallback == RuleFallback::Stay) return env::Action::Stay;
      const auto legal = env::legal_moves(s, hunter.id());
      return ql::greedy(hunter.q(), rel, std::span<const env::Action>(legal), rng);
    });
  };
  return run_trials(config, hooks);
}

}  // namespace hmrl::experiment
