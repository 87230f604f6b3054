#pragma once

// Experiment configuration and its `key = value` text form. The same text is
// written as run metadata, so a run directory's metadata.txt can be fed back
// with --config to repeat the run.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hmrl/agent.hpp"
#include "hmrl/env.hpp"
#include "hmrl/knowledge.hpp"
#include "hmrl/profit_sharing.hpp"
#include "hmrl/q_learning.hpp"
#include "hmrl/table_io.hpp"

namespace hmrl::experiment {

enum class RuleFallback { Greedy, Stay };

struct Block {
  std::size_t first = 1;
  std::size_t last = 1;
  friend bool operator==(const Block&, const Block&) = default;
};

// Block ends used by default, clipped to the trial count.
inline constexpr std::size_t kDefaultBlockEnds[] = {200, 2000, 17000, 20000};

struct ExperimentConfig {
  std::size_t trials = 2000;
  std::size_t step_cap = 3000;
  std::uint64_t seed = 1;
  bool atf_enabled = true;
  env::GridConfig grid;
  ps::Params ps{5.0, 4, 100.0};
  ql::Params q{0.1, 0.9};
  ql::EpsilonSchedule epsilon{0.1, 0.01, 0.5};
  agent::ATFieldParams atf{2, 5, 0.8};
  agent::SelectParams select;
  double dangerous_reward = 0.0;
  double arrival_reward = 100.0;
  std::vector<std::size_t> block_ends;  // empty: defaults
  std::optional<knowledge::TrialWindow> log_window;  // empty: last 100 trials
  bool reset_tables_each_trial = false;
  RuleFallback rule_fallback = RuleFallback::Greedy;
  std::size_t trajectory_trial = 0;  // 0: no trajectory dump

  void validate() const {
    if (trials == 0) throw std::invalid_argument("config: trials must be > 0");
    if (step_cap == 0) throw std::invalid_argument("config: step_cap must be > 0");
    q.validate();
    atf.validate();
    select.validate();
    ps::Params(ps.discount, ps.effective_rules, ps.reward);
    if (!(epsilon.start >= 0.0 && epsilon.start <= 1.0 && epsilon.end >= 0.0 && epsilon.end <= 1.0)) {
      throw std::invalid_argument("config: epsilon values must lie in [0,1]");
    }
    if (!(epsilon.anneal_fraction >= 0.0 && epsilon.anneal_fraction <= 1.0)) {
      throw std::invalid_argument("config: epsilon_anneal_fraction must lie in [0,1]");
    }
    if (grid.side * grid.side < env::kNumAgents) throw std::invalid_argument("config: grid too small");
    if (!std::is_sorted(block_ends.begin(), block_ends.end()) ||
        std::adjacent_find(block_ends.begin(), block_ends.end()) != block_ends.end()) {
      throw std::invalid_argument("config: block boundaries must be strictly increasing");
    }
    for (std::size_t b : block_ends) {
      if (b < 1 || b > trials) throw std::invalid_argument("config: block boundary outside [1, trials]");
    }
    if (trajectory_trial > trials) throw std::invalid_argument("config: trajectory_trial beyond the last trial");
  }

  std::vector<Block> blocks() const {
    std::vector<std::size_t> ends = block_ends;
    if (ends.empty()) {
      for (std::size_t e : kDefaultBlockEnds) {
        if (e <= trials) ends.push_back(e);
      }
    }
    if (ends.empty() || ends.back() != trials) ends.push_back(trials);
    std::vector<Block> out;
    std::size_t first = 1;
    for (std::size_t e : ends) {
      out.push_back({first, e});
      first = e + 1;
    }
    return out;
  }

  knowledge::TrialWindow instance_window() const {
    if (log_window) return *log_window;
    return {trials > 100 ? trials - 99 : 1, trials};
  }

  agent::HunterConfig hunter_config() const {
    agent::HunterConfig h;
    h.select = select;
    h.atf = atf;
    h.atf_enabled = atf_enabled;
    h.q = q;
    h.capture_reward = ps.reward;
    h.dangerous_reward = dangerous_reward;
    h.arrival_reward = arrival_reward;
    h.trace_cap = step_cap;
    return h;
  }
};

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

// Every field, in a fixed order.
inline Metadata to_metadata(const ExperimentConfig& c) {
  Metadata m;
  auto put = [&](std::string k, std::string v) { m.emplace_back(std::move(k), std::move(v)); };
  put("trials", std::to_string(c.trials));
  put("step_cap", std::to_string(c.step_cap));
  put("seed", std::to_string(c.seed));
  put("atf", c.atf_enabled ? "on" : "off");
  put("grid_side", std::to_string(c.grid.side));
  put("prey_kinds", std::string(env::to_string(c.grid.prey_kinds[0])) + "," +
                        std::string(env::to_string(c.grid.prey_kinds[1])));
  put("ps_discount", format_double(c.ps.discount));
  put("ps_effective_rules", std::to_string(c.ps.effective_rules));
  put("reward", format_double(c.ps.reward));
  put("dangerous_reward", format_double(c.dangerous_reward));
  put("arrival_reward", format_double(c.arrival_reward));
  put("alpha", format_double(c.q.alpha));
  put("gamma", format_double(c.q.gamma));
  put("epsilon_start", format_double(c.epsilon.start));
  put("epsilon_end", format_double(c.epsilon.end));
  put("epsilon_anneal_fraction", format_double(c.epsilon.anneal_fraction));
  put("rho", format_double(c.atf.rho));
  put("mu", format_double(c.select.mu));
  put("n1", std::to_string(c.atf.near));
  put("n2", std::to_string(c.atf.far));
  put("select_mode", c.select.mode == agent::SelectMode::TwoPrey ? "two_prey" : "single");
  put("candidates", c.select.candidates == agent::CandidateSet::Ring ? "ring" : "all");
  put("ring_radius", std::to_string(c.select.ring_radius));
  std::vector<std::size_t> ends;
  for (const Block& b : c.blocks()) ends.push_back(b.last);
  put("blocks", join_sizes(ends));
  const auto w = c.instance_window();
  put("log_window", c.log_window && w.empty() ? "none" : std::to_string(w.first) + "-" + std::to_string(w.last));
  put("reset_tables_each_trial", c.reset_tables_each_trial ? "true" : "false");
  put("rule_fallback", c.rule_fallback == RuleFallback::Greedy ? "greedy" : "stay");
  put("trajectory_trial", std::to_string(c.trajectory_trial));
  return m;
}

inline bool parse_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw std::invalid_argument("config: '" + key + "' expects on/off or true/false, got '" + std::string(v) + "'");
}

// Applies one `key = value` setting. Unknown keys are errors.
inline void apply_setting(ExperimentConfig& c, const std::string& key, std::string_view v) {
  auto size = [&] {
    const long long n = parse_int(v);
    if (n < 0) throw std::invalid_argument("config: '" + key + "' must be non-negative");
    return static_cast<std::size_t>(n);
  };
  auto real = [&] { return parse_double(v); };
  if (key == "trials") c.trials = size();
  else if (key == "step_cap") c.step_cap = size();
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(size());
  else if (key == "atf") c.atf_enabled = parse_bool(key, v);
  else if (key == "grid_side") c.grid.side = static_cast<int>(size());
  else if (key == "prey_kinds") {
    const auto parts = split(v, ',');
    if (parts.size() != 2) throw std::invalid_argument("config: prey_kinds needs two comma-separated kinds");
    c.grid.prey_kinds = {env::parse_prey_kind(trim(parts[0])), env::parse_prey_kind(trim(parts[1]))};
  }
  else if (key == "ps_discount") c.ps.discount = real();
  else if (key == "ps_effective_rules") c.ps.effective_rules = static_cast<int>(size());
  else if (key == "reward") c.ps.reward = real();
  else if (key == "dangerous_reward") c.dangerous_reward = real();
  else if (key == "arrival_reward") c.arrival_reward = real();
  else if (key == "alpha") c.q.alpha = real();
  else if (key == "gamma") c.q.gamma = real();
  else if (key == "epsilon_start") c.epsilon.start = real();
  else if (key == "epsilon_end") c.epsilon.end = real();
  else if (key == "epsilon_anneal_fraction") c.epsilon.anneal_fraction = real();
  else if (key == "rho") c.atf.rho = real();
  else if (key == "mu") c.select.mu = real();
  else if (key == "n1") c.atf.near = static_cast<int>(size());
  else if (key == "n2") c.atf.far = static_cast<int>(size());
  else if (key == "select_mode") {
    if (v == "two_prey") c.select.mode = agent::SelectMode::TwoPrey;
    else if (v == "single") c.select.mode = agent::SelectMode::Single;
    else throw std::invalid_argument("config: select_mode expects two_prey or single");
  }
  else if (key == "candidates") {
    if (v == "ring") c.select.candidates = agent::CandidateSet::Ring;
    else if (v == "all") c.select.candidates = agent::CandidateSet::All;
    else throw std::invalid_argument("config: candidates expects ring or all");
  }
  else if (key == "ring_radius") c.select.ring_radius = static_cast<int>(size());
  else if (key == "blocks") {
    c.block_ends.clear();
    if (!v.empty()) {
      for (auto part : split(v, ',')) c.block_ends.push_back(static_cast<std::size_t>(parse_int(trim(part))));
    }
  }
  else if (key == "log_window") {
    if (v == "none") {
      c.log_window = knowledge::TrialWindow{1, 0};
    } else {
      const auto parts = split(v, '-');
      if (parts.size() != 2) throw std::invalid_argument("config: log_window expects FIRST-LAST or none");
      c.log_window = knowledge::TrialWindow{static_cast<std::size_t>(parse_int(trim(parts[0]))),
                                            static_cast<std::size_t>(parse_int(trim(parts[1])))};
    }
  }
  else if (key == "reset_tables_each_trial") c.reset_tables_each_trial = parse_bool(key, v);
  else if (key == "rule_fallback") {
    if (v == "greedy") c.rule_fallback = RuleFallback::Greedy;
    else if (v == "stay") c.rule_fallback = RuleFallback::Stay;
    else throw std::invalid_argument("config: rule_fallback expects greedy or stay");
  }
  else if (key == "trajectory_trial") c.trajectory_trial = size();
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

// Line-oriented `key = value`; blank lines and lines starting with '#' that do
// not carry a setting are ignored. A leading "# " is accepted so metadata files
// parse as configs.
inline ExperimentConfig parse_config(std::istream& is, ExperimentConfig base = {}) {
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string_view body = trim(line);
    if (body.empty()) continue;
    if (body.starts_with("#")) {
      body = trim(body.substr(1));
      if (body.find('=') == std::string_view::npos) continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("config: expected 'key = value' at line " + std::to_string(line_no));
    }
    const std::string key(trim(body.substr(0, eq)));
    try {
      apply_setting(base, key, trim(body.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string(e.what()) + " (line " + std::to_string(line_no) + ")");
    }
  }
  base.validate();
  return base;
}

inline ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base = {}) {
  std::istringstream is(text);
  return parse_config(is, std::move(base));
}

inline void write_config(std::ostream& os, const ExperimentConfig& c) {
  for (const auto& [k, v] : to_metadata(c)) os << k << " = " << v << '\n';
}

}  // namespace hmrl::experiment
