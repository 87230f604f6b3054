#pragma once

// Per-block capture metrics and the files a run directory holds.

#include <cmath>
#include <map>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmrl/agent.hpp"
#include "hmrl/config.hpp"
#include "hmrl/experiment.hpp"
#include "hmrl/q_learning.hpp"
#include "hmrl/table_io.hpp"
#include "hmrl/trajectory.hpp"

namespace hmrl::experiment {

struct BlockMetrics {
  Block block;
  std::size_t trials = 0;
  std::size_t safety_captures = 0;     // positive prey captured
  std::size_t safety_far = 0;          // ... with gd > n1
  std::size_t dangerous_captures = 0;
  std::size_t step_capped = 0;
  double safety_target = 0.0;
  std::optional<double> within_safety;     // undefined without safety captures
  std::optional<double> within_dangerous;
  double positive_ratio = 0.0;
  std::optional<double> mean_distance;     // gd over every capture in the block
  std::optional<double> var_distance;
  double mean_steps = 0.0;
  double var_steps = 0.0;
  double mean_actions = 0.0;  // per hunter
  double var_actions = 0.0;
  friend bool operator==(const BlockMetrics&, const BlockMetrics&) = default;
};

namespace detail {
struct Moments {
  double mean = 0.0;
  double var = 0.0;  // population variance
};

inline Moments moments(std::span<const double> xs) {
  Moments m;
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(xs.size());
  return m;
}
}  // namespace detail

// Positive ratio is formed as safety_target * within_safety so the identity
// between the three holds exactly in floating point; it equals
// |safety ∩ far| / trials up to rounding.
inline std::vector<BlockMetrics> compute_metrics(std::span<const TrialRecord> records, std::span<const Block> blocks,
                                                 int n1) {
  if (records.empty()) throw std::invalid_argument("compute_metrics: no records");
  std::vector<BlockMetrics> out;
  for (const Block& b : blocks) {
    BlockMetrics m;
    m.block = b;
    std::vector<double> steps, actions, dist;
    for (const TrialRecord& r : records) {
      if (r.trial < b.first || r.trial > b.last) continue;
      ++m.trials;
      steps.push_back(static_cast<double>(r.steps));
      actions.push_back(r.per_hunter_actions());
      if (r.gd_at_capture) dist.push_back(static_cast<double>(*r.gd_at_capture));
      switch (r.outcome) {
        case TrialOutcome::PositiveCaptured:
          ++m.safety_captures;
          if (!r.gd_at_capture) throw std::invalid_argument("compute_metrics: capture without a distance");
          if (*r.gd_at_capture > n1) ++m.safety_far;
          break;
        case TrialOutcome::DangerousCaptured: ++m.dangerous_captures; break;
        case TrialOutcome::StepCapped: ++m.step_capped; break;
      }
    }
    if (m.trials == 0) throw std::invalid_argument("compute_metrics: block without trials");
    const double n = static_cast<double>(m.trials);
    m.safety_target = static_cast<double>(m.safety_captures) / n;
    if (m.safety_captures > 0) {
      const double s = static_cast<double>(m.safety_captures);
      m.within_safety = static_cast<double>(m.safety_far) / s;
      m.within_dangerous = static_cast<double>(m.safety_captures - m.safety_far) / s;
      m.positive_ratio = m.safety_target * *m.within_safety;
    }
    const auto sm = detail::moments(steps);
    const auto am = detail::moments(actions);
    m.mean_steps = sm.mean;
    m.var_steps = sm.var;
    m.mean_actions = am.mean;
    m.var_actions = am.var;
    if (!dist.empty()) {
      const auto dm = detail::moments(dist);
      m.mean_distance = dm.mean;
      m.var_distance = dm.var;
    }
    out.push_back(m);
  }
  return out;
}

inline bool metric_identity_holds(const BlockMetrics& m) {
  if (!m.within_safety) return m.positive_ratio == 0.0 && m.safety_target == 0.0;
  return m.positive_ratio == m.safety_target * *m.within_safety;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr std::string_view kBlocksHeader =
    "first,last,trials,safety_captures,safety_far,dangerous_captures,step_capped,safety_target,within_safety,"
    "within_dangerous,positive_ratio,mean_distance,var_distance,mean_steps,var_steps,mean_actions,var_actions";

inline constexpr std::string_view kTrialsHeader = "trial,steps,actions,outcome,gd_at_capture";

inline std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline void write_blocks_csv(std::ostream& os, std::span<const BlockMetrics> blocks) {
  os << kBlocksHeader << '\n';
  for (const auto& m : blocks) {
    os << m.block.first << ',' << m.block.last << ',' << m.trials << ',' << m.safety_captures << ',' << m.safety_far
       << ',' << m.dangerous_captures << ',' << m.step_capped << ',' << format_double(m.safety_target) << ','
       << opt(m.within_safety) << ',' << opt(m.within_dangerous) << ',' << format_double(m.positive_ratio) << ','
       << opt(m.mean_distance) << ',' << opt(m.var_distance) << ',' << format_double(m.mean_steps) << ','
       << format_double(m.var_steps) << ',' << format_double(m.mean_actions) << ',' << format_double(m.var_actions)
       << '\n';
  }
}

inline std::vector<BlockMetrics> read_blocks_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kBlocksHeader) throw std::runtime_error("blocks.csv: unexpected header");
  std::vector<BlockMetrics> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 17) throw std::runtime_error("blocks.csv: expected 17 columns");
    auto sz = [&](std::size_t i) { return static_cast<std::size_t>(parse_int(f[i])); };
    auto od = [&](std::size_t i) -> std::optional<double> {
      if (f[i].empty()) return std::nullopt;
      return parse_double(f[i]);
    };
    BlockMetrics m;
    m.block = {sz(0), sz(1)};
    m.trials = sz(2);
    m.safety_captures = sz(3);
    m.safety_far = sz(4);
    m.dangerous_captures = sz(5);
    m.step_capped = sz(6);
    m.safety_target = parse_double(f[7]);
    m.within_safety = od(8);
    m.within_dangerous = od(9);
    m.positive_ratio = parse_double(f[10]);
    m.mean_distance = od(11);
    m.var_distance = od(12);
    m.mean_steps = parse_double(f[13]);
    m.var_steps = parse_double(f[14]);
    m.mean_actions = parse_double(f[15]);
    m.var_actions = parse_double(f[16]);
    out.push_back(m);
  }
  return out;
}

inline void write_trials_csv(std::ostream& os, std::span<const TrialRecord> records) {
  os << kTrialsHeader << '\n';
  for (const auto& r : records) {
    os << r.trial << ',' << r.steps << ',' << r.actions << ',' << to_string(r.outcome) << ',';
    if (r.gd_at_capture) os << *r.gd_at_capture;
    os << '\n';
  }
}

inline std::vector<TrialRecord> read_trials_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kTrialsHeader) throw std::runtime_error("trials.csv: unexpected header");
  std::vector<TrialRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 5) throw std::runtime_error("trials.csv: expected 5 columns");
    TrialRecord r;
    r.trial = static_cast<std::size_t>(parse_int(f[0]));
    r.steps = static_cast<std::size_t>(parse_int(f[1]));
    r.actions = static_cast<std::size_t>(parse_int(f[2]));
    r.outcome = parse_outcome(f[3]);
    if (!f[4].empty()) r.gd_at_capture = static_cast<int>(parse_int(f[4]));
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run directory

namespace fs = std::filesystem;

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + p.string() + "' for writing");
  return os;
}

inline void check_written(std::ofstream& os, const fs::path& p) {
  os.flush();
  if (!os) throw std::runtime_error("write to '" + p.string() + "' failed");
}

// Writes metadata.txt (full config, usable as --config), blocks.csv and
// trials.csv into `dir`.
inline void export_report(const ExperimentConfig& config, std::span<const BlockMetrics> metrics,
                          std::span<const TrialRecord> records, const fs::path& dir) {
  fs::create_directories(dir);
  {
    const auto p = dir / "metadata.txt";
    auto os = open_out(p);
    write_config(os, config);
    check_written(os, p);
  }
  {
    const auto p = dir / "blocks.csv";
    auto os = open_out(p);
    write_blocks_csv(os, metrics);
    check_written(os, p);
  }
  {
    const auto p = dir / "trials.csv";
    auto os = open_out(p);
    write_trials_csv(os, records);
    check_written(os, p);
  }
}

// Learned tables: weights/hunter-<e>-prey-<l>.tsv and q/hunter-<e>.tsv.
inline void export_tables(const ExperimentConfig& config, const agent::Team& team, const fs::path& dir) {
  fs::create_directories(dir / "weights");
  fs::create_directories(dir / "q");
  Metadata run_meta;
  for (const auto& [k, v] : to_metadata(config)) {
    if (k == "rho" || k == "mu" || k == "n1" || k == "n2" || k == "atf" || k.starts_with("epsilon") || k == "seed") {
      run_meta.emplace_back(k, v);
    }
  }
  for (const auto& h : team) {
    for (int l = 0; l < env::kNumPrey; ++l) {
      const auto p = dir / "weights" / ("hunter-" + std::to_string(h.id()) + "-prey-" + std::to_string(l) + ".tsv");
      auto os = open_out(p);
      Metadata meta = run_meta;
      meta.emplace_back("hunter", std::to_string(h.id()));
      meta.emplace_back("prey", std::to_string(l));
      meta.emplace_back("state_fields", "hunter,prey,goal_x,goal_y,peer_x,peer_y");
      meta.emplace_back("action_fields", "target_x,target_y");
      ps::save_weights<agent::ModuleKeyCodec>(os, h.banks()[static_cast<std::size_t>(l)], std::move(meta));
      check_written(os, p);
    }
    const auto p = dir / "q" / ("hunter-" + std::to_string(h.id()) + ".tsv");
    auto os = open_out(p);
    Metadata meta = run_meta;
    meta.emplace_back("hunter", std::to_string(h.id()));
    meta.emplace_back("state_fields", "dx,dy,tag");
    ql::save_qtable(os, h.q(), std::move(meta));
    check_written(os, p);
  }
}

inline std::ifstream open_in(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + p.string() + "'");
  return is;
}

// Inverse of export_tables: a team whose tables are read from `dir`.
inline agent::Team import_tables(const ExperimentConfig& config, const fs::path& dir) {
  agent::Team team = agent::make_team(config.hunter_config());
  for (auto& h : team) {
    for (int l = 0; l < env::kNumPrey; ++l) {
      auto is = open_in(dir / "weights" / ("hunter-" + std::to_string(h.id()) + "-prey-" + std::to_string(l) + ".tsv"));
      h.banks()[static_cast<std::size_t>(l)] =
          ps::load_weights<agent::ModuleKeyCodec, agent::ModuleKey, agent::ModuleKeyHash>(is);
    }
    auto is = open_in(dir / "q" / ("hunter-" + std::to_string(h.id()) + ".tsv"));
    h.q() = ql::load_qtable(is);
  }
  return team;
}

struct RunSummary {
  fs::path dir;
  ExperimentConfig config;
  std::vector<BlockMetrics> blocks;
};

inline RunSummary read_run(const fs::path& dir) {
  RunSummary r{dir, {}, {}};
  {
    auto is = open_in(dir / "metadata.txt");
    r.config = parse_config(is);
  }
  auto is = open_in(dir / "blocks.csv");
  r.blocks = read_blocks_csv(is);
  if (r.blocks.empty()) throw std::runtime_error("'" + (dir / "blocks.csv").string() + "' has no blocks");
  return r;
}

// Final-block summary of every run plus the seed average per ATF setting.
inline void write_summary(std::ostream& os, std::span<const RunSummary> runs) {
  os << "run,seed,atf,trials,final_block,safety_target,within_safety,positive_ratio,mean_steps,mean_actions\n";
  struct Acc {
    std::size_t n = 0;
    double st = 0, pr = 0, steps = 0, actions = 0;
  };
  std::map<bool, Acc> by_atf;
  for (const auto& r : runs) {
    const BlockMetrics& m = r.blocks.back();
    os << r.dir.filename().string() << ',' << r.config.seed << ',' << (r.config.atf_enabled ? "on" : "off") << ','
       << r.config.trials << ',' << m.block.first << '-' << m.block.last << ',' << format_double(m.safety_target)
       << ',' << opt(m.within_safety) << ',' << format_double(m.positive_ratio) << ','
       << format_double(m.mean_steps) << ',' << format_double(m.mean_actions) << '\n';
    Acc& a = by_atf[r.config.atf_enabled];
    ++a.n;
    a.st += m.safety_target;
    a.pr += m.positive_ratio;
    a.steps += m.mean_steps;
    a.actions += m.mean_actions;
  }
  for (const auto& [atf, a] : by_atf) {
    const double n = static_cast<double>(a.n);
    os << "mean," << a.n << ',' << (atf ? "on" : "off") << ",,," << format_double(a.st / n) << ",,"
       << format_double(a.pr / n) << ',' << format_double(a.steps / n) << ',' << format_double(a.actions / n)
       << '\n';
  }
}

}  // namespace hmrl::experiment
