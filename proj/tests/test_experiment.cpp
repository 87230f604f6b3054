#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hmrl/report.hpp"

using namespace hmrl;
using namespace hmrl::experiment;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small(std::size_t trials = 60, std::uint64_t seed = 3) {
  ExperimentConfig c;
  c.trials = trials;
  c.seed = seed;
  c.step_cap = 400;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hmrl_test_" + name);
  fs::remove_all(p);
  return p;
}

TrialRecord rec(std::size_t trial, TrialOutcome o, std::optional<int> gd, std::size_t steps = 10) {
  return TrialRecord{trial, steps, steps * 4, o, gd};
}

}  // namespace

TEST(RunTrials, SameSeedSameRecords) {
  const auto a = run_training(small());
  const auto b = run_training(small());
  EXPECT_EQ(a.records, b.records);
  const auto c = run_training(small(60, 4));
  EXPECT_NE(a.records, c.records);
}

TEST(RunTrials, OneShortTrial) {
  ExperimentConfig c;
  c.trials = 1;
  c.step_cap = 10;
  const auto r = run_training(c);
  ASSERT_EQ(r.records.size(), 1u);
  const auto& t = r.records[0];
  EXPECT_LE(t.steps, 10u);
  EXPECT_GE(t.actions, 4 * t.steps);
  EXPECT_EQ(t.outcome == TrialOutcome::StepCapped, !t.gd_at_capture.has_value());
  if (t.outcome == TrialOutcome::StepCapped) {
    EXPECT_EQ(t.steps, 10u);
  }
}

TEST(RunTrials, StepCapIsNeverExceeded) {
  auto c = small(40);
  c.step_cap = 25;
  for (const auto& r : run_training(c).records) {
    EXPECT_LE(r.steps, 25u);
    EXPECT_GE(r.steps, 1u);
  }
}

TEST(RunTrials, TablesCarryAcrossTrialsUnlessReset) {
  auto c = small(20);
  const auto kept = run_training(c);
  std::size_t kept_size = 0;
  for (const auto& h : kept.team) kept_size += h.q().size();
  c.reset_tables_each_trial = true;
  const auto reset = run_training(c);
  std::size_t reset_size = 0;
  for (const auto& h : reset.team) reset_size += h.q().size();
  EXPECT_GT(kept_size, reset_size);
}

TEST(RunTrials, TrajectoryOfRequestedTrialReplays) {
  auto c = small(5);
  c.trajectory_trial = 3;
  const auto r = run_training(c);
  ASSERT_FALSE(r.trajectory.empty());
  const auto frames = env::replay_frames(r.trajectory, c.grid.side);
  EXPECT_EQ(frames.size(), r.records[2].steps + 1);
}

TEST(Metrics, BlockArithmetic) {
  std::vector<TrialRecord> rs;
  const int gds[] = {3, 4, 5, 6, 3, 4, 1, 2};
  for (std::size_t i = 0; i < 8; ++i) rs.push_back(rec(i + 1, TrialOutcome::PositiveCaptured, gds[i], 10 + i));
  rs.push_back(rec(9, TrialOutcome::DangerousCaptured, 4, 20));
  rs.push_back(rec(10, TrialOutcome::StepCapped, std::nullopt, 30));
  const std::vector<Block> blocks = {{1, 10}};
  const auto m = compute_metrics(rs, blocks, 2).at(0);
  EXPECT_EQ(m.trials, 10u);
  EXPECT_EQ(m.safety_captures, 8u);
  EXPECT_EQ(m.safety_far, 6u);
  EXPECT_EQ(m.dangerous_captures, 1u);
  EXPECT_EQ(m.step_capped, 1u);
  EXPECT_DOUBLE_EQ(m.safety_target, 0.8);
  EXPECT_DOUBLE_EQ(*m.within_safety, 0.75);
  EXPECT_DOUBLE_EQ(*m.within_dangerous, 0.25);
  EXPECT_DOUBLE_EQ(m.positive_ratio, 0.6);
  EXPECT_TRUE(metric_identity_holds(m));
  // Steps: 10..17, 20, 30.
  const double mean = (10 + 11 + 12 + 13 + 14 + 15 + 16 + 17 + 20 + 30) / 10.0;
  EXPECT_DOUBLE_EQ(m.mean_steps, mean);
  double var = 0;
  for (const auto& r : rs) var += (r.steps - mean) * (r.steps - mean);
  EXPECT_NEAR(m.var_steps, var / 10.0, 1e-12);
  EXPECT_DOUBLE_EQ(m.mean_actions, mean);
  EXPECT_NEAR(*m.mean_distance, (3 + 4 + 5 + 6 + 3 + 4 + 1 + 2 + 4) / 9.0, 1e-12);
}

TEST(Metrics, AllDangerousLeavesWithinUndefined) {
  std::vector<TrialRecord> rs;
  for (std::size_t i = 1; i <= 5; ++i) rs.push_back(rec(i, TrialOutcome::DangerousCaptured, 3));
  const std::vector<Block> blocks = {{1, 5}};
  const auto m = compute_metrics(rs, blocks, 2).at(0);
  EXPECT_EQ(m.safety_target, 0.0);
  EXPECT_FALSE(m.within_safety);
  EXPECT_FALSE(m.within_dangerous);
  EXPECT_EQ(m.positive_ratio, 0.0);
  EXPECT_TRUE(metric_identity_holds(m));
}

TEST(Metrics, BadInput) {
  const std::vector<Block> blocks = {{1, 5}};
  EXPECT_THROW(compute_metrics(std::vector<TrialRecord>{}, blocks, 2), std::invalid_argument);
  const std::vector<TrialRecord> no_gd = {rec(1, TrialOutcome::PositiveCaptured, std::nullopt)};
  EXPECT_THROW(compute_metrics(no_gd, blocks, 2), std::invalid_argument);
  const std::vector<Block> far = {{7, 9}};
  EXPECT_THROW(compute_metrics(std::vector<TrialRecord>{rec(1, TrialOutcome::StepCapped, std::nullopt)}, far, 2),
               std::invalid_argument);
}

TEST(Metrics, IdentityAndComplementOnRealRuns) {
  for (bool atf : {true, false}) {
    auto c = small(120, 8);
    c.atf_enabled = atf;
    c.block_ends = {30, 60, 120};
    const auto r = run_training(c);
    for (const auto& m : compute_metrics(r.records, c.blocks(), c.atf.near)) {
      EXPECT_TRUE(metric_identity_holds(m));
      if (m.within_safety) {
        EXPECT_DOUBLE_EQ(*m.within_safety + *m.within_dangerous, 1.0);
      }
      EXPECT_EQ(m.safety_captures + m.dangerous_captures + m.step_capped, m.trials);
    }
  }
}

TEST(Reports, CsvRoundTrip) {
  auto c = small(80);
  c.block_ends = {20, 80};
  const auto r = run_training(c);
  const auto metrics = compute_metrics(r.records, c.blocks(), c.atf.near);
  std::ostringstream bo, to;
  write_blocks_csv(bo, metrics);
  write_trials_csv(to, r.records);
  std::istringstream bi(bo.str()), ti(to.str());
  EXPECT_EQ(read_blocks_csv(bi), metrics);
  EXPECT_EQ(read_trials_csv(ti), r.records);
  EXPECT_EQ(bo.str().substr(0, bo.str().find('\n')), kBlocksHeader);
}

TEST(Reports, AtfOnAndOffShareColumnLayout) {
  std::vector<std::string> headers;
  for (bool atf : {true, false}) {
    auto c = small(30);
    c.atf_enabled = atf;
    const auto r = run_training(c);
    const auto dir = scratch(atf ? "layout_on" : "layout_off");
    export_report(c, compute_metrics(r.records, c.blocks(), c.atf.near), r.records, dir);
    const std::string blocks = slurp(dir / "blocks.csv");
    headers.push_back(blocks.substr(0, blocks.find('\n')));
    const auto meta = parse_config_text(slurp(dir / "metadata.txt"));
    EXPECT_EQ(meta.atf_enabled, atf);
    EXPECT_EQ(meta.seed, c.seed);
    fs::remove_all(dir);
  }
  EXPECT_EQ(headers[0], headers[1]);
}

TEST(Reports, ExportIsByteIdenticalForSameSeed) {
  std::vector<std::string> contents;
  for (int rep = 0; rep < 2; ++rep) {
    const auto c = small(50, 21);
    const auto r = run_training(c);
    const auto dir = scratch("repeat" + std::to_string(rep));
    export_report(c, compute_metrics(r.records, c.blocks(), c.atf.near), r.records, dir);
    export_tables(c, r.team, dir);
    contents.push_back(slurp(dir / "blocks.csv") + slurp(dir / "trials.csv") + slurp(dir / "metadata.txt") +
                       slurp(dir / "q" / "hunter-0.tsv") + slurp(dir / "weights" / "hunter-2-prey-0.tsv"));
    fs::remove_all(dir);
  }
  EXPECT_EQ(contents[0], contents[1]);
}

TEST(Reports, TablesRoundTrip) {
  const auto c = small(40);
  const auto r = run_training(c);
  const auto dir = scratch("tables");
  export_tables(c, r.team, dir);
  const agent::Team back = import_tables(c, dir);
  for (int e = 0; e < env::kNumHunters; ++e) {
    EXPECT_EQ(back[e].q().size(), r.team[e].q().size());
    for (int l = 0; l < 2; ++l) {
      EXPECT_EQ(back[e].banks()[l].size(), r.team[e].banks()[l].size());
      for (const auto& [k, w] : r.team[e].banks()[l].entries()) EXPECT_EQ(back[e].banks()[l].weight(k), w);
    }
  }
  // Continuing from imported tables matches continuing from the originals.
  RunHooks from_original, from_import;
  from_original.initial_team = r.team;
  from_import.initial_team = back;
  auto next = c;
  next.seed = 99;
  EXPECT_EQ(run_training(next, from_original).records, run_training(next, from_import).records);
  fs::remove_all(dir);
}

TEST(Reports, SummaryOverRuns) {
  std::vector<RunSummary> runs;
  for (bool atf : {true, false}) {
    auto c = small(30, 5);
    c.atf_enabled = atf;
    const auto r = run_training(c);
    const auto dir = scratch(atf ? "sum_on" : "sum_off");
    export_report(c, compute_metrics(r.records, c.blocks(), c.atf.near), r.records, dir);
    runs.push_back(read_run(dir));
    EXPECT_EQ(runs.back().config.atf_enabled, atf);
    fs::remove_all(dir);
  }
  std::ostringstream os;
  write_summary(os, runs);
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("run,seed,atf,", 0), 0u);
  EXPECT_NE(s.find("mean"), std::string::npos);
}

TEST(RuleEval, EmptyRulesWithStayFallbackHitTheCap) {
  auto c = small(5);
  c.step_cap = 50;
  c.rule_fallback = RuleFallback::Stay;
  const auto r = run_rule_eval(c, {});
  for (const auto& t : r.records) {
    // Hunters never move; a capture can only come from prey walking into a trap.
    if (t.outcome == TrialOutcome::StepCapped) {
      EXPECT_EQ(t.steps, 50u);
    }
  }
  std::size_t capped = 0;
  for (const auto& t : r.records) capped += t.outcome == TrialOutcome::StepCapped;
  EXPECT_GE(capped, 4u);
}

TEST(RuleEval, FigureRulesCaptureInSinglePreyWorld) {
  std::istringstream is(
      "No.1 If theta_X <= 0 theta_X > -1 theta_Y <= 0 theta_Y > -1 Then stay with CF=1.0\n"
      "No.2 If theta_X > 0 Then right with CF=0.9\n"
      "No.3 If theta_X <= -1 Then left with CF=0.9\n"
      "No.4 If theta_Y > 0 Then down with CF=0.8\n"
      "No.5 If theta_Y <= -1 Then up with CF=0.8\n");
  auto rules = knowledge::read_rules(is);
  auto c = small(30);
  c.grid.prey_kinds = {env::PreyKind::Positive, env::PreyKind::Positive};
  c.select.mode = agent::SelectMode::Single;
  const auto r = run_rule_eval(c, rules);
  std::size_t positive = 0;
  for (const auto& t : r.records) positive += t.outcome == TrialOutcome::PositiveCaptured;
  EXPECT_GT(positive, 0u);
}
