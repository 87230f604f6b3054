// hmrl command-line driver: train, extract-rules, eval-rules, replay, report.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hmrl/experiment.hpp"
#include "hmrl/knowledge.hpp"
#include "hmrl/report.hpp"
#include "hmrl/trajectory.hpp"

namespace fs = std::filesystem;
using namespace hmrl;
using experiment::ExperimentConfig;

namespace {

struct RunFlags {
  std::string config_path;
  std::optional<std::size_t> trials;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> atf;
};

ExperimentConfig load_config(const RunFlags& f) {
  ExperimentConfig c;
  if (!f.config_path.empty()) {
    auto is = experiment::open_in(f.config_path);
    c = experiment::parse_config(is);
  }
  if (f.trials) {
    c.trials = *f.trials;
    // Block ends and windows from the file may no longer fit; fall back to defaults.
    if (!c.block_ends.empty() && c.block_ends.back() > c.trials) c.block_ends.clear();
    if (c.trajectory_trial > c.trials) c.trajectory_trial = 0;
  }
  if (f.seed) c.seed = *f.seed;
  if (f.atf) c.atf_enabled = experiment::parse_bool("atf", *f.atf);
  c.validate();
  return c;
}

void print_blocks(const std::vector<experiment::BlockMetrics>& metrics) {
  experiment::write_blocks_csv(std::cout, metrics);
}

void check_identity(const std::vector<experiment::BlockMetrics>& metrics) {
  for (const auto& m : metrics) {
    if (!experiment::metric_identity_holds(m)) throw std::logic_error("metric identity violated");
  }
}

int cmd_train(const RunFlags& flags, const std::string& out) {
  const ExperimentConfig config = load_config(flags);
  const fs::path dir(out);
  fs::create_directories(dir);

  std::ofstream inst_os(dir / "instances.csv", std::ios::binary);
  if (!inst_os) throw std::runtime_error("cannot open '" + (dir / "instances.csv").string() + "'");
  experiment::RunHooks hooks;
  hooks.instance_sink = knowledge::csv_sink(inst_os);

  const experiment::RunResult result = experiment::run_training(config, hooks);
  experiment::check_written(inst_os, dir / "instances.csv");

  const auto metrics = experiment::compute_metrics(result.records, config.blocks(), config.atf.near);
  check_identity(metrics);
  experiment::export_report(config, metrics, result.records, dir);
  experiment::export_tables(config, result.team, dir);
  if (!result.trajectory.empty()) {
    auto os = experiment::open_out(dir / "trajectory.csv");
    env::write_trajectory(os, result.trajectory);
    experiment::check_written(os, dir / "trajectory.csv");
  }
  print_blocks(metrics);
  std::cerr << "instances logged: " << result.instances_logged << ", equidistant prey ties: "
            << result.equidistant_ties << '\n';
  return 0;
}

int cmd_extract(const std::string& instances_path, const std::string& out, std::size_t min_leaf,
                std::size_t max_depth, const std::string& tree_out) {
  auto is = experiment::open_in(instances_path);
  const auto instances = knowledge::read_instances(is);
  if (instances.empty()) throw std::runtime_error("no instances in '" + instances_path + "'");
  const auto tree = knowledge::induce_tree(instances, {min_leaf, max_depth});
  const auto rules = knowledge::extract_rules(*tree);
  {
    auto os = experiment::open_out(out);
    knowledge::write_rules(os, rules);
    experiment::check_written(os, out);
  }
  if (!tree_out.empty()) {
    auto os = experiment::open_out(tree_out);
    os << knowledge::dump_tree(*tree);
    experiment::check_written(os, tree_out);
  }
  std::cout << instances.size() << " instances, " << tree->leaf_count() << " leaves, depth " << tree->depth()
            << ", " << rules.size() << " rules\n";
  return 0;
}

int cmd_eval(const RunFlags& flags, const std::string& rules_path, const std::string& tables, const std::string& out) {
  const ExperimentConfig config = load_config(flags);
  auto is = experiment::open_in(rules_path);
  auto rules = knowledge::read_rules(is);
  experiment::RunHooks hooks;
  if (!tables.empty()) hooks.initial_team = experiment::import_tables(config, tables);
  const auto result = experiment::run_rule_eval(config, std::move(rules), hooks);
  const auto metrics = experiment::compute_metrics(result.records, config.blocks(), config.atf.near);
  check_identity(metrics);
  if (!out.empty()) experiment::export_report(config, metrics, result.records, out);
  print_blocks(metrics);
  return 0;
}

int cmd_replay(const std::string& path, int side, bool quiet) {
  auto is = experiment::open_in(path);
  const auto rows = env::read_trajectory(is);
  const auto frames = env::replay_frames(rows, side);
  if (!quiet) {
    for (const auto& f : frames) std::cout << env::render_frame(f, side) << '\n';
  }
  std::cout << frames.size() << " frames replayed, all consistent\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& dirs) {
  std::vector<experiment::RunSummary> runs;
  for (const auto& d : dirs) runs.push_back(experiment::read_run(d));
  experiment::write_summary(std::cout, runs);
  return 0;
}

void add_run_flags(CLI::App* app, RunFlags& f) {
  app->add_option("--config", f.config_path, "key = value config file");
  app->add_option("--trials", f.trials, "number of trials");
  app->add_option("--seed", f.seed, "64-bit run seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical modular RL for two-prey pursuit"};
  app.require_subcommand(1);

  RunFlags train_flags;
  std::string train_out;
  auto* train = app.add_subcommand("train", "train a team and write a run directory");
  add_run_flags(train, train_flags);
  train->add_option("--atf", train_flags.atf, "AT-field gating")->check(CLI::IsMember({"on", "off"}));
  train->add_option("--out", train_out, "output directory")->required();

  std::string inst_path, rules_out, tree_out;
  std::size_t min_leaf = 2, max_depth = 12;
  auto* extract = app.add_subcommand("extract-rules", "induce a tree from logged instances and write rules");
  extract->add_option("--instances", inst_path, "instances CSV")->required()->check(CLI::ExistingFile);
  extract->add_option("--out", rules_out, "rules file")->required();
  extract->add_option("--min-leaf", min_leaf, "minimum instances per branch")->check(CLI::PositiveNumber);
  extract->add_option("--max-depth", max_depth, "maximum tree depth");
  extract->add_option("--tree", tree_out, "also write the tree dump here");

  RunFlags eval_flags;
  std::string rules_path, tables_dir, eval_out;
  auto* eval = app.add_subcommand("eval-rules", "run trials with hunters acting by rules");
  add_run_flags(eval, eval_flags);
  eval->add_option("--atf", eval_flags.atf, "AT-field gating")->check(CLI::IsMember({"on", "off"}));
  eval->add_option("--rules", rules_path, "rules file")->required()->check(CLI::ExistingFile);
  eval->add_option("--tables", tables_dir, "start from the tables of this train run")->check(CLI::ExistingDirectory);
  eval->add_option("--out", eval_out, "write a run directory");

  std::string traj_path;
  int side = env::kDefaultSide;
  bool quiet = false;
  auto* replay = app.add_subcommand("replay", "check and print a trajectory dump");
  replay->add_option("--trajectory", traj_path, "trajectory CSV")->required()->check(CLI::ExistingFile);
  replay->add_option("--side", side, "grid side");
  replay->add_flag("--quiet", quiet, "only validate");

  std::vector<std::string> run_dirs;
  auto* report = app.add_subcommand("report", "summarize run directories");
  report->add_option("--runs", run_dirs, "run directories")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train_flags, train_out);
    if (*extract) return cmd_extract(inst_path, rules_out, min_leaf, max_depth, tree_out);
    if (*eval) return cmd_eval(eval_flags, rules_path, tables_dir, eval_out);
    if (*replay) return cmd_replay(traj_path, side, quiet);
    if (*report) return cmd_report(run_dirs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
