#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "hmrl/config.hpp"

using namespace hmrl;
using namespace hmrl::experiment;

TEST(Config, DefaultsMatchDeskScale) {
  const ExperimentConfig c;
  EXPECT_EQ(c.trials, 2000u);
  EXPECT_EQ(c.step_cap, 3000u);
  EXPECT_EQ(c.ps.discount, 5.0);
  EXPECT_EQ(c.ps.effective_rules, 4);
  EXPECT_EQ(c.ps.reward, 100.0);
  EXPECT_EQ(c.q.alpha, 0.1);
  EXPECT_EQ(c.q.gamma, 0.9);
  EXPECT_EQ(c.atf.near, 2);
  EXPECT_EQ(c.atf.far, 5);
  EXPECT_EQ(c.atf.rho, 0.8);
  EXPECT_EQ(c.select.mu, 2.0);
  EXPECT_EQ(c.grid.side, 7);
  const auto blocks = c.blocks();
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[0], (Block{1, 200}));
  EXPECT_EQ(blocks[1], (Block{201, 2000}));
  EXPECT_EQ(c.instance_window().first, 1901u);
  EXPECT_EQ(c.instance_window().last, 2000u);
}

TEST(Config, ParsesSettingsAndComments) {
  const auto c = parse_config_text(
      "# desk run\n"
      "trials = 500\n"
      "\n"
      "seed=42\n"
      "  atf = off  \n"
      "blocks = 100,500\n"
      "log_window = 401-500\n"
      "rule_fallback = stay\n"
      "prey_kinds = positive, dangerous\n");
  EXPECT_EQ(c.trials, 500u);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_FALSE(c.atf_enabled);
  EXPECT_EQ(c.blocks().size(), 2u);
  EXPECT_EQ(c.instance_window().first, 401u);
  EXPECT_EQ(c.rule_fallback, RuleFallback::Stay);
}

TEST(Config, UnknownKeyIsAnError) {
  try {
    parse_config_text("trials = 10\nlearning_rate = 0.1\n");
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("learning_rate"), std::string::npos);
    EXPECT_NE(msg.find("line 2"), std::string::npos);
  }
}

TEST(Config, MalformedValuesAreErrors) {
  for (const char* bad : {"trials = ten", "trials = -3", "atf = maybe", "alpha = 1.5", "gamma = 1.0",
                          "blocks = 300,200", "blocks = 5000", "select_mode = triple", "candidates = some",
                          "log_window = 5", "prey_kinds = positive", "trials = 0", "n1 = 6",
                          "no equals sign here", "grid_side = 2", "epsilon_start = 2"}) {
    EXPECT_THROW(parse_config_text(bad), std::invalid_argument) << bad;
  }
}

TEST(Config, WrittenConfigParsesBackIdentically) {
  ExperimentConfig c;
  c.trials = 750;
  c.seed = 0xfeedbeefULL;
  c.atf_enabled = false;
  c.q.alpha = 0.123456789;
  c.atf.rho = 0.7;
  c.select.mu = 1.5;
  c.block_ends = {50, 600, 750};
  c.log_window = knowledge::TrialWindow{700, 750};
  c.trajectory_trial = 3;
  std::ostringstream os;
  write_config(os, c);
  const auto back = parse_config_text(os.str());
  std::ostringstream again;
  write_config(again, back);
  EXPECT_EQ(again.str(), os.str());
  EXPECT_EQ(back.q.alpha, c.q.alpha);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.blocks(), c.blocks());
}

TEST(Config, MetadataCoversEveryKey) {
  const ExperimentConfig c;
  std::set<std::string> keys;
  for (const auto& [k, v] : to_metadata(c)) {
    EXPECT_TRUE(keys.insert(k).second) << "duplicate " << k;
    ExperimentConfig probe;
    EXPECT_NO_THROW(apply_setting(probe, k, v)) << k;
  }
  for (const char* k : {"trials", "step_cap", "seed", "atf", "grid_side", "prey_kinds", "ps_discount",
                        "ps_effective_rules", "reward", "dangerous_reward", "arrival_reward", "alpha", "gamma",
                        "epsilon_start", "epsilon_end", "epsilon_anneal_fraction", "rho", "mu", "n1", "n2",
                        "select_mode", "candidates", "ring_radius", "blocks", "log_window",
                        "reset_tables_each_trial", "rule_fallback", "trajectory_trial"}) {
    EXPECT_TRUE(keys.count(k)) << k;
  }
  EXPECT_EQ(keys.size(), 28u);
}

TEST(Config, MetadataWithHashPrefixParses) {
  std::ostringstream os;
  ExperimentConfig c;
  c.seed = 9;
  for (const auto& [k, v] : to_metadata(c)) os << "# " << k << " = " << v << '\n';
  EXPECT_EQ(parse_config_text(os.str()).seed, 9u);
}

TEST(Config, BlocksClipToTrialCount) {
  ExperimentConfig c;
  c.trials = 150;
  EXPECT_EQ(c.blocks(), (std::vector<Block>{{1, 150}}));
  c.trials = 20000;
  EXPECT_EQ(c.blocks().size(), 4u);
  EXPECT_EQ(c.blocks().back(), (Block{17001, 20000}));
}
