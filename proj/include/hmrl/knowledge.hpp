#pragma once

// Decision-tree distillation of the lower layer. Instances are the
// target-relative offset (theta_x, theta_y) a hunter saw and the action it
// took; a C4.5-style tree is grown over them and read back as If-Then rules
// with confidence factors.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hmrl/env.hpp"
#include "hmrl/table_io.hpp"

namespace hmrl::knowledge {

using env::Action;

inline constexpr std::size_t kNumClasses = env::kAllActions.size();
using ClassCounts = std::array<std::size_t, kNumClasses>;

enum class Attribute { ThetaX, ThetaY };

inline std::string_view to_string(Attribute a) { return a == Attribute::ThetaX ? "theta_X" : "theta_Y"; }

inline Attribute parse_attribute(std::string_view s) {
  if (s == "theta_X" || s == "theta_x") return Attribute::ThetaX;
  if (s == "theta_Y" || s == "theta_y") return Attribute::ThetaY;
  throw std::invalid_argument("unknown attribute '" + std::string(s) + "'");
}

struct Instance {
  int theta_x = 0;
  int theta_y = 0;
  Action label = Action::Stay;
  friend bool operator==(const Instance&, const Instance&) = default;

  int value(Attribute a) const { return a == Attribute::ThetaX ? theta_x : theta_y; }
};

// ---------------------------------------------------------------------------
// Split criterion

inline double entropy(const ClassCounts& counts) {
  std::size_t n = 0;
  for (std::size_t c : counts) n += c;
  if (n == 0) return 0.0;
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(n);
    h -= p * std::log2(p);
  }
  return h;
}

inline std::size_t total(const ClassCounts& counts) {
  std::size_t n = 0;
  for (std::size_t c : counts) n += c;
  return n;
}

struct SplitScore {
  double gain = 0.0;
  double split_info = 0.0;
  double ratio = 0.0;
};

// Binary split scored from class counts on each side. Empty side: no score.
inline std::optional<SplitScore> score_split(const ClassCounts& le, const ClassCounts& gt) {
  const std::size_t nl = total(le);
  const std::size_t ng = total(gt);
  if (nl == 0 || ng == 0) return std::nullopt;
  ClassCounts all{};
  for (std::size_t c = 0; c < kNumClasses; ++c) all[c] = le[c] + gt[c];
  const double n = static_cast<double>(nl + ng);
  const double wl = static_cast<double>(nl) / n;
  const double wg = static_cast<double>(ng) / n;
  SplitScore s;
  s.gain = entropy(all) - (wl * entropy(le) + wg * entropy(gt));
  s.split_info = -(wl * std::log2(wl) + wg * std::log2(wg));
  s.ratio = s.gain / s.split_info;
  return s;
}

inline ClassCounts count_classes(std::span<const Instance> instances) {
  ClassCounts counts{};
  for (const Instance& i : instances) ++counts[static_cast<std::size_t>(i.label)];
  return counts;
}

// Gain ratio of splitting on `attr <= threshold`. Returns nullopt when one side
// would be empty.
inline std::optional<double> gain_ratio(std::span<const Instance> instances, Attribute attr, double threshold) {
  if (instances.size() < 2) throw std::invalid_argument("gain_ratio: need at least two instances");
  ClassCounts le{}, gt{};
  for (const Instance& i : instances) {
    auto& side = static_cast<double>(i.value(attr)) <= threshold ? le : gt;
    ++side[static_cast<std::size_t>(i.label)];
  }
  const auto s = score_split(le, gt);
  if (!s) return std::nullopt;
  return s->ratio;
}

// ---------------------------------------------------------------------------
// Tree

struct TreeNode;

struct Leaf {
  Action label = Action::Stay;
  std::size_t covered = 0;
  std::size_t errors = 0;
};

struct Split {
  Attribute attribute = Attribute::ThetaX;
  double threshold = 0.0;
  std::unique_ptr<TreeNode> le;
  std::unique_ptr<TreeNode> gt;
};

struct TreeNode {
  std::variant<Leaf, Split> node;

  bool is_leaf() const { return std::holds_alternative<Leaf>(node); }
  const Leaf& leaf() const { return std::get<Leaf>(node); }
  const Split& split() const { return std::get<Split>(node); }

  std::size_t leaf_count() const {
    if (is_leaf()) return 1;
    return split().le->leaf_count() + split().gt->leaf_count();
  }

  std::size_t depth() const {
    if (is_leaf()) return 0;
    return 1 + std::max(split().le->depth(), split().gt->depth());
  }

  const Leaf& classify_leaf(int theta_x, int theta_y) const {
    const TreeNode* n = this;
    while (!n->is_leaf()) {
      const Split& s = n->split();
      const int v = s.attribute == Attribute::ThetaX ? theta_x : theta_y;
      n = static_cast<double>(v) <= s.threshold ? s.le.get() : s.gt.get();
    }
    return n->leaf();
  }

  Action classify(int theta_x, int theta_y) const { return classify_leaf(theta_x, theta_y).label; }
};

struct TreeParams {
  std::size_t min_leaf = 2;
  std::size_t max_depth = 12;
};

namespace detail {

// Instances collapsed to (theta_x, theta_y) -> class counts.
struct Cell {
  int x = 0;
  int y = 0;
  ClassCounts counts{};
  int value(Attribute a) const { return a == Attribute::ThetaX ? x : y; }
};

inline Leaf make_leaf(const ClassCounts& counts) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumClasses; ++c) {
    if (counts[c] > counts[best]) best = c;
  }
  const std::size_t n = total(counts);
  return Leaf{static_cast<Action>(best), n, n - counts[best]};
}

struct Candidate {
  Attribute attribute;
  double threshold;
  SplitScore score;
};

// Minimum information gain that counts as a real split.
inline constexpr double kMinGain = 1e-12;

inline std::unique_ptr<TreeNode> grow(std::vector<Cell> cells, const TreeParams& params, std::size_t depth) {
  ClassCounts counts{};
  for (const Cell& c : cells) {
    for (std::size_t k = 0; k < kNumClasses; ++k) counts[k] += c.counts[k];
  }
  const Leaf leaf = make_leaf(counts);
  auto as_leaf = [&] { return std::make_unique<TreeNode>(TreeNode{leaf}); };
  if (leaf.errors == 0 || depth >= params.max_depth || leaf.covered < 2 * params.min_leaf) return as_leaf();

  std::vector<Candidate> candidates;
  for (Attribute attr : {Attribute::ThetaX, Attribute::ThetaY}) {
    std::map<int, ClassCounts> by_value;
    for (const Cell& c : cells) {
      auto& slot = by_value[c.value(attr)];
      for (std::size_t k = 0; k < kNumClasses; ++k) slot[k] += c.counts[k];
    }
    ClassCounts le{};
    for (auto it = by_value.begin(); std::next(it) != by_value.end(); ++it) {
      for (std::size_t k = 0; k < kNumClasses; ++k) le[k] += it->second[k];
      ClassCounts gt{};
      for (std::size_t k = 0; k < kNumClasses; ++k) gt[k] = counts[k] - le[k];
      if (total(le) < params.min_leaf || total(gt) < params.min_leaf) continue;
      if (const auto s = score_split(le, gt)) {
        candidates.push_back({attr, static_cast<double>(it->first), *s});
      }
    }
  }
  if (candidates.empty()) return as_leaf();

  // Only splits with at least average gain compete on gain ratio (as in C4.5).
  double mean_gain = 0.0;
  for (const auto& c : candidates) mean_gain += c.score.gain;
  mean_gain /= static_cast<double>(candidates.size());

  const Candidate* best = nullptr;
  for (const auto& c : candidates) {
    if (c.score.gain <= kMinGain || c.score.gain + 1e-12 < mean_gain) continue;
    if (!best || c.score.ratio > best->score.ratio ||
        (c.score.ratio == best->score.ratio &&
         (c.threshold < best->threshold ||
          (c.threshold == best->threshold && c.attribute < best->attribute)))) {
      best = &c;
    }
  }
  if (!best) return as_leaf();

  std::vector<Cell> le_cells, gt_cells;
  for (Cell& c : cells) {
    (static_cast<double>(c.value(best->attribute)) <= best->threshold ? le_cells : gt_cells).push_back(c);
  }
  Split split{best->attribute, best->threshold, nullptr, nullptr};
  cells.clear();
  split.le = grow(std::move(le_cells), params, depth + 1);
  split.gt = grow(std::move(gt_cells), params, depth + 1);
  return std::make_unique<TreeNode>(TreeNode{std::move(split)});
}

}  // namespace detail

// Grows a binary tree by best gain ratio. Thresholds are observed attribute
// values (split `<= v` between consecutive distinct values v < w), so trees on
// integer data print integer cut points. Growth stops at purity, when a node
// has fewer than 2 * min_leaf instances, at max_depth, or when no split with
// positive gain keeps min_leaf instances on both sides. No pruning. Ties on
// gain ratio go to the lower threshold, then theta_x before theta_y. The
// result does not depend on instance order.
inline std::unique_ptr<TreeNode> induce_tree(std::span<const Instance> instances, const TreeParams& params = {}) {
  if (instances.empty()) throw std::invalid_argument("induce_tree: no instances");
  if (params.min_leaf < 1) throw std::invalid_argument("induce_tree: min_leaf must be >= 1");
  std::map<std::pair<int, int>, ClassCounts> grouped;
  for (const Instance& i : instances) ++grouped[{i.theta_x, i.theta_y}][static_cast<std::size_t>(i.label)];
  std::vector<detail::Cell> cells;
  cells.reserve(grouped.size());
  for (const auto& [xy, counts] : grouped) cells.push_back({xy.first, xy.second, counts});
  return detail::grow(std::move(cells), params, 0);
}

inline std::string format_count(std::size_t n) { return std::to_string(n) + ".0"; }

inline std::string format_leaf(const Leaf& l) {
  std::string s = std::string(env::to_string(l.label)) + " (" + format_count(l.covered);
  if (l.errors > 0) s += "/" + format_count(l.errors);
  return s + ")";
}

namespace detail {
inline void dump(const TreeNode& node, std::size_t depth, std::ostream& os) {
  const Split& s = node.split();
  for (const auto& [op, child] : {std::pair{"<=", s.le.get()}, std::pair{">", s.gt.get()}}) {
    for (std::size_t i = 0; i < depth; ++i) os << "|   ";
    os << to_string(s.attribute) << ' ' << op << ' ' << format_double(s.threshold);
    if (child->is_leaf()) {
      os << ": " << format_leaf(child->leaf()) << '\n';
    } else {
      os << '\n';
      dump(*child, depth + 1, os);
    }
  }
}
}  // namespace detail

// Indented dump in the J48 style: `|   ` per level, `attr <= t`, and leaves as
// `label (covered/errors)` with the error count omitted when zero.
inline std::string dump_tree(const TreeNode& root) {
  std::ostringstream os;
  if (root.is_leaf()) {
    os << ": " << format_leaf(root.leaf()) << '\n';
  } else {
    detail::dump(root, 0, os);
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Rules

enum class Op { Le, Gt };

struct Condition {
  Attribute attribute = Attribute::ThetaX;
  Op op = Op::Le;
  double threshold = 0.0;
  friend bool operator==(const Condition&, const Condition&) = default;

  bool holds(int theta_x, int theta_y) const {
    const double v = attribute == Attribute::ThetaX ? theta_x : theta_y;
    return op == Op::Le ? v <= threshold : v > threshold;
  }
};

struct IfThenRule {
  std::vector<Condition> conditions;  // conjunction; empty always fires
  Action action = Action::Stay;
  double cf = 1.0;
  std::size_t covered = 0;
  std::size_t errors = 0;

  bool matches(int theta_x, int theta_y) const {
    return std::all_of(conditions.begin(), conditions.end(),
                       [&](const Condition& c) { return c.holds(theta_x, theta_y); });
  }
};

inline double confidence(std::size_t covered, std::size_t errors) {
  if (covered == 0) throw std::invalid_argument("confidence: empty leaf");
  if (errors > covered) throw std::invalid_argument("confidence: more errors than covered instances");
  return static_cast<double>(covered - errors) / static_cast<double>(covered);
}

namespace detail {

struct Bounds {
  std::optional<double> hi;  // attr <= hi
  std::optional<double> lo;  // attr > lo
};

inline void collect(const TreeNode& node, std::array<Bounds, 2> bounds, std::vector<IfThenRule>& out) {
  if (node.is_leaf()) {
    IfThenRule rule;
    for (Attribute a : {Attribute::ThetaX, Attribute::ThetaY}) {
      const Bounds& b = bounds[static_cast<std::size_t>(a)];
      if (b.hi) rule.conditions.push_back({a, Op::Le, *b.hi});
      if (b.lo) rule.conditions.push_back({a, Op::Gt, *b.lo});
    }
    const Leaf& l = node.leaf();
    rule.action = l.label;
    rule.covered = l.covered;
    rule.errors = l.errors;
    rule.cf = confidence(l.covered, l.errors);
    out.push_back(std::move(rule));
    return;
  }
  const Split& s = node.split();
  auto le = bounds;
  auto& hi = le[static_cast<std::size_t>(s.attribute)].hi;
  hi = hi ? std::min(*hi, s.threshold) : s.threshold;
  collect(*s.le, le, out);
  auto gt = bounds;
  auto& lo = gt[static_cast<std::size_t>(s.attribute)].lo;
  lo = lo ? std::max(*lo, s.threshold) : s.threshold;
  collect(*s.gt, gt, out);
}

}  // namespace detail

// One rule per leaf; path conditions collapse to one interval per attribute.
// Sorted by CF, highest first; equal CF keeps left-to-right leaf order.
inline std::vector<IfThenRule> extract_rules(const TreeNode& tree) {
  std::vector<IfThenRule> rules;
  detail::collect(tree, {}, rules);
  std::stable_sort(rules.begin(), rules.end(), [](const IfThenRule& a, const IfThenRule& b) { return a.cf > b.cf; });
  return rules;
}

// First rule (in the given order) whose conditions hold; otherwise the fallback.
template <typename Fallback>
Action rule_policy_act(std::span<const IfThenRule> rules, int theta_x, int theta_y, Fallback&& fallback) {
  for (const IfThenRule& r : rules) {
    if (r.matches(theta_x, theta_y)) return r.action;
  }
  return std::forward<Fallback>(fallback)();
}

// CF printed with 17 significant digits so it parses back exactly.
inline std::string format_cf(double cf) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%#.17g", cf);
  return buf;
}

inline std::string format_rule(const IfThenRule& r, std::size_t number) {
  std::string s = "No." + std::to_string(number) + " If";
  if (r.conditions.empty()) s += " true";
  for (const Condition& c : r.conditions) {
    s += " ";
    s += to_string(c.attribute);
    s += c.op == Op::Le ? " <= " : " > ";
    s += format_double(c.threshold);
  }
  s += " Then ";
  s += env::to_string(r.action);
  s += " with CF=" + format_cf(r.cf);
  return s;
}

inline void write_rules(std::ostream& os, std::span<const IfThenRule> rules) {
  for (std::size_t i = 0; i < rules.size(); ++i) os << format_rule(rules[i], i + 1) << '\n';
}

inline IfThenRule parse_rule(std::string_view line) {
  std::vector<std::string_view> tok;
  for (auto t : split(trim(line), ' ')) {
    if (!t.empty()) tok.push_back(t);
  }
  auto fail = [&](const char* why) {
    return std::invalid_argument(std::string("rule: ") + why + " in '" + std::string(line) + "'");
  };
  if (tok.size() < 6 || !tok[0].starts_with("No.") || tok[1] != "If") throw fail("expected 'No.<n> If'");
  IfThenRule rule;
  std::size_t i = 2;
  if (tok[i] == "true") {
    ++i;
  } else {
    while (i < tok.size() && tok[i] != "Then") {
      if (i + 2 >= tok.size()) throw fail("truncated condition");
      Condition c;
      c.attribute = parse_attribute(tok[i]);
      if (tok[i + 1] == "<=") {
        c.op = Op::Le;
      } else if (tok[i + 1] == ">") {
        c.op = Op::Gt;
      } else {
        throw fail("unknown operator");
      }
      c.threshold = parse_double(tok[i + 2]);
      rule.conditions.push_back(c);
      i += 3;
    }
  }
  if (i + 4 != tok.size() || tok[i] != "Then" || tok[i + 2] != "with") throw fail("expected 'Then <action> with CF=<x>'");
  rule.action = env::parse_action(tok[i + 1]);
  if (!tok[i + 3].starts_with("CF=")) throw fail("missing CF");
  rule.cf = parse_double(tok[i + 3].substr(3));
  if (!(rule.cf >= 0.0 && rule.cf <= 1.0)) throw fail("CF outside [0,1]");
  return rule;
}

inline std::vector<IfThenRule> read_rules(std::istream& is) {
  std::vector<IfThenRule> rules;
  std::string line;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    rules.push_back(parse_rule(line));
  }
  return rules;
}

// ---------------------------------------------------------------------------
// Instance logging

// Inclusive 1-based trial range; first > last is the empty window.
struct TrialWindow {
  std::size_t first = 1;
  std::size_t last = 0;
  bool contains(std::size_t trial) const { return trial >= first && trial <= last; }
  bool empty() const { return first > last; }
};

using InstanceSink = std::function<void(const Instance&)>;

// Forwards instances from trials inside the window to the sink and counts them.
class InstanceLog {
 public:
  InstanceLog(TrialWindow window, InstanceSink sink) : window_(window), sink_(std::move(sink)) {}

  bool record(std::size_t trial, const Instance& instance) {
    if (!window_.contains(trial)) return false;
    sink_(instance);
    ++count_;
    return true;
  }

  std::size_t count() const { return count_; }
  const TrialWindow& window() const { return window_; }

 private:
  TrialWindow window_;
  InstanceSink sink_;
  std::size_t count_ = 0;
};

inline constexpr std::string_view kInstanceHeader = "theta_x,theta_y,action";

inline void write_instance(std::ostream& os, const Instance& i) {
  os << i.theta_x << ',' << i.theta_y << ',' << env::to_string(i.label) << '\n';
}

// CSV sink; the header is written immediately. Throws when the stream fails.
inline InstanceSink csv_sink(std::ostream& os) {
  os << kInstanceHeader << '\n';
  if (!os) throw std::runtime_error("instance sink: write failed");
  return [&os](const Instance& i) {
    write_instance(os, i);
    if (!os) throw std::runtime_error("instance sink: write failed");
  };
}

inline InstanceSink vector_sink(std::vector<Instance>& out) {
  return [&out](const Instance& i) { out.push_back(i); };
}

inline std::vector<Instance> read_instances(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || trim(line) != kInstanceHeader) {
    throw std::runtime_error("instances: missing header '" + std::string(kInstanceHeader) + "'");
  }
  std::vector<Instance> out;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    if (f.size() != 3) throw std::runtime_error("instances: malformed row at line " + std::to_string(line_no));
    out.push_back({static_cast<int>(parse_int(f[0])), static_cast<int>(parse_int(f[1])), env::parse_action(f[2])});
  }
  return out;
}

}  // namespace hmrl::knowledge
