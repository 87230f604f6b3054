#pragma once

// Trajectory dump: CSV rows `step,agent,x,y,action`. Step 0 lists the initial
// placement with action `none`; row (t, a) holds the position of agent a after
// step t and the action it declared for that step. Dead prey stop appearing.

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmrl/env.hpp"

namespace hmrl::env {

struct TrajectoryRow {
  int step = 0;
  int agent = 0;
  Position pos;
  std::string action;
  friend bool operator==(const TrajectoryRow&, const TrajectoryRow&) = default;
};

class TrajectoryRecorder {
 public:
  void start(const WorldState& s) {
    rows_.clear();
    for (int a = 0; a < kNumAgents; ++a) {
      if (s.alive(a)) rows_.push_back({0, a, s.position(a), "none"});
    }
  }

  void record(const StepOutcome& out) {
    const WorldState& s = out.next_state;
    for (int a = 0; a < kNumAgents; ++a) {
      const bool was_captured_now =
          a >= kNumHunters && !s.alive(a) &&
          std::any_of(out.captures.begin(), out.captures.end(),
                      [&](const Capture& c) { return c.prey_index == a - kNumHunters; });
      if (s.alive(a) || was_captured_now) {
        rows_.push_back({s.step_count, a, s.position(a), std::string(to_string(out.declared[a]))});
      }
    }
  }

  const std::vector<TrajectoryRow>& rows() const { return rows_; }

 private:
  std::vector<TrajectoryRow> rows_;
};

inline void write_trajectory(std::ostream& os, const std::vector<TrajectoryRow>& rows) {
  os << "step,agent,x,y,action\n";
  for (const auto& r : rows) {
    os << r.step << ',' << r.agent << ',' << r.pos.x << ',' << r.pos.y << ',' << r.action << '\n';
  }
}

inline std::vector<TrajectoryRow> read_trajectory(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "step,agent,x,y,action") {
    throw std::runtime_error("trajectory: missing or unexpected header");
  }
  std::vector<TrajectoryRow> rows;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    TrajectoryRow r;
    char c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    if (!(ls >> r.step >> c1 >> r.agent >> c2 >> r.pos.x >> c3 >> r.pos.y >> c4) || c1 != ',' ||
        c2 != ',' || c3 != ',' || c4 != ',' || !std::getline(ls, r.action) || r.action.empty()) {
      throw std::runtime_error("trajectory: malformed row at line " + std::to_string(line_no));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

struct ReplayFrame {
  int step = 0;
  std::map<int, Position> agents;
};

// Groups rows into frames and checks the world rules on every frame: cells in
// bounds, no shared cells, and each agent either applied its declared move or
// stayed (blocked). Throws on the first violation.
inline std::vector<ReplayFrame> replay_frames(const std::vector<TrajectoryRow>& rows, int side) {
  std::vector<ReplayFrame> frames;
  for (const auto& r : rows) {
    if (frames.empty() || frames.back().step != r.step) {
      if (!frames.empty() && r.step != frames.back().step + 1) {
        throw std::runtime_error("replay: steps are not consecutive at step " + std::to_string(r.step));
      }
      frames.push_back({r.step, {}});
    }
    if (!in_bounds(r.pos, side)) {
      throw std::runtime_error("replay: agent " + std::to_string(r.agent) + " out of bounds at step " +
                               std::to_string(r.step));
    }
    auto& frame = frames.back();
    if (!frame.agents.emplace(r.agent, r.pos).second) {
      throw std::runtime_error("replay: duplicate agent row at step " + std::to_string(r.step));
    }
    if (frames.size() >= 2) {
      const auto& prev = frames[frames.size() - 2].agents;
      const auto it = prev.find(r.agent);
      if (it == prev.end()) {
        throw std::runtime_error("replay: agent " + std::to_string(r.agent) + " reappears at step " +
                                 std::to_string(r.step));
      }
      const Position intended = apply(it->second, parse_action(r.action));
      if (r.pos != intended && r.pos != it->second) {
        throw std::runtime_error("replay: agent " + std::to_string(r.agent) +
                                 " moved inconsistently with its action at step " +
                                 std::to_string(r.step));
      }
    }
  }
  for (const auto& f : frames) {
    std::map<std::pair<int, int>, int> seen;
    for (const auto& [agent, pos] : f.agents) {
      if (!seen.emplace(std::pair{pos.x, pos.y}, agent).second) {
        throw std::runtime_error("replay: two agents share a cell at step " + std::to_string(f.step));
      }
    }
  }
  return frames;
}

// ASCII board: H0..H3 shown as 0-3, prey as A/B, empty as '.'.
inline std::string render_frame(const ReplayFrame& frame, int side) {
  std::vector<std::string> grid(static_cast<std::size_t>(side), std::string(static_cast<std::size_t>(side), '.'));
  for (const auto& [agent, pos] : frame.agents) {
    grid[static_cast<std::size_t>(pos.y)][static_cast<std::size_t>(pos.x)] =
        agent < kNumHunters ? static_cast<char>('0' + agent) : static_cast<char>('A' + agent - kNumHunters);
  }
  std::string out = "step " + std::to_string(frame.step) + "\n";
  for (const auto& row : grid) out += row + "\n";
  return out;
}

}  // namespace hmrl::env
