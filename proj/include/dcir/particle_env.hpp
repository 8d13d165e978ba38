#pragma once

// Deterministic 2-D particle world for cooperative navigation.
//
// Agents are point masses with damped velocity and discrete cardinal
// accelerations. Goals are static. Each agent sees goals and other agents
// only within obs_radius; invisible slots are zero with a zero flag.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcir/numerics.hpp"

namespace dcir {

inline constexpr std::size_t kNumActions = 5;

// {stay, +x, -x, +y, -y}
using ActionIndex = std::size_t;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }

enum class Scenario { standard, symmetry_breaking, pilot_study_1, pilot_study_2 };

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::standard: return "standard";
    case Scenario::symmetry_breaking: return "symmetry_breaking";
    case Scenario::pilot_study_1: return "pilot_study_1";
    case Scenario::pilot_study_2: return "pilot_study_2";
  }
  return "?";
}

struct HeteroTraits {
  std::vector<double> size;
  std::vector<double> accel_multiplier;
};

// First ceil(N/2) agents are slow and big, the rest fast and small.
inline HeteroTraits make_hetero_traits(std::size_t n_agents) {
  HeteroTraits h;
  const std::size_t slow = (n_agents + 1) / 2;
  for (std::size_t i = 0; i < n_agents; ++i) {
    h.size.push_back(i < slow ? 1.5 : 0.75);
    h.accel_multiplier.push_back(i < slow ? 0.5 : 1.5);
  }
  return h;
}

struct WorldConfig {
  std::size_t n_agents = 3;
  std::size_t n_goals = 3;
  double half_width = 1.0;
  double obs_radius = 1.5;
  double dt = 0.1;
  double damping = 0.25;
  double accel_gain = 5.0;
  double max_speed = 1.0;
  double occupy_threshold = 0.1;
  std::size_t episode_length = 25;
  Scenario scenario = Scenario::standard;
  std::optional<HeteroTraits> hetero;
  // Dense negative-distance shaping; off by default.
  double distance_shaping = 0.0;

  void validate() const {
    auto bad = [](const std::string& m) { throw std::invalid_argument("WorldConfig: " + m); };
    if (n_agents == 0 || n_goals == 0) bad("n_agents and n_goals must be positive");
    if (!(half_width > 0) || !(obs_radius > 0) || !(dt > 0) || !(accel_gain > 0) || !(max_speed > 0) ||
        !(occupy_threshold > 0))
      bad("lengths, rates and gains must be positive");
    if (!(damping >= 0.0 && damping < 1.0)) bad("damping must lie in [0,1)");
    if (!(occupy_threshold < half_width)) bad("occupy_threshold must be < half_width");
    if (!(dt * max_speed < half_width)) bad("dt*max_speed must be < half_width");
    if (episode_length == 0) bad("episode_length must be positive");
    if (hetero && (hetero->size.size() != n_agents || hetero->accel_multiplier.size() != n_agents))
      bad("hetero lists must have length n_agents");
    if ((scenario == Scenario::pilot_study_1 || scenario == Scenario::pilot_study_2) &&
        (n_agents != 5 || n_goals != 5))
      bad("pilot scenarios require 5 agents and 5 goals");
  }

  std::size_t obs_size() const { return 4 + 3 * n_goals + 5 * (n_agents - 1); }

  double agent_size(std::size_t i) const { return hetero ? hetero->size[i] : 1.0; }
  double accel_multiplier(std::size_t i) const { return hetero ? hetero->accel_multiplier[i] : 1.0; }
  // An agent covers a goal within occupy_threshold scaled by its size.
  double cover_radius(std::size_t i) const { return occupy_threshold * agent_size(i); }
};

struct WorldState {
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;
  std::vector<Vec2> goal_positions;
  std::size_t step_index = 0;
  friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct StepResult {
  WorldState next_state;
  double r_ex = 0.0;
  bool done = false;
};

inline WorldState reset(const WorldConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  WorldState s;
  s.positions.assign(cfg.n_agents, Vec2{});
  s.velocities.assign(cfg.n_agents, Vec2{});
  s.goal_positions.assign(cfg.n_goals, Vec2{});
  const double w = cfg.half_width;
  const double two_pi = 2.0 * std::numbers::pi;
  switch (cfg.scenario) {
    case Scenario::standard:
      for (auto& p : s.positions) p = {rng.uniform(-w, w), rng.uniform(-w, w)};
      for (auto& g : s.goal_positions) g = {rng.uniform(-w, w), rng.uniform(-w, w)};
      break;
    case Scenario::symmetry_breaking: {
      // Goal size is taken to be occupy_threshold.
      const double r = w - cfg.occupy_threshold;
      for (auto& g : s.goal_positions) {
        const double a = rng.uniform(0.0, two_pi);
        g = {r * std::cos(a), r * std::sin(a)};
      }
      break;
    }
    case Scenario::pilot_study_1: {
      const double r = 0.6 * std::min(cfg.obs_radius, w);
      const double rot = rng.uniform(0.0, two_pi);
      s.goal_positions[0] = {0.0, 0.0};
      for (std::size_t k = 1; k < 5; ++k) {
        const double a = rot + two_pi * static_cast<double>(k - 1) / 4.0;
        s.goal_positions[k] = {r * std::cos(a), r * std::sin(a)};
      }
      break;
    }
    case Scenario::pilot_study_2: {
      const double rmax = std::min(cfg.obs_radius, w);
      for (auto& g : s.goal_positions) {
        const double a = rng.uniform(-0.4 * std::numbers::pi, 0.4 * std::numbers::pi);
        const double r = rng.uniform(0.3 * rmax, 0.8 * rmax);
        g = {r * std::cos(a), r * std::sin(a)};
      }
      break;
    }
  }
  return s;
}

inline std::size_t occupied_goals(const WorldConfig& cfg, const WorldState& s) {
  std::size_t count = 0;
  for (const auto& g : s.goal_positions) {
    for (std::size_t i = 0; i < s.positions.size(); ++i) {
      if (norm(s.positions[i] - g) <= cfg.cover_radius(i)) {
        ++count;
        break;
      }
    }
  }
  return count;
}

inline double nearest_goal_distance(const WorldState& s, std::size_t agent) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& g : s.goal_positions) best = std::min(best, norm(s.positions[agent] - g));
  return best;
}

inline double extrinsic_reward(const WorldConfig& cfg, const WorldState& s) {
  double r = static_cast<double>(occupied_goals(cfg, s));
  if (cfg.distance_shaping != 0.0) {
    for (const auto& g : s.goal_positions) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : s.positions) best = std::min(best, norm(p - g));
      r -= cfg.distance_shaping * best;
    }
  }
  return r;
}

inline StepResult step(const WorldConfig& cfg, const WorldState& state, std::span<const ActionIndex> actions) {
  if (actions.size() != cfg.n_agents)
    throw std::invalid_argument("step: expected " + std::to_string(cfg.n_agents) + " actions, got " +
                                std::to_string(actions.size()));
  if (state.step_index >= cfg.episode_length) throw std::logic_error("step: episode already done");
  static constexpr std::array<Vec2, kNumActions> dirs{{{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  StepResult res;
  WorldState& n = res.next_state;
  n = state;
  const double w = cfg.half_width;
  for (std::size_t i = 0; i < cfg.n_agents; ++i) {
    if (actions[i] >= kNumActions) throw std::invalid_argument("step: action index out of range");
    const double a = cfg.accel_gain * cfg.accel_multiplier(i);
    Vec2 v = n.velocities[i];
    v.x = (1.0 - cfg.damping) * v.x + a * dirs[actions[i]].x * cfg.dt;
    v.y = (1.0 - cfg.damping) * v.y + a * dirs[actions[i]].y * cfg.dt;
    const double sp = norm(v);
    if (sp > cfg.max_speed) {
      v.x *= cfg.max_speed / sp;
      v.y *= cfg.max_speed / sp;
    }
    Vec2 p = n.positions[i];
    p.x = std::clamp(p.x + v.x * cfg.dt, -w, w);
    p.y = std::clamp(p.y + v.y * cfg.dt, -w, w);
    n.velocities[i] = v;
    n.positions[i] = p;
  }
  n.step_index = state.step_index + 1;
  res.r_ex = extrinsic_reward(cfg, n);
  res.done = n.step_index >= cfg.episode_length;
  return res;
}

// Layout: [pos(2), vel(2)], goals [flag, dx, dy], other agents [flag, dx, dy, dvx, dvy].
inline Vec observe(const WorldConfig& cfg, const WorldState& s, std::size_t agent) {
  if (agent >= cfg.n_agents) throw std::out_of_range("observe: agent index out of range");
  Vec o(cfg.obs_size(), 0.0);
  const Vec2 p = s.positions[agent], v = s.velocities[agent];
  o[0] = p.x;
  o[1] = p.y;
  o[2] = v.x;
  o[3] = v.y;
  std::size_t k = 4;
  for (const auto& g : s.goal_positions) {
    const Vec2 d = g - p;
    if (norm(d) <= cfg.obs_radius) {
      o[k] = 1.0;
      o[k + 1] = d.x;
      o[k + 2] = d.y;
    }
    k += 3;
  }
  for (std::size_t j = 0; j < cfg.n_agents; ++j) {
    if (j == agent) continue;
    const Vec2 d = s.positions[j] - p;
    if (norm(d) <= cfg.obs_radius) {
      const Vec2 dv = s.velocities[j] - v;
      o[k] = 1.0;
      o[k + 1] = d.x;
      o[k + 2] = d.y;
      o[k + 3] = dv.x;
      o[k + 4] = dv.y;
    }
    k += 5;
  }
  return o;
}

inline std::vector<Vec> observe_all(const WorldConfig& cfg, const WorldState& s) {
  std::vector<Vec> out;
  out.reserve(cfg.n_agents);
  for (std::size_t i = 0; i < cfg.n_agents; ++i) out.push_back(observe(cfg, s, i));
  return out;
}

struct EpisodeMetrics {
  double mean_occupancy = 0.0;  // occupied goals / n_goals, averaged over steps
  double mean_distance = 0.0;   // mean agent-to-nearest-goal distance, averaged over steps
};

inline EpisodeMetrics episode_metrics(const WorldConfig& cfg, std::span<const WorldState> trace) {
  if (trace.empty()) throw std::invalid_argument("episode_metrics: empty trace");
  EpisodeMetrics m;
  for (const auto& s : trace) {
    m.mean_occupancy += static_cast<double>(occupied_goals(cfg, s)) / static_cast<double>(s.goal_positions.size());
    double d = 0.0;
    for (std::size_t i = 0; i < s.positions.size(); ++i) d += nearest_goal_distance(s, i);
    m.mean_distance += d / static_cast<double>(s.positions.size());
  }
  m.mean_occupancy /= static_cast<double>(trace.size());
  m.mean_distance /= static_cast<double>(trace.size());
  return m;
}

// Study 1: share of agents (out of 4) that ended farther than occupy_threshold
// from the origin, capped at 4 since one agent belongs on the origin goal.
// Study 2: share of agents whose nearest-goal distance shrank over the episode.
inline double pilot_proportions(const WorldConfig& cfg, std::span<const WorldState> trace, int study) {
  if (trace.empty()) throw std::invalid_argument("pilot_proportions: empty trace");
  if (study == 1) {
    if (cfg.scenario != Scenario::pilot_study_1) throw std::invalid_argument("pilot_proportions: not a study-1 trace");
    std::size_t left = 0;
    for (const auto& p : trace.back().positions)
      if (norm(p) > cfg.occupy_threshold) ++left;
    return static_cast<double>(std::min<std::size_t>(left, 4)) / 4.0;
  }
  if (study == 2) {
    if (cfg.scenario != Scenario::pilot_study_2) throw std::invalid_argument("pilot_proportions: not a study-2 trace");
    const auto& first = trace.front();
    const auto& last = trace.back();
    std::size_t closer = 0;
    for (std::size_t i = 0; i < first.positions.size(); ++i)
      if (nearest_goal_distance(last, i) < nearest_goal_distance(first, i)) ++closer;
    return static_cast<double>(closer) / static_cast<double>(first.positions.size());
  }
  throw std::invalid_argument("pilot_proportions: study must be 1 or 2");
}

}  // namespace dcir
