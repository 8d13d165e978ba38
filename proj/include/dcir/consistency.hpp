#pragma once

// Behavior consistency between agents: agent j's action distribution on
// agent i's observation compared against agent i's own distribution.

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dcir/numerics.hpp"
#include "dcir/sac_agent.hpp"

namespace dcir {

inline constexpr double kProbFloor = 1e-8;

enum class DivergenceKind { kl, js, tv, binary };

inline const char* to_string(DivergenceKind k) {
  switch (k) {
    case DivergenceKind::kl: return "kl";
    case DivergenceKind::js: return "js";
    case DivergenceKind::tv: return "tv";
    case DivergenceKind::binary: return "binary";
  }
  return "?";
}

inline DivergenceKind parse_divergence(std::string_view s) {
  if (s == "kl") return DivergenceKind::kl;
  if (s == "js") return DivergenceKind::js;
  if (s == "tv") return DivergenceKind::tv;
  if (s == "binary") return DivergenceKind::binary;
  throw std::invalid_argument("unknown divergence '" + std::string(s) + "'");
}

struct DivergenceOptions {
  DivergenceKind kind = DivergenceKind::kl;
  bool tv_half = false;  // 0.5*L1 instead of plain L1
};

namespace detail {
inline void check_lengths(std::span<const double> p, std::span<const double> q, const char* who) {
  if (p.size() != q.size())
    throw ShapeError(std::string(who) + ": length mismatch " + std::to_string(p.size()) + " vs " +
                     std::to_string(q.size()));
}
}  // namespace detail

// KL(u_ij || u_i). First argument is the cross distribution.
inline double kl_consistency(std::span<const double> u_ij, std::span<const double> u_i) {
  detail::check_lengths(u_ij, u_i, "kl_consistency");
  double s = 0.0;
  for (std::size_t k = 0; k < u_ij.size(); ++k) {
    const double p = std::max(u_ij[k], kProbFloor);
    const double q = std::max(u_i[k], kProbFloor);
    s += u_ij[k] * std::log(p / q);
  }
  if (s < 0.0 && s >= -1e-9) s = 0.0;
  return s;
}

inline double js_consistency(std::span<const double> p, std::span<const double> q) {
  detail::check_lengths(p, q, "js_consistency");
  Vec m(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) m[k] = 0.5 * (p[k] + q[k]);
  const double v = 0.5 * kl_consistency(p, m) + 0.5 * kl_consistency(q, m);
  return v < 0.0 ? 0.0 : v;
}

inline double tv_consistency(std::span<const double> p, std::span<const double> q, bool half = false) {
  detail::check_lengths(p, q, "tv_consistency");
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) s += std::abs(p[k] - q[k]);
  return half ? 0.5 * s : s;
}

// +1 when the lowest-index argmaxes agree, else -1.
inline double binary_consistency(std::span<const double> p, std::span<const double> q) {
  return greedy_action(p) == greedy_action(q) ? 1.0 : -1.0;
}

inline double divergence(const DivergenceOptions& opt, std::span<const double> u_ij, std::span<const double> u_i) {
  switch (opt.kind) {
    case DivergenceKind::kl: return kl_consistency(u_ij, u_i);
    case DivergenceKind::js: return js_consistency(u_ij, u_i);
    case DivergenceKind::tv: return tv_consistency(u_ij, u_i, opt.tv_half);
    case DivergenceKind::binary: return binary_consistency(u_ij, u_i);
  }
  return 0.0;
}

// Scores keyed by the other agent's index, ascending, self excluded.
struct ConsistencyVector {
  std::size_t agent_index = 0;
  std::map<std::size_t, double> scores;
};

inline std::map<std::size_t, Vec> cross_distributions(std::span<const AgentNets> actors,
                                                      std::span<const double> obs_i, std::size_t i) {
  if (i >= actors.size()) throw std::out_of_range("cross_distributions: agent index out of range");
  std::map<std::size_t, Vec> out;
  for (std::size_t j = 0; j < actors.size(); ++j) {
    if (j == i) continue;
    if (actors[j].actor_spec.input_size() != obs_i.size())
      throw ShapeError("cross_distributions: agent " + std::to_string(j) +
                       " cannot consume agent " + std::to_string(i) +
                       "'s observation (observation layouts differ)");
    out.emplace(j, action_distribution(actors[j], obs_i));
  }
  return out;
}

inline ConsistencyVector consistency_from_distributions(const DivergenceOptions& opt, std::size_t i,
                                                        const std::map<std::size_t, Vec>& cross,
                                                        std::span<const double> own) {
  ConsistencyVector c;
  c.agent_index = i;
  for (const auto& [j, u_ij] : cross) c.scores.emplace(j, divergence(opt, u_ij, own));
  return c;
}

inline ConsistencyVector consistency_vector(const DivergenceOptions& opt, std::span<const AgentNets> actors,
                                            std::span<const double> obs_i, std::size_t i) {
  const auto cross = cross_distributions(actors, obs_i, i);
  const Vec own = action_distribution(actors[i], obs_i);
  return consistency_from_distributions(opt, i, cross, own);
}

}  // namespace dcir
