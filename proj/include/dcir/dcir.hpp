#pragma once

// Dynamic scale factors alpha and the consistency intrinsic reward
//   r_dcir(i) = sum_{j != i} alpha_ij * C_ij
//   r_proxy   = r_ex + beta * r_dcir
//
// alpha comes from a per-agent Dynamic Scale Network over all observations,
// or from one of the fixed / observation-free ablation variants.

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dcir/consistency.hpp"
#include "dcir/numerics.hpp"

namespace dcir {

enum class AlphaMode { dsn, fixed_inconsistency, fixed_consistency, shared_factor, learnable_params };

inline const char* to_string(AlphaMode m) {
  switch (m) {
    case AlphaMode::dsn: return "dsn";
    case AlphaMode::fixed_inconsistency: return "fixed_inconsistency";
    case AlphaMode::fixed_consistency: return "fixed_consistency";
    case AlphaMode::shared_factor: return "shared_factor";
    case AlphaMode::learnable_params: return "learnable_params";
  }
  return "?";
}

inline AlphaMode parse_alpha_mode(std::string_view s) {
  if (s == "dsn") return AlphaMode::dsn;
  if (s == "fixed_inconsistency") return AlphaMode::fixed_inconsistency;
  if (s == "fixed_consistency") return AlphaMode::fixed_consistency;
  if (s == "shared_factor") return AlphaMode::shared_factor;
  if (s == "learnable_params") return AlphaMode::learnable_params;
  throw std::invalid_argument("unknown alpha_mode '" + std::string(s) + "'");
}

inline bool is_trainable(AlphaMode m) {
  return m == AlphaMode::dsn || m == AlphaMode::shared_factor || m == AlphaMode::learnable_params;
}

struct DcirConfig {
  double beta = 0.1;
  DivergenceOptions divergence;
  AlphaMode alpha_mode = AlphaMode::dsn;
};

using AlphaVector = std::map<std::size_t, double>;

struct DsnState {
  std::size_t agent_index = 0;
  std::size_t n_agents = 0;
  MlpSpec spec;
  Vec params;
  AdamState opt;

  static DsnState create(std::size_t agent, std::size_t n_agents, std::size_t obs_size,
                         const std::vector<std::size_t>& hidden, bool tanh_output, double lr, Rng& rng) {
    if (n_agents < 2) throw std::invalid_argument("DsnState: need at least 2 agents");
    DsnState d;
    d.agent_index = agent;
    d.n_agents = n_agents;
    std::vector<std::size_t> sizes{n_agents * obs_size};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(n_agents - 1);
    d.spec = MlpSpec{sizes, Activation::relu, tanh_output ? Activation::tanh : Activation::identity};
    d.params = init_params(d.spec, rng);
    d.opt = AdamState::for_params(d.params.size(), lr);
    return d;
  }

  friend bool operator==(const DsnState&, const DsnState&) = default;
};

inline Vec concat_observations(std::span<const Vec> all_obs) {
  Vec x;
  for (const auto& o : all_obs) x.insert(x.end(), o.begin(), o.end());
  return x;
}

// Output slot s maps to the s-th other agent in ascending index order.
inline std::vector<std::size_t> other_agents(std::size_t i, std::size_t n) {
  std::vector<std::size_t> js;
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) js.push_back(j);
  return js;
}

inline AlphaVector dsn_forward(const DsnState& dsn, std::span<const double> joint_obs) {
  if (joint_obs.size() != dsn.spec.input_size())
    throw ShapeError("dsn_forward: joint observation length " + std::to_string(joint_obs.size()) + " != " +
                     std::to_string(dsn.spec.input_size()));
  const Vec out = mlp_forward(dsn.spec, dsn.params, joint_obs);
  AlphaVector a;
  const auto js = other_agents(dsn.agent_index, dsn.n_agents);
  for (std::size_t s = 0; s < js.size(); ++s) a.emplace(js[s], out[s]);
  return a;
}

inline AlphaVector dsn_forward(const DsnState& dsn, std::span<const Vec> all_obs) {
  return dsn_forward(dsn, concat_observations(all_obs));
}

inline double dcir_reward(const AlphaVector& alpha, const ConsistencyVector& c) {
  if (alpha.size() != c.scores.size()) throw std::invalid_argument("dcir_reward: index sets differ in size");
  double r = 0.0;
  auto a = alpha.begin();
  for (auto s = c.scores.begin(); s != c.scores.end(); ++s, ++a) {
    if (a->first != s->first) throw std::invalid_argument("dcir_reward: index sets differ");
    r += a->second * s->second;
  }
  return r;
}

inline double proxy_reward(double r_ex, const DcirConfig& cfg, double r_dcir) { return r_ex + cfg.beta * r_dcir; }

// Trainable scale parameters for the modes that have them. For dsn the
// params are the network weights; for shared_factor a single scalar; for
// learnable_params one value per other agent.
struct AlphaModel {
  AlphaMode mode = AlphaMode::dsn;
  std::size_t agent_index = 0;
  std::size_t n_agents = 0;
  std::optional<DsnState> dsn;
  Vec scalars;
  AdamState scalar_opt;

  static AlphaModel create(AlphaMode mode, std::size_t agent, std::size_t n_agents, std::size_t obs_size,
                           const std::vector<std::size_t>& hidden, bool tanh_output, double lr, Rng& rng) {
    AlphaModel m;
    m.mode = mode;
    m.agent_index = agent;
    m.n_agents = n_agents;
    // Always draw the DSN init so the RNG stream is identical across modes.
    DsnState d = DsnState::create(agent, n_agents, obs_size, hidden, tanh_output, lr, rng);
    if (mode == AlphaMode::dsn) m.dsn = std::move(d);
    if (mode == AlphaMode::shared_factor) m.scalars.assign(1, 0.0);
    if (mode == AlphaMode::learnable_params) m.scalars.assign(n_agents - 1, 0.0);
    m.scalar_opt = AdamState::for_params(m.scalars.size(), lr);
    return m;
  }

  // The parameter block the meta-gradient acts on.
  std::span<double> trainable() {
    if (mode == AlphaMode::dsn) return dsn->params;
    return scalars;
  }
  std::span<const double> trainable() const {
    if (mode == AlphaMode::dsn) return dsn->params;
    return scalars;
  }
  AdamState& optimizer() { return mode == AlphaMode::dsn ? dsn->opt : scalar_opt; }

  friend bool operator==(const AlphaModel&, const AlphaModel&) = default;
};

inline AlphaVector alpha_of_mode(AlphaMode mode, const DsnState* dsn, std::span<const double> scalars,
                                 std::span<const double> joint_obs, std::size_t i, std::size_t n_agents) {
  AlphaVector a;
  const auto js = other_agents(i, n_agents);
  switch (mode) {
    case AlphaMode::dsn:
      if (!dsn) throw std::invalid_argument("alpha_of_mode: dsn mode requires a DSN");
      return dsn_forward(*dsn, joint_obs);
    case AlphaMode::fixed_inconsistency:
      for (auto j : js) a.emplace(j, 1.0);
      return a;
    case AlphaMode::fixed_consistency:
      for (auto j : js) a.emplace(j, -1.0);
      return a;
    case AlphaMode::shared_factor:
      if (scalars.size() != 1) throw ShapeError("alpha_of_mode: shared_factor expects one scalar");
      for (auto j : js) a.emplace(j, scalars[0]);
      return a;
    case AlphaMode::learnable_params:
      if (scalars.size() != js.size()) throw ShapeError("alpha_of_mode: learnable_params expects N-1 values");
      for (std::size_t s = 0; s < js.size(); ++s) a.emplace(js[s], scalars[s]);
      return a;
  }
  return a;
}

inline AlphaVector alpha_of_mode(const AlphaModel& m, std::span<const double> joint_obs) {
  return alpha_of_mode(m.mode, m.dsn ? &*m.dsn : nullptr, m.scalars, joint_obs, m.agent_index, m.n_agents);
}

inline Vec consistency_as_vector(const ConsistencyVector& c) {
  Vec v;
  v.reserve(c.scores.size());
  for (const auto& [j, s] : c.scores) v.push_back(s);
  return v;
}

// grad_eta of sum_j C_j * alpha_j(eta), C held constant.
inline Vec dsn_grad(const DsnState& dsn, std::span<const double> joint_obs, const ConsistencyVector& c) {
  if (c.scores.size() != dsn.spec.output_size()) throw ShapeError("dsn_grad: consistency vector has wrong length");
  const Vec cv = consistency_as_vector(c);
  return mlp_backward(dsn.spec, dsn.params, joint_obs, cv).params;
}

// Same quantity for whichever parameter block the mode trains.
inline Vec alpha_param_grad(const AlphaModel& m, std::span<const double> joint_obs, const ConsistencyVector& c) {
  switch (m.mode) {
    case AlphaMode::dsn: return dsn_grad(*m.dsn, joint_obs, c);
    case AlphaMode::shared_factor: {
      double s = 0.0;
      for (const auto& [j, v] : c.scores) s += v;
      return Vec{s};
    }
    case AlphaMode::learnable_params: return consistency_as_vector(c);
    default: return {};
  }
}

}  // namespace dcir
