#pragma once

// Discrete Soft Actor-Critic with exact expectations over the action set.
//
// Actor: obs -> logits. Twin critics q1, q2: obs -> per-action soft Q.
// Targets are only ever moved by soft_update.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dcir/numerics.hpp"
#include "dcir/particle_env.hpp"

namespace dcir {

struct SacConfig {
  double gamma = 0.95;
  double tau = 0.01;
  double omega = 0.1;  // entropy temperature
  double learning_rate = 1e-3;
};

struct AgentNets {
  MlpSpec actor_spec;
  MlpSpec critic_spec;
  Vec actor;
  Vec q1, q2;
  Vec q1_target, q2_target;
  AdamState actor_opt, q1_opt, q2_opt;

  static AgentNets create(std::size_t obs_size, const std::vector<std::size_t>& hidden, double lr, Rng& rng) {
    AgentNets n;
    std::vector<std::size_t> sizes{obs_size};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(kNumActions);
    n.actor_spec = MlpSpec{sizes, Activation::relu, Activation::identity};
    n.critic_spec = n.actor_spec;
    n.actor = init_params(n.actor_spec, rng);
    n.q1 = init_params(n.critic_spec, rng);
    n.q2 = init_params(n.critic_spec, rng);
    n.q1_target = n.q1;
    n.q2_target = n.q2;
    n.actor_opt = AdamState::for_params(n.actor.size(), lr);
    n.q1_opt = AdamState::for_params(n.q1.size(), lr);
    n.q2_opt = AdamState::for_params(n.q2.size(), lr);
    return n;
  }

  friend bool operator==(const AgentNets&, const AgentNets&) = default;
};

inline Vec action_distribution(const MlpSpec& actor_spec, std::span<const double> actor, std::span<const double> obs) {
  return softmax(mlp_forward(actor_spec, actor, obs));
}

inline Vec action_distribution(const AgentNets& nets, std::span<const double> obs) {
  return action_distribution(nets.actor_spec, nets.actor, obs);
}

// Inverse CDF over the fixed action order.
inline ActionIndex sample_action(std::span<const double> dist, Rng& rng) {
  const double u = rng.uniform();
  double c = 0.0;
  for (std::size_t k = 0; k < dist.size(); ++k) {
    c += dist[k];
    if (u < c) return k;
  }
  // Rounding left u above the final partial sum: take the last nonzero entry.
  for (std::size_t k = dist.size(); k-- > 0;)
    if (dist[k] > 0.0) return k;
  return 0;
}

inline ActionIndex greedy_action(std::span<const double> dist) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < dist.size(); ++k)
    if (dist[k] > dist[best]) best = k;
  return best;
}

inline Vec min_soft_q(const AgentNets& nets, std::span<const double> obs, bool use_targets) {
  Vec a = mlp_forward(nets.critic_spec, use_targets ? nets.q1_target : nets.q1, obs);
  const Vec b = mlp_forward(nets.critic_spec, use_targets ? nets.q2_target : nets.q2, obs);
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = std::min(a[k], b[k]);
  return a;
}

// Soft state value under the current actor and the target critics.
inline double soft_value_target(const AgentNets& nets, std::span<const double> next_obs, double omega) {
  const Vec logits = mlp_forward(nets.actor_spec, nets.actor, next_obs);
  const Vec p = softmax(logits);
  const Vec logp = log_softmax(logits);
  const Vec q = min_soft_q(nets, next_obs, true);
  double v = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) v += p[k] * (q[k] - omega * logp[k]);
  return v;
}

inline double critic_target(const AgentNets& nets, std::span<const double> next_obs, double r_proxy, bool done,
                            const SacConfig& cfg) {
  if (done || cfg.gamma == 0.0) return r_proxy;
  return r_proxy + cfg.gamma * soft_value_target(nets, next_obs, cfg.omega);
}

struct CriticSample {
  std::span<const double> obs;
  ActionIndex action;
  double target;
};

// Gradient of mean (Q(o)[a] - y)^2 over the batch for one critic.
inline Vec critic_loss_grad(const MlpSpec& spec, std::span<const double> q, std::span<const CriticSample> batch) {
  Vec g(q.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  Vec og(spec.output_size(), 0.0);
  for (const auto& s : batch) {
    const Vec out = mlp_forward(spec, q, s.obs);
    std::fill(og.begin(), og.end(), 0.0);
    og[s.action] = 2.0 * (out[s.action] - s.target) * scale;
    const auto bg = mlp_backward(spec, q, s.obs, og);
    axpy(1.0, bg.params, g);
  }
  return g;
}

inline double critic_loss(const MlpSpec& spec, std::span<const double> q, std::span<const CriticSample> batch) {
  double l = 0.0;
  for (const auto& s : batch) {
    const double d = mlp_forward(spec, q, s.obs)[s.action] - s.target;
    l += d * d;
  }
  return l / static_cast<double>(batch.size());
}

inline void critic_update(AgentNets& nets, std::span<const CriticSample> batch) {
  if (batch.empty()) throw std::invalid_argument("critic_update: empty batch");
  for (const auto& s : batch)
    if (!std::isfinite(s.target)) throw NumericError("critic_update: non-finite target");
  const Vec g1 = critic_loss_grad(nets.critic_spec, nets.q1, batch);
  const Vec g2 = critic_loss_grad(nets.critic_spec, nets.q2, batch);
  adam_step(nets.q1_opt, nets.q1, g1);
  adam_step(nets.q2_opt, nets.q2, g2);
}

// Mean over observations of sum_a pi(a|o) (omega log pi(a|o) - minQ(o)[a]),
// with the online critics held fixed.
inline double policy_loss(const AgentNets& nets, std::span<const double> actor,
                          std::span<const std::span<const double>> batch, double omega) {
  double l = 0.0;
  for (auto obs : batch) {
    const Vec logits = mlp_forward(nets.actor_spec, actor, obs);
    const Vec p = softmax(logits), logp = log_softmax(logits);
    const Vec q = min_soft_q(nets, obs, false);
    for (std::size_t k = 0; k < p.size(); ++k) l += p[k] * (omega * logp[k] - q[k]);
  }
  return l / static_cast<double>(batch.size());
}

inline Vec policy_loss_grad(const AgentNets& nets, std::span<const double> actor,
                            std::span<const std::span<const double>> batch, double omega) {
  Vec g(actor.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (auto obs : batch) {
    const Vec logits = mlp_forward(nets.actor_spec, actor, obs);
    const Vec p = softmax(logits), logp = log_softmax(logits);
    const Vec q = min_soft_q(nets, obs, false);
    // d/dp_k of sum_a p_a (omega log p_a - q_a) = omega (log p_k + 1) - q_k
    Vec dp(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) dp[k] = (omega * (logp[k] + 1.0) - q[k]) * scale;
    const Vec dz = softmax_vjp(p, dp);
    axpy(1.0, mlp_backward(nets.actor_spec, actor, obs, dz).params, g);
  }
  return g;
}

inline void policy_update(AgentNets& nets, std::span<const std::span<const double>> batch, const SacConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("policy_update: empty batch");
  const Vec g = policy_loss_grad(nets, nets.actor, batch, cfg.omega);
  adam_step(nets.actor_opt, nets.actor, g);
}

inline void soft_update(AgentNets& nets, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must lie in (0,1]");
  for (std::size_t k = 0; k < nets.q1.size(); ++k) {
    nets.q1_target[k] = (1.0 - tau) * nets.q1_target[k] + tau * nets.q1[k];
    nets.q2_target[k] = (1.0 - tau) * nets.q2_target[k] + tau * nets.q2[k];
  }
}

}  // namespace dcir
