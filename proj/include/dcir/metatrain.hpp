#pragma once

// Bi-level training loop.
//
// Inner level: each agent runs discrete SAC on its proxy reward
// r_ex + beta * r_dcir. Outer level: a centralized extrinsic critic V^ex
// gives advantages for a policy-gradient objective J^ex, and the chain
// eta -> proxy critic phi' -> actor theta' -> J^ex gives the ascent
// direction for each agent's alpha parameters.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcir/consistency.hpp"
#include "dcir/dcir.hpp"
#include "dcir/numerics.hpp"
#include "dcir/particle_env.hpp"
#include "dcir/sac_agent.hpp"

namespace dcir {

struct TransitionRecord {
  std::vector<Vec> obs;
  std::vector<Vec> next_obs;
  double r_ex = 0.0;
  std::vector<ActionIndex> actions;
  Vec behavior_probs;
  // own_dists[i] = pi_i(o_i); cross_dists[i][j] = pi_j(o_i); both at collection time.
  std::vector<Vec> own_dists;
  std::vector<std::map<std::size_t, Vec>> cross_dists;
  bool done = false;

  Vec joint_obs() const { return concat_observations(obs); }
  Vec joint_next_obs() const { return concat_observations(next_obs); }

  friend bool operator==(const TransitionRecord&, const TransitionRecord&) = default;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  }

  void push(TransitionRecord rec) {
    if (ring_.size() < capacity_) {
      ring_.push_back(std::move(rec));
    } else {
      ring_[cursor_] = std::move(rec);
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  // Uniform with replacement over the live region.
  std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const {
    if (ring_.size() < batch_size || batch_size == 0)
      throw std::logic_error("ReplayBuffer: cannot sample " + std::to_string(batch_size) + " from " +
                             std::to_string(ring_.size()) + " records");
    std::vector<std::size_t> idx(batch_size);
    for (auto& k : idx) k = rng.below(ring_.size());
    return idx;
  }

  std::vector<const TransitionRecord*> sample(std::size_t batch_size, Rng& rng) const {
    std::vector<const TransitionRecord*> out;
    for (auto k : sample_indices(batch_size, rng)) out.push_back(&ring_[k]);
    return out;
  }

  std::size_t size() const { return ring_.size(); }
  std::size_t capacity() const { return capacity_; }
  const TransitionRecord& operator[](std::size_t k) const { return ring_.at(k); }

 private:
  std::size_t capacity_;
  std::vector<TransitionRecord> ring_;
  std::size_t cursor_ = 0;
};

using Batch = std::span<const TransitionRecord* const>;

struct ExtrinsicCritic {
  MlpSpec spec;
  Vec params;
  AdamState opt;

  static ExtrinsicCritic create(std::size_t joint_obs_size, const std::vector<std::size_t>& hidden, double lr,
                                Rng& rng) {
    ExtrinsicCritic v;
    std::vector<std::size_t> sizes{joint_obs_size};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    v.spec = MlpSpec{sizes, Activation::relu, Activation::identity};
    v.params = init_params(v.spec, rng);
    v.opt = AdamState::for_params(v.params.size(), lr);
    return v;
  }

  double value(std::span<const double> joint_obs) const { return mlp_forward(spec, params, joint_obs)[0]; }
  double value(std::span<const double> params_override, std::span<const double> joint_obs) const {
    return mlp_forward(spec, params_override, joint_obs)[0];
  }

  friend bool operator==(const ExtrinsicCritic&, const ExtrinsicCritic&) = default;
};

struct MetaConfig {
  std::size_t batch_size = 256;
  std::size_t collect_steps_per_iter = 100;
  std::size_t updates_per_iter = 1;
  std::size_t buffer_capacity = 100000;
  std::uint64_t seed = 0;
  // Include gamma on V^ex(o') in the extrinsic advantage.
  bool advantage_gamma = true;
  // Recompute cross distributions with the current actors instead of the stored ones.
  bool recompute_cross = false;
  double importance_clip = 10.0;
};

struct DcirSample {
  double r_dcir = 0.0;
  ConsistencyVector c;
  AlphaVector alpha;
};

// C from the stored distributions, alpha from the current parameters.
inline DcirSample compute_dcir_for_sample(const TransitionRecord& rec, std::size_t i, const AlphaModel& alpha,
                                          const DcirConfig& cfg) {
  DcirSample s;
  s.c = consistency_from_distributions(cfg.divergence, i, rec.cross_dists[i], rec.own_dists[i]);
  s.alpha = alpha_of_mode(alpha, rec.joint_obs());
  s.r_dcir = dcir_reward(s.alpha, s.c);
  return s;
}

// Same, but C from the live actors on the stored observation.
inline DcirSample compute_dcir_recomputed(const TransitionRecord& rec, std::size_t i, const AlphaModel& alpha,
                                          const DcirConfig& cfg, std::span<const AgentNets> agents) {
  DcirSample s;
  s.c = consistency_vector(cfg.divergence, agents, rec.obs[i], i);
  s.alpha = alpha_of_mode(alpha, rec.joint_obs());
  s.r_dcir = dcir_reward(s.alpha, s.c);
  return s;
}

inline double extrinsic_advantage(const ExtrinsicCritic& vex, const TransitionRecord& rec, double gamma) {
  const double v_now = vex.value(rec.joint_obs());
  const double v_next = rec.done ? 0.0 : gamma * vex.value(rec.joint_next_obs());
  return rec.r_ex + v_next - v_now;
}

// Gradient of mean (V(o) - (r + gamma * V_frozen(o')))^2.
inline Vec vex_loss_grad(const ExtrinsicCritic& vex, std::span<const double> params, Batch batch, double gamma) {
  Vec g(params.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto* rec : batch) {
    const Vec x = rec->joint_obs();
    const double y = rec->r_ex + (rec->done ? 0.0 : gamma * vex.value(rec->joint_next_obs()));
    const double v = vex.value(params, x);
    const Vec og{2.0 * (v - y) * scale};
    axpy(1.0, mlp_backward(vex.spec, params, x, og).params, g);
  }
  return g;
}

inline double vex_loss(const ExtrinsicCritic& vex, std::span<const double> params, Batch batch, double gamma) {
  double l = 0.0;
  for (const auto* rec : batch) {
    const double y = rec->r_ex + (rec->done ? 0.0 : gamma * vex.value(rec->joint_next_obs()));
    const double d = vex.value(params, rec->joint_obs()) - y;
    l += d * d;
  }
  return l / static_cast<double>(batch.size());
}

inline void vex_update(ExtrinsicCritic& vex, Batch batch, double gamma) {
  if (batch.empty()) throw std::invalid_argument("vex_update: empty batch");
  const Vec g = vex_loss_grad(vex, vex.params, batch, gamma);
  adam_step(vex.opt, vex.params, g);
}

struct PolicyGradSample {
  std::span<const double> obs;
  ActionIndex action;
  double advantage;
  double behavior_prob;
};

inline double importance_weight(const MlpSpec& actor_spec, std::span<const double> actor, const PolicyGradSample& s,
                                double clip) {
  if (!(s.behavior_prob > 0.0)) throw std::invalid_argument("importance_weight: behavior_prob must be > 0");
  const double p = action_distribution(actor_spec, actor, s.obs)[s.action];
  return std::clamp(p / s.behavior_prob, 0.0, clip);
}

// grad of mean w * log pi(u|o) * A, with w held constant.
inline Vec extrinsic_objective_grad(const MlpSpec& actor_spec, std::span<const double> actor,
                                    std::span<const PolicyGradSample> batch, double clip = 10.0) {
  Vec g(actor.size(), 0.0);
  if (batch.empty()) return g;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    if (!(s.behavior_prob > 0.0)) throw std::invalid_argument("extrinsic_objective_grad: behavior_prob must be > 0");
    const Vec p = action_distribution(actor_spec, actor, s.obs);
    const double w = std::clamp(p[s.action] / s.behavior_prob, 0.0, clip);
    const double coef = w * s.advantage * scale;
    if (coef == 0.0) continue;
    // d log softmax(z)[u] / dz = onehot(u) - p
    Vec dz(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) dz[k] = coef * ((k == s.action ? 1.0 : 0.0) - p[k]);
    axpy(1.0, mlp_backward(actor_spec, actor, s.obs, dz).params, g);
  }
  return g;
}

struct MetaInputs {
  const SacConfig* sac = nullptr;
  const DcirConfig* dcir = nullptr;
  const MetaConfig* meta = nullptr;
  // Learning rate in the chain prefactor; bound to the SAC learning rate by the trainer.
  double xi = 1e-3;
  double advantage_gamma = 0.95;
};

namespace detail {

// Directional derivative of pi(o) along actor-parameter direction g:
// a = (diag(p) - p p^T) * (dz/dtheta) g, one backward pass per logit.
inline Vec actor_jvp(const MlpSpec& spec, std::span<const double> actor, std::span<const double> obs,
                     std::span<const double> g) {
  const Vec p = softmax(mlp_forward(spec, actor, obs));
  const std::size_t n = p.size();
  Vec dz(n);
  Vec onehot(n, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    onehot.assign(n, 0.0);
    onehot[m] = 1.0;
    dz[m] = dot(mlp_backward(spec, actor, obs, onehot).params, g);
  }
  const double pdz = dot(p, dz);
  Vec a(n);
  for (std::size_t k = 0; k < n; ++k) a[k] = p[k] * (dz[k] - pdz);
  return a;
}

}  // namespace detail

struct MetaGradResult {
  Vec grad;             // ascent direction on the alpha parameters
  Vec objective_grad;   // g_theta, for diagnostics
};

// Chain-rule meta-gradient for agent i. `nets` must hold the critics and
// actor as they were *before* this iteration's inner SAC update, so the
// one-step proxy-critic regression below reproduces phi'.
inline MetaGradResult meta_grad_eta(std::size_t i, Batch batch, const AgentNets& nets, const AlphaModel& alpha,
                                    const ExtrinsicCritic& vex, const MetaInputs& in) {
  if (batch.empty()) throw std::invalid_argument("meta_grad_eta: empty batch");
  const auto& sac = *in.sac;
  const auto& dcfg = *in.dcir;
  MetaGradResult out;
  out.grad.assign(alpha.trainable().size(), 0.0);

  // 1. g_theta at the current actor.
  std::vector<PolicyGradSample> pg;
  pg.reserve(batch.size());
  for (const auto* rec : batch)
    pg.push_back({rec->obs[i], rec->actions[i], extrinsic_advantage(vex, *rec, in.advantage_gamma),
                  rec->behavior_probs[i]});
  out.objective_grad = extrinsic_objective_grad(nets.actor_spec, nets.actor, pg, in.meta->importance_clip);
  const Vec& g_theta = out.objective_grad;
  if (!all_finite(g_theta)) throw NumericError("meta_grad_eta: non-finite objective gradient");
  if (dcfg.beta == 0.0) return out;

  const double xi = in.xi;
  const double prefactor = 2.0 * dcfg.beta * xi * xi / static_cast<double>(batch.size());
  const MlpSpec& cs = nets.critic_spec;
  Vec onehot(cs.output_size(), 0.0);
  for (const auto* rec : batch) {
    const auto& o = rec->obs[i];
    const ActionIndex u = rec->actions[i];
    const DcirSample ds = compute_dcir_for_sample(*rec, i, alpha, dcfg);
    const double y = critic_target(nets, rec->next_obs[i], proxy_reward(rec->r_ex, dcfg, ds.r_dcir), rec->done, sac);

    // One-sample regression step for each critic: phi' = phi - 2 xi (Q(o,u) - y) dQ(o,u)/dphi.
    onehot.assign(cs.output_size(), 0.0);
    onehot[u] = 1.0;
    const Vec q1 = mlp_forward(cs, nets.q1, o);
    const Vec q2 = mlp_forward(cs, nets.q2, o);
    const Vec dq1 = mlp_backward(cs, nets.q1, o, onehot).params;
    const Vec dq2 = mlp_backward(cs, nets.q2, o, onehot).params;
    Vec q1p = nets.q1, q2p = nets.q2;
    axpy(-2.0 * xi * (q1[u] - y), dq1, q1p);
    axpy(-2.0 * xi * (q2[u] - y), dq2, q2p);

    // 2. a = J_pi g_theta.
    const Vec a = detail::actor_jvp(nets.actor_spec, nets.actor, o, g_theta);

    // 3. b = J_Q(phi')^T a through the min-selected critic per action.
    const Vec q1n = mlp_forward(cs, q1p, o);
    const Vec q2n = mlp_forward(cs, q2p, o);
    Vec a1(a.size(), 0.0), a2(a.size(), 0.0);
    for (std::size_t k = 0; k < a.size(); ++k) (q1n[k] <= q2n[k] ? a1 : a2)[k] = a[k];
    const Vec b1 = mlp_backward(cs, q1p, o, a1).params;
    const Vec b2 = mlp_backward(cs, q2p, o, a2).params;

    // 4. c = b . dQ(o,u)/dphi.
    const double c = dot(b1, dq1) + dot(b2, dq2);

    // 5. accumulate c * grad_eta r_dcir.
    const Vec dr = alpha_param_grad(alpha, rec->joint_obs(), ds.c);
    axpy(prefactor * c, dr, out.grad);
  }
  if (!all_finite(out.grad)) throw NumericError("meta_grad_eta: non-finite meta-gradient");
  return out;
}

// ---------------------------------------------------------------------------
// Trainer

enum class Method { dcir, sparse };

inline const char* to_string(Method m) { return m == Method::dcir ? "dcir" : "sparse"; }

struct TrainerConfig {
  WorldConfig world;
  SacConfig sac;
  DcirConfig dcir;
  MetaConfig meta;
  Method method = Method::dcir;
  std::vector<std::size_t> hidden{64, 64};
  std::vector<std::size_t> dsn_hidden{64, 64};
  std::vector<std::size_t> vex_hidden{64, 64};
  bool dsn_tanh = true;
  double alpha_learning_rate = 1e-3;
};

struct IterationStats {
  double mean_r_dcir = 0.0;
  // Keyed by (i, j), averaged over agents' sampled batches.
  std::map<std::pair<std::size_t, std::size_t>, double> mean_alpha;
  std::map<std::pair<std::size_t, std::size_t>, double> mean_consistency;
  std::size_t meta_aborts = 0;
};

struct TrainerState {
  std::vector<AgentNets> agents;
  std::vector<AlphaModel> alphas;
  ExtrinsicCritic vex;
  ReplayBuffer buffer{1};
  Rng collect_rng;
  Rng sample_rng;
  Rng episode_rng;
  WorldState world;
  std::size_t iteration = 0;
  std::size_t env_steps = 0;
  IterationStats last;

  static TrainerState create(const TrainerConfig& cfg, std::uint64_t seed) {
    cfg.world.validate();
    TrainerState st;
    Rng root(seed);
    Rng init = root.split();
    st.collect_rng = root.split();
    st.sample_rng = root.split();
    st.episode_rng = root.split();
    const std::size_t n = cfg.world.n_agents;
    const std::size_t obs = cfg.world.obs_size();
    for (std::size_t i = 0; i < n; ++i)
      st.agents.push_back(AgentNets::create(obs, cfg.hidden, cfg.sac.learning_rate, init));
    for (std::size_t i = 0; i < n; ++i)
      st.alphas.push_back(AlphaModel::create(cfg.dcir.alpha_mode, i, n, obs, cfg.dsn_hidden, cfg.dsn_tanh,
                                             cfg.alpha_learning_rate, init));
    st.vex = ExtrinsicCritic::create(n * obs, cfg.vex_hidden, cfg.sac.learning_rate, init);
    st.buffer = ReplayBuffer(cfg.meta.buffer_capacity);
    st.world = reset(cfg.world, st.episode_rng.next_u64());
    return st;
  }
};

inline void collect_step(TrainerState& st, const TrainerConfig& cfg) {
  const std::size_t n = cfg.world.n_agents;
  TransitionRecord rec;
  rec.obs = observe_all(cfg.world, st.world);
  rec.actions.resize(n);
  rec.behavior_probs.resize(n);
  rec.own_dists.resize(n);
  rec.cross_dists.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    rec.own_dists[i] = action_distribution(st.agents[i], rec.obs[i]);
    rec.actions[i] = sample_action(rec.own_dists[i], st.collect_rng);
    rec.behavior_probs[i] = rec.own_dists[i][rec.actions[i]];
    rec.cross_dists[i] = cross_distributions(st.agents, rec.obs[i], i);
  }
  StepResult res = step(cfg.world, st.world, rec.actions);
  rec.r_ex = res.r_ex;
  rec.done = res.done;
  rec.next_obs = observe_all(cfg.world, res.next_state);
  st.buffer.push(std::move(rec));
  st.env_steps += 1;
  st.world = res.done ? reset(cfg.world, st.episode_rng.next_u64()) : std::move(res.next_state);
}

inline void train_iteration(TrainerState& st, const TrainerConfig& cfg) {
  const std::size_t n = cfg.world.n_agents;
  for (std::size_t s = 0; s < cfg.meta.collect_steps_per_iter; ++s) collect_step(st, cfg);
  st.iteration += 1;
  st.last = IterationStats{};
  if (st.buffer.size() < cfg.meta.batch_size) return;

  const bool use_dcir = cfg.method == Method::dcir;
  const MetaInputs mi{&cfg.sac, &cfg.dcir, &cfg.meta, cfg.sac.learning_rate,
                      cfg.meta.advantage_gamma ? cfg.sac.gamma : 1.0};
  std::size_t dcir_count = 0;

  for (std::size_t u = 0; u < cfg.meta.updates_per_iter; ++u) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto batch = st.buffer.sample(cfg.meta.batch_size, st.sample_rng);
      const AgentNets before = st.agents[i];

      std::vector<CriticSample> cs;
      std::vector<std::span<const double>> pobs;
      cs.reserve(batch.size());
      pobs.reserve(batch.size());
      for (const auto* rec : batch) {
        double r_proxy = rec->r_ex;
        if (use_dcir) {
          const DcirSample d = cfg.meta.recompute_cross
                                   ? compute_dcir_recomputed(*rec, i, st.alphas[i], cfg.dcir, st.agents)
                                   : compute_dcir_for_sample(*rec, i, st.alphas[i], cfg.dcir);
          r_proxy = proxy_reward(rec->r_ex, cfg.dcir, d.r_dcir);
          st.last.mean_r_dcir += d.r_dcir;
          for (const auto& [j, a] : d.alpha) st.last.mean_alpha[{i, j}] += a;
          for (const auto& [j, c] : d.c.scores) st.last.mean_consistency[{i, j}] += c;
          ++dcir_count;
        }
        const double y = critic_target(st.agents[i], rec->next_obs[i], r_proxy, rec->done, cfg.sac);
        cs.push_back({rec->obs[i], rec->actions[i], y});
        pobs.push_back(rec->obs[i]);
      }
      critic_update(st.agents[i], cs);
      policy_update(st.agents[i], pobs, cfg.sac);
      soft_update(st.agents[i], cfg.sac.tau);

      vex_update(st.vex, batch, cfg.sac.gamma);

      if (use_dcir && is_trainable(cfg.dcir.alpha_mode)) {
        try {
          const auto mg = meta_grad_eta(i, batch, before, st.alphas[i], st.vex, mi);
          Vec descent(mg.grad.size());
          for (std::size_t k = 0; k < descent.size(); ++k) descent[k] = -mg.grad[k];
          adam_step(st.alphas[i].optimizer(), st.alphas[i].trainable(), descent);
        } catch (const NumericError&) {
          st.last.meta_aborts += 1;
        }
      }
    }
  }
  if (dcir_count > 0) {
    const double per_agent = static_cast<double>(dcir_count) / static_cast<double>(n);
    st.last.mean_r_dcir /= static_cast<double>(dcir_count);
    for (auto& [k, v] : st.last.mean_alpha) v /= per_agent;
    for (auto& [k, v] : st.last.mean_consistency) v /= per_agent;
  }
}

// ---------------------------------------------------------------------------
// Evaluation

enum class EvalPolicy { greedy, sample, uniform_random };

struct EvalResult {
  double mean_return = 0.0;
  double std_error = 0.0;
  EpisodeMetrics metrics;
  std::optional<double> pilot_proportion;
  std::vector<double> returns;
};

inline double standard_error(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  const double var = ss / static_cast<double>(xs.size() - 1);
  return std::sqrt(var / static_cast<double>(xs.size()));
}

inline EvalResult evaluate(std::span<const AgentNets> policies, const WorldConfig& world, std::size_t episodes,
                           std::uint64_t seed, EvalPolicy how = EvalPolicy::greedy) {
  if (episodes == 0) throw std::invalid_argument("evaluate: episodes must be >= 1");
  Rng rng(seed);
  EvalResult res;
  double pilot_sum = 0.0;
  const bool pilot = world.scenario == Scenario::pilot_study_1 || world.scenario == Scenario::pilot_study_2;
  const int study = world.scenario == Scenario::pilot_study_1 ? 1 : 2;
  for (std::size_t e = 0; e < episodes; ++e) {
    Rng act_rng = rng.split();
    WorldState s = reset(world, rng.next_u64());
    std::vector<WorldState> trace{s};
    double ret = 0.0;
    std::vector<ActionIndex> acts(world.n_agents);
    bool done = false;
    while (!done) {
      for (std::size_t i = 0; i < world.n_agents; ++i) {
        if (how == EvalPolicy::uniform_random) {
          acts[i] = act_rng.below(kNumActions);
          continue;
        }
        const Vec d = action_distribution(policies[i], observe(world, s, i));
        acts[i] = how == EvalPolicy::greedy ? greedy_action(d) : sample_action(d, act_rng);
      }
      StepResult r = step(world, s, acts);
      ret += r.r_ex;
      done = r.done;
      s = std::move(r.next_state);
      trace.push_back(s);
    }
    res.returns.push_back(ret);
    // Metrics over post-action states.
    const auto m = episode_metrics(world, std::span(trace).subspan(1));
    res.metrics.mean_occupancy += m.mean_occupancy;
    res.metrics.mean_distance += m.mean_distance;
    if (pilot) pilot_sum += pilot_proportions(world, trace, study);
  }
  const double ne = static_cast<double>(episodes);
  for (double r : res.returns) res.mean_return += r;
  res.mean_return /= ne;
  res.std_error = standard_error(res.returns);
  res.metrics.mean_occupancy /= ne;
  res.metrics.mean_distance /= ne;
  if (pilot) res.pilot_proportion = pilot_sum / ne;
  return res;
}

// Mean pairwise KL(pi_j(o_i) || pi_i(o_i)) over observations from the given states.
inline double mean_pairwise_kl(std::span<const AgentNets> agents, const WorldConfig& world,
                               std::span<const WorldState> states) {
  double s = 0.0;
  std::size_t n = 0;
  const DivergenceOptions kl{DivergenceKind::kl, false};
  for (const auto& st : states) {
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const auto c = consistency_vector(kl, agents, observe(world, st, i), i);
      for (const auto& [j, v] : c.scores) {
        s += v;
        ++n;
      }
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace dcir
