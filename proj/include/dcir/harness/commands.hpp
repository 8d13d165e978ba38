#pragma once

// Experiment orchestration behind the CLI: train / eval / ablate / pilot / plot.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcir/harness/checkpoint.hpp"
#include "dcir/harness/config.hpp"
#include "dcir/harness/csv.hpp"
#include "dcir/harness/plot.hpp"
#include "dcir/metatrain.hpp"

namespace dcir::harness {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericAbort = 3, kIoError = 4 };

inline std::vector<std::string> log_header(std::size_t n_agents) {
  std::vector<std::string> h{"iteration", "env_steps", "seed", "mean_return", "mean_r_dcir"};
  for (std::size_t i = 0; i < n_agents; ++i)
    for (std::size_t j = 0; j < n_agents; ++j)
      if (i != j) h.push_back("alpha_" + std::to_string(i) + "_" + std::to_string(j));
  for (std::size_t i = 0; i < n_agents; ++i)
    for (std::size_t j = 0; j < n_agents; ++j)
      if (i != j) h.push_back("consistency_" + std::to_string(i) + "_" + std::to_string(j));
  h.push_back("occupancy");
  h.push_back("distance");
  return h;
}

struct SeedRun {
  std::uint64_t seed = 0;
  TrainerState state;
  EvalResult final_eval;
  std::string log_csv;
  std::size_t meta_aborts = 0;
  // mean_return column, one entry per log row
  std::vector<double> returns;
};

// Optional per-iteration hook, e.g. for recording parameter trajectories in tests.
using IterationHook = std::function<void(const TrainerState&)>;

inline SeedRun run_seed(const RunConfig& cfg, std::uint64_t seed, const IterationHook& hook = {}) {
  const auto& tc = cfg.trainer;
  const std::size_t n = tc.world.n_agents;
  SeedRun run;
  run.seed = seed;
  run.state = TrainerState::create(tc, seed);
  auto& st = run.state;
  run.log_csv = csv_line(log_header(n));

  // Stats accumulated between log rows.
  double r_dcir_sum = 0.0;
  std::map<std::pair<std::size_t, std::size_t>, double> alpha_sum, cons_sum;
  std::size_t stat_iters = 0;
  std::size_t next_eval = cfg.eval_every;
  auto emit = [&] {
    const EvalResult ev = evaluate(st.agents, tc.world, cfg.eval_episodes, seed);
    std::vector<std::string> row{std::to_string(st.iteration), std::to_string(st.env_steps), std::to_string(seed),
                                 csv_real(ev.mean_return)};
    const double d = stat_iters ? static_cast<double>(stat_iters) : 1.0;
    row.push_back(csv_real(r_dcir_sum / d));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) row.push_back(csv_real(alpha_sum[{i, j}] / d));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) row.push_back(csv_real(cons_sum[{i, j}] / d));
    row.push_back(csv_real(ev.metrics.mean_occupancy));
    row.push_back(csv_real(ev.metrics.mean_distance));
    run.log_csv += csv_line(row);
    run.returns.push_back(ev.mean_return);
    run.final_eval = ev;
    r_dcir_sum = 0.0;
    alpha_sum.clear();
    cons_sum.clear();
    stat_iters = 0;
  };

  bool logged_last = false;
  while (st.env_steps < cfg.total_env_steps) {
    train_iteration(st, tc);
    if (hook) hook(st);
    run.meta_aborts += st.last.meta_aborts;
    r_dcir_sum += st.last.mean_r_dcir;
    for (const auto& [k, v] : st.last.mean_alpha) alpha_sum[k] += v;
    for (const auto& [k, v] : st.last.mean_consistency) cons_sum[k] += v;
    ++stat_iters;
    logged_last = false;
    if (st.env_steps >= next_eval) {
      emit();
      logged_last = true;
      while (next_eval <= st.env_steps) next_eval += cfg.eval_every;
    }
  }
  if (!logged_last) emit();
  return run;
}

inline std::string resolve_output_dir(const RunConfig& cfg) {
  if (const char* env = std::getenv("DCIR_OUTPUT_DIR"); env && *env) return env;
  return cfg.output_dir;
}

inline void ensure_dir(const std::string& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw IoError("cannot create directory '" + d + "': " + ec.message());
}

inline std::string seed_log_path(const std::string& dir, std::uint64_t seed) {
  return (fs::path(dir) / ("log_seed" + std::to_string(seed) + ".csv")).string();
}
inline std::string seed_ckpt_path(const std::string& dir, std::uint64_t seed) {
  return (fs::path(dir) / ("checkpoint_seed" + std::to_string(seed) + ".txt")).string();
}

inline std::vector<std::uint64_t> seed_list(const RunConfig& cfg, std::size_t count) {
  std::vector<std::uint64_t> s;
  for (std::size_t k = 0; k < count; ++k) s.push_back(cfg.seed + k);
  return s;
}

inline void write_manifest(const std::string& dir, const RunConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  std::string m = "config_hash " + hash_hex(config_hash(cfg)) + "\n";
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char ts[64];
  std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  m += std::string("start_timestamp ") + ts + "\n";
  m += "seeds";
  for (auto s : seeds) m += " " + std::to_string(s);
  m += "\nartifacts\n";
  m += "  config.txt\n  aborts.txt\n";
  for (auto s : seeds) {
    m += "  " + fs::path(seed_log_path(dir, s)).filename().string() + "\n";
    m += "  " + fs::path(seed_ckpt_path(dir, s)).filename().string() + "\n";
  }
  write_text_file((fs::path(dir) / "manifest.txt").string(), m);
  write_text_file((fs::path(dir) / "config.txt").string(), serialize(cfg));
}

struct TrainOutcome {
  std::vector<SeedRun> runs;
};

// Trains every seed into `dir`. Numeric aborts in the meta step are counted
// and written to aborts.txt; a fatal NumericError propagates.
inline TrainOutcome cmd_train(const RunConfig& cfg, std::size_t seeds, const std::string& dir,
                              std::ostream& log = std::cout) {
  ensure_dir(dir);
  const auto sl = seed_list(cfg, seeds);
  write_manifest(dir, cfg, sl);
  TrainOutcome out;
  std::string aborts;
  for (auto s : sl) {
    SeedRun r;
    try {
      r = run_seed(cfg, s);
    } catch (const NumericError& e) {
      aborts += "seed " + std::to_string(s) + " fatal: " + e.what() + "\n";
      write_text_file((fs::path(dir) / "aborts.txt").string(), aborts);
      throw;
    }
    if (r.meta_aborts) aborts += "seed " + std::to_string(s) + " meta_aborts " + std::to_string(r.meta_aborts) + "\n";
    write_text_file(seed_log_path(dir, s), r.log_csv);
    save_checkpoint(seed_ckpt_path(dir, s), make_checkpoint(cfg, s, r.state));
    log << "seed " << s << ": final mean_return " << csv_real(r.final_eval.mean_return) << " +/- "
        << csv_real(r.final_eval.std_error) << "\n";
    out.runs.push_back(std::move(r));
  }
  write_text_file((fs::path(dir) / "aborts.txt").string(), aborts);
  return out;
}

struct HashMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EvalOutcome {
  EvalResult result;
  std::string csv;
};

// Greedy evaluation of a checkpoint. When `expected` is given its hash must
// match the checkpoint's.
inline EvalOutcome cmd_eval(const std::string& checkpoint_path, std::size_t episodes, std::uint64_t seed,
                            const std::optional<RunConfig>& expected, const std::string& out_dir,
                            std::ostream& log = std::cout) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const RunConfig stored = parse_config(ck.config_text);
  const std::uint64_t stored_hash = config_hash(stored);
  if (stored_hash != ck.config_hash)
    throw HashMismatch("checkpoint header hash " + hash_hex(ck.config_hash) + " != embedded config hash " +
                       hash_hex(stored_hash));
  if (expected && config_hash(*expected) != ck.config_hash)
    throw HashMismatch("config hash " + hash_hex(config_hash(*expected)) + " != checkpoint hash " +
                       hash_hex(ck.config_hash));
  const TrainerState st = restore_trainer(ck, stored);
  EvalOutcome out;
  out.result = evaluate(st.agents, stored.trainer.world, episodes, seed);
  const auto& r = out.result;
  out.csv = csv_line({"episode", "return"});
  for (std::size_t e = 0; e < r.returns.size(); ++e) out.csv += csv_line({std::to_string(e), csv_real(r.returns[e])});
  out.csv += csv_line({"summary_mean", csv_real(r.mean_return)});
  out.csv += csv_line({"summary_std_error", csv_real(r.std_error)});
  out.csv += csv_line({"summary_occupancy", csv_real(r.metrics.mean_occupancy)});
  out.csv += csv_line({"summary_distance", csv_real(r.metrics.mean_distance)});
  ensure_dir(out_dir);
  const std::string name = "eval_" + fs::path(checkpoint_path).stem().string() + "_seed" + std::to_string(seed) + ".csv";
  write_text_file((fs::path(out_dir) / name).string(), out.csv);
  log << "mean_return " << csv_real(r.mean_return) << " +/- " << csv_real(r.std_error) << "  occupancy "
      << csv_real(r.metrics.mean_occupancy) << "  distance " << csv_real(r.metrics.mean_distance) << "\n";
  return out;
}

enum class AblationAxis { divergence, alpha_mode, beta };

inline AblationAxis parse_axis(const std::string& s) {
  if (s == "divergence") return AblationAxis::divergence;
  if (s == "alpha_mode") return AblationAxis::alpha_mode;
  if (s == "beta") return AblationAxis::beta;
  throw std::invalid_argument("unknown ablation axis '" + s + "'");
}

struct Variant {
  std::string name;
  RunConfig cfg;
};

inline std::vector<Variant> ablation_variants(const RunConfig& base, AblationAxis axis) {
  std::vector<Variant> v;
  RunConfig c = base;
  c.trainer.method = Method::dcir;
  switch (axis) {
    case AblationAxis::divergence:
      for (auto k : {DivergenceKind::kl, DivergenceKind::js, DivergenceKind::tv, DivergenceKind::binary}) {
        c.trainer.dcir.divergence.kind = k;
        v.push_back({to_string(k), c});
      }
      break;
    case AblationAxis::alpha_mode:
      for (auto m : {AlphaMode::dsn, AlphaMode::fixed_inconsistency, AlphaMode::fixed_consistency,
                     AlphaMode::shared_factor, AlphaMode::learnable_params}) {
        c.trainer.dcir.alpha_mode = m;
        v.push_back({to_string(m), c});
      }
      break;
    case AblationAxis::beta:
      for (double b : base.ablate_betas) {
        c.trainer.dcir.beta = b;
        v.push_back({"beta_" + format_double(b), c});
      }
      break;
  }
  return v;
}

struct AblationRow {
  std::string variant;
  std::uint64_t seed;
  EvalResult eval;
};

inline std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, AblationAxis axis, const std::string& dir,
                                           std::ostream& log = std::cout) {
  static const char* names[] = {"divergence", "alpha_mode", "beta"};
  const std::string axis_name = names[static_cast<int>(axis)];
  ensure_dir(dir);
  std::vector<AblationRow> rows;
  std::string csv = csv_line({"axis", "variant", "seed", "mean_return", "std_error", "occupancy", "distance"});
  for (const auto& var : ablation_variants(cfg, axis)) {
    const std::string sub = (fs::path(dir) / ("ablate_" + axis_name) / var.name).string();
    const auto out = cmd_train(var.cfg, cfg.n_seeds, sub, log);
    for (const auto& r : out.runs) {
      rows.push_back({var.name, r.seed, r.final_eval});
      csv += csv_line({axis_name, var.name, std::to_string(r.seed), csv_real(r.final_eval.mean_return),
                       csv_real(r.final_eval.std_error), csv_real(r.final_eval.metrics.mean_occupancy),
                       csv_real(r.final_eval.metrics.mean_distance)});
    }
  }
  write_text_file((fs::path(dir) / ("ablate_" + axis_name + ".csv")).string(), csv);
  return rows;
}

struct PilotSummary {
  std::string method;
  int study = 1;
  double mean = 0.0;  // over all (seed, repetition) episodes
  double stddev = 0.0;
  std::vector<double> seed_means;
};

inline RunConfig pilot_config(const RunConfig& base, int study) {
  RunConfig c = base;
  auto& w = c.trainer.world;
  w.n_agents = 5;
  w.n_goals = 5;
  w.scenario = study == 1 ? Scenario::pilot_study_1 : Scenario::pilot_study_2;
  finalize(c);
  detail::validate(c);
  return c;
}

// Per-repetition pilot proportions for a set of trained policies.
inline std::vector<double> pilot_repetitions(std::span<const AgentNets> agents, const WorldConfig& world,
                                             std::size_t reps, std::uint64_t seed,
                                             EvalPolicy how = EvalPolicy::greedy) {
  std::vector<double> props;
  Rng rng(seed ^ 0x9110u);
  for (std::size_t k = 0; k < reps; ++k) props.push_back(*evaluate(agents, world, 1, rng.next_u64(), how).pilot_proportion);
  return props;
}

inline std::vector<PilotSummary> cmd_pilot(const RunConfig& base, int study, const std::string& dir,
                                           std::ostream& log = std::cout) {
  if (study != 1 && study != 2) throw std::invalid_argument("pilot: study must be 1 or 2");
  const RunConfig cfg = pilot_config(base, study);
  ensure_dir(dir);
  std::vector<PilotSummary> out;
  std::string csv = csv_line({"method", "study", "mean", "std"});
  for (Method m : {Method::dcir, Method::sparse}) {
    RunConfig c = cfg;
    c.trainer.method = m;
    const auto sub = (fs::path(dir) / ("pilot" + std::to_string(study)) / to_string(m)).string();
    const auto trained = cmd_train(c, c.n_seeds, sub, log);
    PilotSummary s{to_string(m), study, 0.0, 0.0, {}};
    std::vector<double> all;
    for (const auto& r : trained.runs) {
      const auto props = pilot_repetitions(r.state.agents, c.trainer.world, c.pilot_reps, r.seed);
      double sm = 0.0;
      for (double p : props) sm += p;
      s.seed_means.push_back(sm / static_cast<double>(props.size()));
      all.insert(all.end(), props.begin(), props.end());
    }
    for (double p : all) s.mean += p;
    s.mean /= static_cast<double>(all.size());
    for (double p : all) s.stddev += (p - s.mean) * (p - s.mean);
    s.stddev = std::sqrt(s.stddev / static_cast<double>(all.size()));
    csv += csv_line({s.method, std::to_string(study), csv_real(s.mean), csv_real(s.stddev)});
    log << s.method << " study " << study << ": " << csv_real(s.mean) << " +/- " << csv_real(s.stddev) << "\n";
    out.push_back(std::move(s));
  }
  log << "published reference (DCIR): " << (study == 1 ? "0.88 +/- 0.08" : "0.97 +/- 0.02") << "\n";
  write_text_file((fs::path(dir) / ("pilot_study" + std::to_string(study) + ".csv")).string(), csv);
  return out;
}

// Series label: the parent directory for log_seed*.csv files, else the file stem.
inline std::string series_label(const std::string& path) {
  const fs::path p(path);
  const std::string stem = p.stem().string();
  if (stem.rfind("log_seed", 0) == 0 && p.has_parent_path() && !p.parent_path().filename().empty())
    return p.parent_path().filename().string();
  return stem;
}

inline std::string cmd_plot(const std::vector<std::string>& csv_paths, const std::string& out_path) {
  std::map<std::string, std::vector<CsvTable>> groups;
  std::vector<std::string> order;
  for (const auto& p : csv_paths) {
    CsvTable t = read_csv(p);
    t.column("env_steps");
    t.column("mean_return");
    const auto label = series_label(p);
    if (!groups.count(label)) order.push_back(label);
    groups[label].push_back(std::move(t));
  }
  std::vector<Series> series;
  for (const auto& l : order) series.push_back(aggregate_series(l, groups[l]));
  const std::string svg = render_svg(series);
  if (fs::path(out_path).has_parent_path()) ensure_dir(fs::path(out_path).parent_path().string());
  write_text_file(out_path, svg);
  return svg;
}

}  // namespace dcir::harness
