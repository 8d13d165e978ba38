#pragma once

// Run configuration: line-based `key = value`, `#` comments, optional
// `[section]` headers. Keys are unique across sections; a key that appears
// under a section header must belong to that section.

#include <charconv>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dcir/metatrain.hpp"

namespace dcir::harness {

struct ConfigError : std::runtime_error {
  ConfigError(std::size_t line, const std::string& msg)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + msg : msg), line_number(line) {}
  std::size_t line_number;
};

struct RunConfig {
  TrainerConfig trainer;
  std::string preset = "desk";
  std::uint64_t seed = 1;
  std::size_t n_seeds = 5;
  std::size_t total_env_steps = 30000;
  std::size_t eval_every = 5000;
  std::size_t eval_episodes = 20;
  std::string output_dir = "runs";
  std::vector<double> ablate_betas{0.0, 0.05, 0.1, 0.2};
  std::size_t pilot_reps = 200;
  bool hetero = false;
};

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_real(const std::string& v) {
  double x = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(x))
    throw std::invalid_argument("expected a finite real, got '" + v + "'");
  return x;
}

inline std::uint64_t parse_uint(const std::string& v) {
  std::uint64_t x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw std::invalid_argument("expected a nonnegative integer, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("expected true or false, got '" + v + "'");
}

template <class T, class F>
std::vector<T> parse_list(const std::string& v, F conv) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(conv(trim(item)));
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F fmt) {
  std::string s;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) s += ",";
    s += fmt(xs[k]);
  }
  return s;
}

struct Key {
  std::string section;
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline const std::vector<Key>& keys() {
  using S = std::string;
  auto sz = [](const S& v) { return static_cast<std::size_t>(parse_uint(v)); };
  auto szs = [sz](const S& v) { return parse_list<std::size_t>(v, sz); };
  auto szfmt = [](std::size_t x) { return std::to_string(x); };
  auto b2s = [](bool b) { return S(b ? "true" : "false"); };
  static const std::vector<Key> k = {
      // run
      {"run", "seed", [](auto& c) { return std::to_string(c.seed); }, [](auto& c, auto& v) { c.seed = parse_uint(v); }},
      {"run", "n_seeds", [](auto& c) { return std::to_string(c.n_seeds); },
       [sz](auto& c, auto& v) { c.n_seeds = sz(v); }},
      {"run", "total_env_steps", [](auto& c) { return std::to_string(c.total_env_steps); },
       [sz](auto& c, auto& v) { c.total_env_steps = sz(v); }},
      {"run", "eval_every", [](auto& c) { return std::to_string(c.eval_every); },
       [sz](auto& c, auto& v) { c.eval_every = sz(v); }},
      {"run", "eval_episodes", [](auto& c) { return std::to_string(c.eval_episodes); },
       [sz](auto& c, auto& v) { c.eval_episodes = sz(v); }},
      {"run", "output_dir", [](auto& c) { return c.output_dir; }, [](auto& c, auto& v) { c.output_dir = v; }},
      {"run", "ablate_betas",
       [](auto& c) { return join(c.ablate_betas, [](double x) { return format_double(x); }); },
       [](auto& c, auto& v) { c.ablate_betas = parse_list<double>(v, parse_real); }},
      {"run", "pilot_reps", [](auto& c) { return std::to_string(c.pilot_reps); },
       [sz](auto& c, auto& v) { c.pilot_reps = sz(v); }},
      // world
      {"world", "n_agents", [](auto& c) { return std::to_string(c.trainer.world.n_agents); },
       [sz](auto& c, auto& v) { c.trainer.world.n_agents = sz(v); }},
      {"world", "n_goals", [](auto& c) { return std::to_string(c.trainer.world.n_goals); },
       [sz](auto& c, auto& v) { c.trainer.world.n_goals = sz(v); }},
      {"world", "half_width", [](auto& c) { return format_double(c.trainer.world.half_width); },
       [](auto& c, auto& v) { c.trainer.world.half_width = parse_real(v); }},
      {"world", "obs_radius", [](auto& c) { return format_double(c.trainer.world.obs_radius); },
       [](auto& c, auto& v) { c.trainer.world.obs_radius = parse_real(v); }},
      {"world", "dt", [](auto& c) { return format_double(c.trainer.world.dt); },
       [](auto& c, auto& v) { c.trainer.world.dt = parse_real(v); }},
      {"world", "damping", [](auto& c) { return format_double(c.trainer.world.damping); },
       [](auto& c, auto& v) { c.trainer.world.damping = parse_real(v); }},
      {"world", "accel_gain", [](auto& c) { return format_double(c.trainer.world.accel_gain); },
       [](auto& c, auto& v) { c.trainer.world.accel_gain = parse_real(v); }},
      {"world", "max_speed", [](auto& c) { return format_double(c.trainer.world.max_speed); },
       [](auto& c, auto& v) { c.trainer.world.max_speed = parse_real(v); }},
      {"world", "occupy_threshold", [](auto& c) { return format_double(c.trainer.world.occupy_threshold); },
       [](auto& c, auto& v) { c.trainer.world.occupy_threshold = parse_real(v); }},
      {"world", "episode_length", [](auto& c) { return std::to_string(c.trainer.world.episode_length); },
       [sz](auto& c, auto& v) { c.trainer.world.episode_length = sz(v); }},
      {"world", "scenario", [](auto& c) { return S(to_string(c.trainer.world.scenario)); },
       [](auto& c, auto& v) {
         if (v == "standard") c.trainer.world.scenario = Scenario::standard;
         else if (v == "symmetry_breaking") c.trainer.world.scenario = Scenario::symmetry_breaking;
         else if (v == "pilot_study_1") c.trainer.world.scenario = Scenario::pilot_study_1;
         else if (v == "pilot_study_2") c.trainer.world.scenario = Scenario::pilot_study_2;
         else throw std::invalid_argument("unknown scenario '" + v + "'");
       }},
      {"world", "hetero", [b2s](auto& c) { return b2s(c.hetero); }, [](auto& c, auto& v) { c.hetero = parse_bool(v); }},
      {"world", "distance_shaping", [](auto& c) { return format_double(c.trainer.world.distance_shaping); },
       [](auto& c, auto& v) { c.trainer.world.distance_shaping = parse_real(v); }},
      // sac
      {"sac", "gamma", [](auto& c) { return format_double(c.trainer.sac.gamma); },
       [](auto& c, auto& v) { c.trainer.sac.gamma = parse_real(v); }},
      {"sac", "tau", [](auto& c) { return format_double(c.trainer.sac.tau); },
       [](auto& c, auto& v) { c.trainer.sac.tau = parse_real(v); }},
      {"sac", "omega", [](auto& c) { return format_double(c.trainer.sac.omega); },
       [](auto& c, auto& v) { c.trainer.sac.omega = parse_real(v); }},
      {"sac", "learning_rate", [](auto& c) { return format_double(c.trainer.sac.learning_rate); },
       [](auto& c, auto& v) { c.trainer.sac.learning_rate = parse_real(v); }},
      {"sac", "hidden", [szfmt](auto& c) { return join(c.trainer.hidden, szfmt); },
       [szs](auto& c, auto& v) { c.trainer.hidden = szs(v); }},
      // dcir
      {"dcir", "method", [](auto& c) { return S(to_string(c.trainer.method)); },
       [](auto& c, auto& v) {
         if (v == "dcir") c.trainer.method = Method::dcir;
         else if (v == "sparse") c.trainer.method = Method::sparse;
         else throw std::invalid_argument("unknown method '" + v + "'");
       }},
      {"dcir", "beta", [](auto& c) { return format_double(c.trainer.dcir.beta); },
       [](auto& c, auto& v) { c.trainer.dcir.beta = parse_real(v); }},
      {"dcir", "divergence", [](auto& c) { return S(to_string(c.trainer.dcir.divergence.kind)); },
       [](auto& c, auto& v) { c.trainer.dcir.divergence.kind = parse_divergence(v); }},
      {"dcir", "tv_half", [b2s](auto& c) { return b2s(c.trainer.dcir.divergence.tv_half); },
       [](auto& c, auto& v) { c.trainer.dcir.divergence.tv_half = parse_bool(v); }},
      {"dcir", "alpha_mode", [](auto& c) { return S(to_string(c.trainer.dcir.alpha_mode)); },
       [](auto& c, auto& v) { c.trainer.dcir.alpha_mode = parse_alpha_mode(v); }},
      {"dcir", "dsn_hidden", [szfmt](auto& c) { return join(c.trainer.dsn_hidden, szfmt); },
       [szs](auto& c, auto& v) { c.trainer.dsn_hidden = szs(v); }},
      {"dcir", "dsn_tanh", [b2s](auto& c) { return b2s(c.trainer.dsn_tanh); },
       [](auto& c, auto& v) { c.trainer.dsn_tanh = parse_bool(v); }},
      {"dcir", "alpha_learning_rate", [](auto& c) { return format_double(c.trainer.alpha_learning_rate); },
       [](auto& c, auto& v) { c.trainer.alpha_learning_rate = parse_real(v); }},
      // meta
      {"meta", "batch_size", [](auto& c) { return std::to_string(c.trainer.meta.batch_size); },
       [sz](auto& c, auto& v) { c.trainer.meta.batch_size = sz(v); }},
      {"meta", "collect_steps_per_iter", [](auto& c) { return std::to_string(c.trainer.meta.collect_steps_per_iter); },
       [sz](auto& c, auto& v) { c.trainer.meta.collect_steps_per_iter = sz(v); }},
      {"meta", "updates_per_iter", [](auto& c) { return std::to_string(c.trainer.meta.updates_per_iter); },
       [sz](auto& c, auto& v) { c.trainer.meta.updates_per_iter = sz(v); }},
      {"meta", "buffer_capacity", [](auto& c) { return std::to_string(c.trainer.meta.buffer_capacity); },
       [sz](auto& c, auto& v) { c.trainer.meta.buffer_capacity = sz(v); }},
      {"meta", "advantage_gamma", [b2s](auto& c) { return b2s(c.trainer.meta.advantage_gamma); },
       [](auto& c, auto& v) { c.trainer.meta.advantage_gamma = parse_bool(v); }},
      {"meta", "recompute_cross", [b2s](auto& c) { return b2s(c.trainer.meta.recompute_cross); },
       [](auto& c, auto& v) { c.trainer.meta.recompute_cross = parse_bool(v); }},
      {"meta", "importance_clip", [](auto& c) { return format_double(c.trainer.meta.importance_clip); },
       [](auto& c, auto& v) { c.trainer.meta.importance_clip = parse_real(v); }},
      {"meta", "vex_hidden", [szfmt](auto& c) { return join(c.trainer.vex_hidden, szfmt); },
       [szs](auto& c, auto& v) { c.trainer.vex_hidden = szs(v); }},
  };
  return k;
}

inline void validate(const RunConfig& c) {
  auto bad = [](const std::string& m) { throw std::invalid_argument(m); };
  const auto& t = c.trainer;
  if (t.world.n_agents < 2) bad("n_agents must be >= 2");
  t.world.validate();
  if (!(t.sac.gamma >= 0.0 && t.sac.gamma <= 1.0)) bad("gamma must lie in [0,1]");
  if (!(t.sac.tau > 0.0 && t.sac.tau <= 1.0)) bad("tau must lie in (0,1]");
  if (!(t.sac.omega >= 0.0)) bad("omega must be >= 0");
  if (!(t.sac.learning_rate > 0.0)) bad("learning_rate must be > 0");
  if (!(t.alpha_learning_rate > 0.0)) bad("alpha_learning_rate must be > 0");
  if (!(t.dcir.beta >= 0.0)) bad("beta must be >= 0");
  if (t.meta.batch_size == 0 || t.meta.collect_steps_per_iter == 0 || t.meta.updates_per_iter == 0 ||
      t.meta.buffer_capacity == 0)
    bad("batch_size, collect_steps_per_iter, updates_per_iter and buffer_capacity must be positive");
  if (!(t.meta.importance_clip > 0.0)) bad("importance_clip must be > 0");
  if (c.n_seeds == 0 || c.total_env_steps == 0 || c.eval_every == 0 || c.eval_episodes == 0 || c.pilot_reps == 0)
    bad("n_seeds, total_env_steps, eval_every, eval_episodes and pilot_reps must be positive");
  for (auto h : {&t.hidden, &t.dsn_hidden, &t.vex_hidden})
    for (auto s : *h)
      if (s == 0) bad("hidden layer sizes must be positive");
}

}  // namespace detail

inline void apply_preset(RunConfig& c, const std::string& name) {
  RunConfig fresh;
  fresh.output_dir = c.output_dir;
  if (name == "desk") {
    // Defaults as declared.
  } else if (name == "mpe-paper") {
    fresh.trainer.meta.buffer_capacity = 1000000;
    fresh.trainer.meta.batch_size = 1024;
    fresh.trainer.sac.learning_rate = 0.001;
    fresh.trainer.sac.gamma = 0.95;
    fresh.trainer.sac.tau = 0.01;
    fresh.trainer.sac.omega = 0.1;
    fresh.total_env_steps = 100000;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  fresh.preset = name;
  c = fresh;
}

// Fills derived fields (hetero traits) after parsing.
inline void finalize(RunConfig& c) {
  if (c.hetero)
    c.trainer.world.hetero = make_hetero_traits(c.trainer.world.n_agents);
  else
    c.trainer.world.hetero.reset();
}

inline RunConfig parse_config(std::string_view text) {
  struct Line {
    std::size_t number;
    std::string section, key, value;
  };
  std::vector<Line> lines;
  std::string section;
  std::size_t number = 0;
  std::string preset;
  std::size_t preset_line = 0;
  std::stringstream ss{std::string(text)};
  std::string raw;
  static const std::vector<std::string> sections{"run", "world", "sac", "dcir", "meta"};
  while (std::getline(ss, raw)) {
    ++number;
    const auto hash = raw.find('#');
    const std::string body = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError(number, "malformed section header '" + body + "'");
      section = detail::trim(body.substr(1, body.size() - 2));
      if (std::find(sections.begin(), sections.end(), section) == sections.end())
        throw ConfigError(number, "unknown section '" + section + "'");
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(number, "expected 'key = value', got '" + body + "'");
    Line l{number, section, detail::trim(body.substr(0, eq)), detail::trim(body.substr(eq + 1))};
    if (l.key.empty()) throw ConfigError(number, "empty key");
    if (l.key == "preset") {
      if (!section.empty() && section != "run") throw ConfigError(number, "key 'preset' belongs to [run]");
      preset = l.value;
      preset_line = number;
      continue;
    }
    lines.push_back(std::move(l));
  }
  RunConfig c;
  try {
    if (!preset.empty()) apply_preset(c, preset);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(preset_line, e.what());
  }
  const auto& keys = detail::keys();
  std::vector<std::string> seen;
  for (const auto& l : lines) {
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const auto& k) { return k.name == l.key; });
    if (it == keys.end()) throw ConfigError(l.number, "unknown key '" + l.key + "'");
    if (!l.section.empty() && it->section != l.section)
      throw ConfigError(l.number, "key '" + l.key + "' belongs to [" + it->section + "], not [" + l.section + "]");
    if (std::find(seen.begin(), seen.end(), l.key) != seen.end())
      throw ConfigError(l.number, "duplicate key '" + l.key + "'");
    seen.push_back(l.key);
    try {
      it->set(c, l.value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(l.number, "key '" + l.key + "': " + e.what());
    }
  }
  try {
    detail::validate(c);
  } catch (const std::invalid_argument& e) {
    // Point at the line of the offending key when we can tell which one it was.
    std::size_t where = 0;
    const std::string msg = e.what();
    for (const auto& l : lines)
      if (msg.find(l.key) != std::string::npos) {
        where = l.number;
        break;
      }
    throw ConfigError(where, msg);
  }
  finalize(c);
  return c;
}

inline std::string serialize(const RunConfig& c) {
  std::string out = "[run]\npreset = " + c.preset + "\n";
  std::string section = "run";
  for (const auto& k : detail::keys()) {
    if (k.section != section) {
      section = k.section;
      out += "\n[" + section + "]\n";
    }
    out += k.name + " = " + k.get(c) + "\n";
  }
  return out;
}

// FNV-1a over the serialized config, output_dir excluded.
inline std::uint64_t config_hash(const RunConfig& c) {
  RunConfig tmp = c;
  tmp.output_dir.clear();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize(tmp)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline bool operator==(const RunConfig& a, const RunConfig& b) { return serialize(a) == serialize(b); }

}  // namespace dcir::harness
