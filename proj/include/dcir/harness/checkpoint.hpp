#pragma once

// Plain-text checkpoints. Layout:
//
//   dcir-checkpoint 1
//   config_hash <16 hex digits>
//   seed <n>
//   iteration <n>
//   env_steps <n>
//   begin config
//   ...serialized RunConfig...
//   end config
//   block <name> <count>
//   <one value per line, shortest round-trip decimal>
//   ...
//   counter <name> <n>
//   end
//
// Every double is written with std::to_chars, so load(save(x)) is bit-exact.

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcir/harness/config.hpp"
#include "dcir/metatrain.hpp"

namespace dcir::harness {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::size_t iteration = 0;
  std::size_t env_steps = 0;
  std::string config_text;
  std::map<std::string, Vec> blocks;
  std::map<std::string, std::uint64_t> counters;
};

namespace detail {

inline void put_adam(Checkpoint& ck, const std::string& name, const AdamState& s) {
  ck.blocks[name + ".m"] = s.first_moment;
  ck.blocks[name + ".v"] = s.second_moment;
  ck.counters[name + ".step"] = s.step_count;
}

inline void get_adam(const Checkpoint& ck, const std::string& name, AdamState& s);
inline void get_block(const Checkpoint& ck, const std::string& name, Vec& dst) {
  const auto it = ck.blocks.find(name);
  if (it == ck.blocks.end()) throw IoError("checkpoint: missing block '" + name + "'");
  if (it->second.size() != dst.size())
    throw IoError("checkpoint: block '" + name + "' has " + std::to_string(it->second.size()) + " values, expected " +
                  std::to_string(dst.size()));
  dst = it->second;
}

inline void get_adam(const Checkpoint& ck, const std::string& name, AdamState& s) {
  get_block(ck, name + ".m", s.first_moment);
  get_block(ck, name + ".v", s.second_moment);
  const auto it = ck.counters.find(name + ".step");
  if (it == ck.counters.end()) throw IoError("checkpoint: missing counter '" + name + ".step'");
  s.step_count = it->second;
}

}  // namespace detail

inline Checkpoint make_checkpoint(const RunConfig& cfg, std::uint64_t seed, const TrainerState& st) {
  Checkpoint ck;
  ck.config_hash = config_hash(cfg);
  ck.seed = seed;
  ck.iteration = st.iteration;
  ck.env_steps = st.env_steps;
  RunConfig stored = cfg;
  stored.output_dir.clear();
  ck.config_text = serialize(stored);
  for (std::size_t i = 0; i < st.agents.size(); ++i) {
    const auto p = "agent" + std::to_string(i);
    const auto& a = st.agents[i];
    ck.blocks[p + ".actor"] = a.actor;
    ck.blocks[p + ".q1"] = a.q1;
    ck.blocks[p + ".q2"] = a.q2;
    ck.blocks[p + ".q1_target"] = a.q1_target;
    ck.blocks[p + ".q2_target"] = a.q2_target;
    detail::put_adam(ck, p + ".actor_opt", a.actor_opt);
    detail::put_adam(ck, p + ".q1_opt", a.q1_opt);
    detail::put_adam(ck, p + ".q2_opt", a.q2_opt);
    const auto& al = st.alphas[i];
    if (al.dsn) {
      ck.blocks[p + ".dsn"] = al.dsn->params;
      detail::put_adam(ck, p + ".dsn_opt", al.dsn->opt);
    }
    if (!al.scalars.empty()) {
      ck.blocks[p + ".alpha_scalars"] = al.scalars;
      detail::put_adam(ck, p + ".alpha_scalars_opt", al.scalar_opt);
    }
  }
  ck.blocks["vex"] = st.vex.params;
  detail::put_adam(ck, "vex_opt", st.vex.opt);
  return ck;
}

// Restores network parameters and optimizer state into a freshly created
// trainer for the stored config. Replay contents are not persisted.
inline TrainerState restore_trainer(const Checkpoint& ck, const RunConfig& cfg) {
  TrainerState st = TrainerState::create(cfg.trainer, ck.seed);
  st.iteration = ck.iteration;
  st.env_steps = ck.env_steps;
  for (std::size_t i = 0; i < st.agents.size(); ++i) {
    const auto p = "agent" + std::to_string(i);
    auto& a = st.agents[i];
    detail::get_block(ck, p + ".actor", a.actor);
    detail::get_block(ck, p + ".q1", a.q1);
    detail::get_block(ck, p + ".q2", a.q2);
    detail::get_block(ck, p + ".q1_target", a.q1_target);
    detail::get_block(ck, p + ".q2_target", a.q2_target);
    detail::get_adam(ck, p + ".actor_opt", a.actor_opt);
    detail::get_adam(ck, p + ".q1_opt", a.q1_opt);
    detail::get_adam(ck, p + ".q2_opt", a.q2_opt);
    auto& al = st.alphas[i];
    if (al.dsn) {
      detail::get_block(ck, p + ".dsn", al.dsn->params);
      detail::get_adam(ck, p + ".dsn_opt", al.dsn->opt);
    }
    if (!al.scalars.empty()) {
      detail::get_block(ck, p + ".alpha_scalars", al.scalars);
      detail::get_adam(ck, p + ".alpha_scalars_opt", al.scalar_opt);
    }
  }
  detail::get_block(ck, "vex", st.vex.params);
  detail::get_adam(ck, "vex_opt", st.vex.opt);
  return st;
}

inline std::string checkpoint_to_string(const Checkpoint& ck) {
  std::string out;
  out += "dcir-checkpoint " + std::to_string(kCheckpointVersion) + "\n";
  out += "config_hash " + hash_hex(ck.config_hash) + "\n";
  out += "seed " + std::to_string(ck.seed) + "\n";
  out += "iteration " + std::to_string(ck.iteration) + "\n";
  out += "env_steps " + std::to_string(ck.env_steps) + "\n";
  out += "begin config\n" + ck.config_text;
  if (!ck.config_text.empty() && ck.config_text.back() != '\n') out += "\n";
  out += "end config\n";
  for (const auto& [name, vals] : ck.blocks) {
    out += "block " + name + " " + std::to_string(vals.size()) + "\n";
    for (double v : vals) out += format_double(v) + "\n";
  }
  for (const auto& [name, v] : ck.counters) out += "counter " + name + " " + std::to_string(v) + "\n";
  out += "end\n";
  return out;
}

inline Checkpoint checkpoint_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto next = [&](const char* what) {
    if (!std::getline(in, line)) throw IoError(std::string("checkpoint: truncated before ") + what);
    return line;
  };
  auto field = [&](const std::string& key) {
    const std::string l = next(key.c_str());
    if (l.rfind(key + " ", 0) != 0) throw IoError("checkpoint: expected '" + key + "', got '" + l + "'");
    return l.substr(key.size() + 1);
  };
  Checkpoint ck;
  if (field("dcir-checkpoint") != std::to_string(kCheckpointVersion))
    throw IoError("checkpoint: unsupported version");
  ck.config_hash = std::stoull(field("config_hash"), nullptr, 16);
  ck.seed = std::stoull(field("seed"));
  ck.iteration = std::stoull(field("iteration"));
  ck.env_steps = std::stoull(field("env_steps"));
  if (next("config") != "begin config") throw IoError("checkpoint: expected 'begin config'");
  while (next("end config") != "end config") ck.config_text += line + "\n";
  while (true) {
    const std::string l = next("end");
    if (l == "end") break;
    std::istringstream ls(l);
    std::string kind, name;
    std::uint64_t count = 0;
    ls >> kind >> name >> count;
    if (kind == "counter") {
      ck.counters[name] = count;
    } else if (kind == "block") {
      Vec vals(count);
      for (auto& v : vals) {
        const std::string s = next("block values");
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) throw IoError("checkpoint: bad value '" + s + "'");
      }
      ck.blocks[name] = std::move(vals);
    } else {
      throw IoError("checkpoint: unexpected line '" + l + "'");
    }
  }
  return ck;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw IoError("write failed for '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  write_text_file(path, checkpoint_to_string(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_string(read_text_file(path)); }

}  // namespace dcir::harness
