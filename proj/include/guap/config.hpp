#pragma once

// Run configuration: dataset, victim training and attack settings, read
// from a JSON file and overridable from the command line.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "guap/artifact.hpp"
#include "guap/errors.hpp"
#include "guap/gcn.hpp"
#include "guap/text_format.hpp"

namespace guap {

struct RunConfig {
  std::string dataset;    // builtin name (cora, citeseer, polblogs) or a free label
  std::string data_dir;   // directory holding nodes.tsv / edges.tsv / features.txt
  bool check_counts = true;  // enforce the builtin descriptor's expected counts
  TrainConfig train;
  AttackHyper attack;
  std::uint64_t seed = 0;
  bool seed_given = false;  // seed came from the config file
  int repeats = 1;
  std::string out_dir = ".";
};

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
  for (const auto& [k, _] : j.items()) {
    bool known = false;
    for (const char* allowed : keys) known = known || k == allowed;
    if (!known) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    detail::reject_unknown(j, {"dataset", "data_dir", "check_counts", "train", "attack", "seed", "repeats", "out_dir"},
                           "config");
    detail::read_opt(j, "dataset", c.dataset);
    detail::read_opt(j, "data_dir", c.data_dir);
    detail::read_opt(j, "check_counts", c.check_counts);
    detail::read_opt(j, "seed", c.seed);
    c.seed_given = j.contains("seed");
    detail::read_opt(j, "repeats", c.repeats);
    detail::read_opt(j, "out_dir", c.out_dir);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      detail::reject_unknown(t, {"hidden", "learning_rate", "weight_decay", "epochs", "seed"}, "config.train");
      detail::read_opt(t, "hidden", c.train.hidden);
      detail::read_opt(t, "learning_rate", c.train.learning_rate);
      detail::read_opt(t, "weight_decay", c.train.weight_decay);
      detail::read_opt(t, "epochs", c.train.epochs);
      detail::read_opt(t, "seed", c.train.seed);
    }
    if (j.contains("attack")) {
      const auto& a = j.at("attack");
      detail::reject_unknown(a,
                             {"max_epoch", "max_iter", "radius", "overshoot", "step", "sample_rate",
                              "binarize_threshold", "patch_fraction", "patch_nodes", "clip", "resume_from_binarized",
                              "projection", "deepfool_point", "deepfool_patch_norm"},
                             "config.attack");
      auto& h = c.attack;
      detail::read_opt(a, "max_epoch", h.max_epoch);
      detail::read_opt(a, "max_iter", h.max_iter);
      detail::read_opt(a, "radius", h.radius);
      detail::read_opt(a, "overshoot", h.overshoot);
      detail::read_opt(a, "step", h.step);
      detail::read_opt(a, "sample_rate", h.sample_rate);
      detail::read_opt(a, "binarize_threshold", h.binarize_threshold);
      detail::read_opt(a, "patch_fraction", h.patch_fraction);
      if (a.contains("patch_nodes")) h.patch_nodes = a.at("patch_nodes").get<Index>();
      detail::read_opt(a, "clip", h.clip);
      detail::read_opt(a, "resume_from_binarized", h.resume_from_binarized);
      if (a.contains("projection")) h.projection = parse_projection(a.at("projection").get<std::string>());
      if (a.contains("deepfool_point"))
        h.deepfool_point = parse_deepfool_point(a.at("deepfool_point").get<std::string>());
      detail::read_opt(a, "deepfool_patch_norm", h.deepfool_patch_norm);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.repeats < 1) throw ConfigError("config: repeats must be at least 1");
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  const std::string content = text::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path, 0, e.what());
  }
  return run_config_from_json(j);
}

/// Flat key/value echo embedded verbatim in reports.
inline std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& c) {
  using text::format_double;
  const auto& t = c.train;
  const auto& h = c.attack;
  return {
      {"dataset", c.dataset},
      {"data_dir", c.data_dir},
      {"seed", std::to_string(c.seed)},
      {"repeats", std::to_string(c.repeats)},
      {"train.hidden", std::to_string(t.hidden)},
      {"train.learning_rate", format_double(t.learning_rate)},
      {"train.weight_decay", format_double(t.weight_decay)},
      {"train.epochs", std::to_string(t.epochs)},
      {"train.seed", std::to_string(t.seed)},
      {"attack.max_epoch", std::to_string(h.max_epoch)},
      {"attack.max_iter", std::to_string(h.max_iter)},
      {"attack.radius", format_double(h.radius)},
      {"attack.overshoot", format_double(h.overshoot)},
      {"attack.step", format_double(h.step)},
      {"attack.sample_rate", format_double(h.sample_rate)},
      {"attack.binarize_threshold", format_double(h.binarize_threshold)},
      {"attack.patch_fraction", format_double(h.patch_fraction)},
      {"attack.patch_nodes", h.patch_nodes ? std::to_string(*h.patch_nodes) : std::string("none")},
      {"attack.clip", h.clip ? "true" : "false"},
      {"attack.resume_from_binarized", h.resume_from_binarized ? "true" : "false"},
      {"attack.projection", to_string(h.projection)},
      {"attack.deepfool_point", to_string(h.deepfool_point)},
      {"attack.deepfool_patch_norm", h.deepfool_patch_norm ? "true" : "false"},
  };
}

/// Seed precedence: command line, then config file, then GUAP_SEED, then 0.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const RunConfig& c) {
  if (flag) return *flag;
  if (c.seed_given) return c.seed;
  if (const char* env = std::getenv("GUAP_SEED")) {
    std::int64_t v;
    if (!text::parse_int(env, v) || v < 0) throw ConfigError(std::string("GUAP_SEED is not a nonnegative integer: ") + env);
    return static_cast<std::uint64_t>(v);
  }
  return 0;
}

}  // namespace guap
