#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ctrl/common.hpp"

namespace ctrl {

namespace kv {

// Shortest decimal string that parses back to exactly the same double.
inline std::string format_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

inline double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || v.empty())
    throw UsageError(key + ": expected a number, got '" + v + "'");
  return out;
}

inline long parse_long(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long out = std::strtol(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || v.empty())
    throw UsageError(key + ": expected an integer, got '" + v + "'");
  return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const unsigned long long out = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || v.empty())
    throw UsageError(key + ": expected an unsigned integer, got '" + v + "'");
  return static_cast<std::uint64_t>(out);
}

inline bool parse_on_off(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw UsageError(key + ": expected on or off, got '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key,
                                       const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(static_cast<int>(parse_long(key, item)));
  if (out.empty()) throw UsageError(key + ": expected a comma list, got '" +
                                    v + "'");
  return out;
}

inline std::string format_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace kv

// Everything one training run needs. Round-trips through flat key=value
// text whose keys equal the CLI flag names, so the config echo a run writes
// can be fed straight back through --config.
struct RunConfig {
  std::string env = "pendulum";          // pendulum | reacher | mcar
  std::string algo = "sac";              // sac | td3
  bool ct = true;                        // interpolated-transition training
  std::string pairing = "consecutive";   // consecutive | random
  std::string ratio = "beta";            // beta | uniform
  std::optional<double> beta_fixed;      // pins beta, disabling the controller
  double tolerance = 0.1;                // target mean corrected distance
  std::uint64_t seed = 0;
  long total_steps = 30000;
  long eval_interval = 1000;
  long eval_episodes = 10;
  long warmup_steps = 1000;              // uniform-random action steps
  long batch = 256;
  long buffer_capacity = 1000000;
  std::vector<int> hidden = {64, 64};    // shared by every network in the run
  std::string out_dir = "run";
  std::string dtilde = "vector";         // vector | scalar correction
  bool disc_normalize = false;
  bool actor_raw = false;                // actor sees authentic anchor states
  bool bootstrap_timeouts = true;
  std::string terminal_anchors = "self"; // self | exclude
  std::optional<double> forced_eps;      // test hook: pins every ratio

  void validate() const {
    auto one_of = [](const std::string& key, const std::string& v,
                     std::initializer_list<const char*> allowed) {
      for (const char* a : allowed)
        if (v == a) return;
      std::string msg = key + ": '" + v + "' is not one of {";
      bool first = true;
      for (const char* a : allowed) {
        if (!first) msg += ", ";
        msg += a;
        first = false;
      }
      throw UsageError(msg + "}");
    };
    one_of("env", env, {"pendulum", "reacher", "mcar"});
    one_of("algo", algo, {"sac", "td3"});
    one_of("pairing", pairing, {"consecutive", "random"});
    one_of("ratio", ratio, {"beta", "uniform"});
    one_of("dtilde", dtilde, {"vector", "scalar"});
    one_of("terminal-anchors", terminal_anchors, {"self", "exclude"});
    if (tolerance <= 0.0) throw UsageError("tolerance: must be positive");
    if (total_steps < 1) throw UsageError("steps: must be positive");
    if (eval_interval < 1) throw UsageError("eval-interval: must be positive");
    if (eval_episodes < 1) throw UsageError("eval-episodes: must be positive");
    if (warmup_steps < 0) throw UsageError("warmup: must be non-negative");
    if (warmup_steps > total_steps)
      throw UsageError("warmup: exceeds total steps");
    if (batch < 1) throw UsageError("batch: must be positive");
    if (buffer_capacity < 1) throw UsageError("buffer: must be positive");
    if (hidden.empty()) throw UsageError("hidden: must list at least one width");
    for (int h : hidden)
      if (h < 1) throw UsageError("hidden: widths must be positive");
    if (out_dir.empty()) throw UsageError("out: must not be empty");
    if (beta_fixed && (*beta_fixed <= 0.0 || *beta_fixed > 1.0))
      throw UsageError("beta-fixed: must lie in (0,1]");
    if (forced_eps && (*forced_eps < 0.0 || *forced_eps > 1.0))
      throw UsageError("force-eps: must lie in [0,1]");
  }

  // Canonical key order; optional hooks are omitted when unset.
  std::vector<std::pair<std::string, std::string>> to_kv() const {
    std::vector<std::pair<std::string, std::string>> out;
    out.emplace_back("env", env);
    out.emplace_back("algo", algo);
    out.emplace_back("ct", ct ? "on" : "off");
    out.emplace_back("pairing", pairing);
    out.emplace_back("ratio", ratio);
    if (beta_fixed)
      out.emplace_back("beta-fixed", kv::format_double(*beta_fixed));
    out.emplace_back("tolerance", kv::format_double(tolerance));
    out.emplace_back("seed", std::to_string(seed));
    out.emplace_back("steps", std::to_string(total_steps));
    out.emplace_back("eval-interval", std::to_string(eval_interval));
    out.emplace_back("eval-episodes", std::to_string(eval_episodes));
    out.emplace_back("warmup", std::to_string(warmup_steps));
    out.emplace_back("batch", std::to_string(batch));
    out.emplace_back("buffer", std::to_string(buffer_capacity));
    out.emplace_back("hidden", kv::format_int_list(hidden));
    out.emplace_back("out", out_dir);
    out.emplace_back("dtilde", dtilde);
    out.emplace_back("disc-normalize", disc_normalize ? "on" : "off");
    out.emplace_back("actor-raw", actor_raw ? "on" : "off");
    out.emplace_back("bootstrap-timeouts", bootstrap_timeouts ? "on" : "off");
    out.emplace_back("terminal-anchors", terminal_anchors);
    if (forced_eps)
      out.emplace_back("force-eps", kv::format_double(*forced_eps));
    return out;
  }

  std::string to_text() const {
    std::string out;
    for (const auto& [k, v] : to_kv()) out += k + "=" + v + "\n";
    return out;
  }

  // Applies one key=value assignment; unknown keys are usage errors.
  void apply(const std::string& key, const std::string& value) {
    if (key == "env") env = value;
    else if (key == "algo") algo = value;
    else if (key == "ct") ct = kv::parse_on_off(key, value);
    else if (key == "pairing") pairing = value;
    else if (key == "ratio") ratio = value;
    else if (key == "beta-fixed") beta_fixed = kv::parse_double(key, value);
    else if (key == "tolerance") tolerance = kv::parse_double(key, value);
    else if (key == "seed") seed = kv::parse_u64(key, value);
    else if (key == "steps") total_steps = kv::parse_long(key, value);
    else if (key == "eval-interval") eval_interval = kv::parse_long(key, value);
    else if (key == "eval-episodes") eval_episodes = kv::parse_long(key, value);
    else if (key == "warmup") warmup_steps = kv::parse_long(key, value);
    else if (key == "batch") batch = kv::parse_long(key, value);
    else if (key == "buffer") buffer_capacity = kv::parse_long(key, value);
    else if (key == "hidden") hidden = kv::parse_int_list(key, value);
    else if (key == "out") out_dir = value;
    else if (key == "dtilde") dtilde = value;
    else if (key == "disc-normalize")
      disc_normalize = kv::parse_on_off(key, value);
    else if (key == "actor-raw") actor_raw = kv::parse_on_off(key, value);
    else if (key == "bootstrap-timeouts")
      bootstrap_timeouts = kv::parse_on_off(key, value);
    else if (key == "terminal-anchors") terminal_anchors = value;
    else if (key == "force-eps") forced_eps = kv::parse_double(key, value);
    else throw UsageError("config: unknown key '" + key + "'");
  }
};

// Scale profiles: desk keeps the CI-friendly defaults; paper restores the
// publication-scale step count and widths.
inline void apply_profile(RunConfig& cfg, const std::string& name) {
  if (name == "desk") {
    cfg.total_steps = 30000;
    cfg.hidden = {64, 64};
  } else if (name == "paper") {
    cfg.total_steps = 200000;
    cfg.hidden = {256, 256};
  } else {
    throw UsageError("profile: '" + name + "' is not one of {desk, paper}");
  }
}

// Flat key=value lines; blank lines and #-comments allowed.
inline std::vector<std::pair<std::string, std::string>> read_kv_file(
    const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("config: cannot open " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  long lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(f, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(lineno) +
                       ": expected key=value");
    out.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return out;
}

}  // namespace ctrl
