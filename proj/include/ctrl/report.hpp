#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "ctrl/config.hpp"
#include "ctrl/harness.hpp"

namespace ctrl {

// A completed run directory: its resolved config plus the parsed metrics
// table. Loading is strict — malformed input names the file and line.
struct RunData {
  std::string dir;
  RunConfig cfg;
  std::vector<MetricsRow> rows;

  const MetricsRow& last() const { return rows.back(); }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_field(const std::string& s, const std::string& where) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  return kv::parse_double(where, s);
}

}  // namespace detail

inline RunData load_run(const std::string& dir) {
  RunData run;
  run.dir = dir;
  const std::string cfg_path =
      (std::filesystem::path(dir) / "config.txt").string();
  for (const auto& [k, v] : read_kv_file(cfg_path)) run.cfg.apply(k, v);
  run.cfg.validate();

  const std::string csv_path =
      (std::filesystem::path(dir) / "metrics.csv").string();
  std::ifstream f(csv_path);
  if (!f) throw UsageError("cannot open " + csv_path);
  std::string line;
  long lineno = 0;
  if (!std::getline(f, line))
    throw UsageError(csv_path + ":1: empty metrics file");
  ++lineno;
  if (line == std::string(kMetricsHeader) + "\r") line.pop_back();
  if (line != kMetricsHeader)
    throw UsageError(csv_path + ":1: unexpected header '" + line + "'");
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = csv_path + ":" + std::to_string(lineno);
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 10)
      throw UsageError(where + ": expected 10 fields, got " +
                       std::to_string(fields.size()));
    MetricsRow r;
    r.step = kv::parse_long(where, fields[0]);
    double* slots[] = {&r.eval_return_mean, &r.eval_return_std, &r.beta,
                       &r.mean_dtilde,      &r.disc_loss,       &r.critic_loss,
                       &r.actor_loss,       &r.alpha,           &r.wall_ms};
    for (int i = 0; i < 9; ++i)
      *slots[i] = detail::parse_field(fields[static_cast<std::size_t>(i) + 1],
                                      where);
    if (std::isnan(r.eval_return_mean))
      throw UsageError(where + ": eval_return_mean is empty");
    if (!run.rows.empty() && r.step <= run.rows.back().step)
      throw UsageError(where + ": step " + std::to_string(r.step) +
                       " does not increase");
    run.rows.push_back(r);
  }
  if (run.rows.empty())
    throw UsageError(csv_path + ": no evaluation rows");
  return run;
}

// Centered moving average of window 5. Only full windows count, so the
// smoothed curve is truncated at the edges: positions without five
// neighbours hold NaN (a spike of 5 in a flat line therefore peaks at 1.0,
// and a constant curve stays exactly constant). Curves shorter than the
// window have no smoothed points at all.
inline std::vector<double> smooth_window5(const std::vector<double>& raw) {
  const long n = static_cast<long>(raw.size());
  std::vector<double> out(raw.size(),
                          std::numeric_limits<double>::quiet_NaN());
  for (long i = 2; i + 2 < n; ++i) {
    double sum = 0.0;
    for (long j = i - 2; j <= i + 2; ++j)
      sum += raw[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = sum / 5.0;
  }
  return out;
}

// Trapezoidal area under (step, value); a single point has no span.
inline double trapezoid_auc(const std::vector<long>& steps,
                            const std::vector<double>& values) {
  require(steps.size() == values.size(), "trapezoid_auc: length mismatch");
  double auc = 0.0;
  for (std::size_t i = 1; i < steps.size(); ++i)
    auc += 0.5 * (values[i] + values[i - 1]) *
           static_cast<double>(steps[i] - steps[i - 1]);
  return auc;
}

struct RunSummary {
  RunData data;
  std::vector<double> smoothed;
  double final_return = 0.0;
  double auc = 0.0;
};

// AUC integrates the smoothed curve over the steps where it is defined; a
// curve too short to smooth falls back to the raw curve so tiny runs still
// report something meaningful.
inline RunSummary summarize_run(RunData run) {
  RunSummary s;
  std::vector<double> raw;
  std::vector<long> steps;
  for (const MetricsRow& r : run.rows) {
    raw.push_back(r.eval_return_mean);
    steps.push_back(r.step);
  }
  s.smoothed = smooth_window5(raw);
  s.final_return = raw.back();
  std::vector<long> xs;
  std::vector<double> ys;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isnan(s.smoothed[i])) {
      xs.push_back(steps[i]);
      ys.push_back(s.smoothed[i]);
    }
  }
  s.auc = xs.empty() ? trapezoid_auc(steps, raw) : trapezoid_auc(xs, ys);
  s.data = std::move(run);
  return s;
}

// Seeds of one configuration belong together: the grouping key is the
// canonical config text minus the keys that distinguish sibling runs.
inline std::string group_key(const RunConfig& cfg) {
  std::string key;
  for (const auto& [k, v] : cfg.to_kv()) {
    if (k == "seed" || k == "out") continue;
    key += k + "=" + v + " ";
  }
  if (!key.empty()) key.pop_back();
  return key;
}

struct GroupSummary {
  std::string key;
  std::vector<const RunSummary*> runs;
  double final_mean = 0.0, final_std = 0.0;
  double auc_mean = 0.0, auc_std = 0.0;
};

namespace detail {

// Mean and sample standard deviation (n-1 divisor; 0 for a single value).
inline std::pair<double, double> mean_sample_std(
    const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

inline std::string sanitize_name(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_')
      c = '_';
  return s.empty() ? std::string("run") : s;
}

}  // namespace detail

// Builds the full report: per-run smoothed curves, a per-run table, and a
// per-configuration mean+-std table (CSV plus plain text).
inline void write_report(const std::vector<std::string>& run_dirs,
                         const std::string& out_dir) {
  require(!run_dirs.empty(), "report: need at least one run directory");
  std::vector<RunSummary> runs;
  runs.reserve(run_dirs.size());
  for (const std::string& d : run_dirs) runs.push_back(summarize_run(load_run(d)));

  std::filesystem::create_directories(out_dir);
  auto out_path = [&](const std::string& name) {
    return (std::filesystem::path(out_dir) / name).string();
  };
  auto open_out = [&](const std::string& name) {
    std::ofstream f(out_path(name), std::ios::trunc);
    if (!f) throw UsageError("cannot write " + out_path(name));
    return f;
  };

  for (std::size_t i = 0; i < runs.size(); ++i) {
    const RunSummary& r = runs[i];
    const std::string base = detail::sanitize_name(
        std::filesystem::path(r.data.dir).filename().string());
    auto f = open_out(std::to_string(i) + "_" + base + "_smoothed.csv");
    f << "step,eval_return_mean,eval_return_mean_smoothed\n";
    for (std::size_t j = 0; j < r.data.rows.size(); ++j)
      f << r.data.rows[j].step << ","
        << kv::format_double(r.data.rows[j].eval_return_mean) << ","
        << (std::isnan(r.smoothed[j]) ? std::string()
                                      : kv::format_double(r.smoothed[j]))
        << "\n";
  }

  {
    auto f = open_out("runs.csv");
    f << "dir,env,algo,ct,pairing,seed,final_return,auc\n";
    for (const RunSummary& r : runs) {
      const RunConfig& c = r.data.cfg;
      f << r.data.dir << "," << c.env << "," << c.algo << ","
        << (c.ct ? "on" : "off") << "," << c.pairing << "," << c.seed << ","
        << kv::format_double(r.final_return) << ","
        << kv::format_double(r.auc) << "\n";
    }
  }

  std::map<std::string, GroupSummary> groups;
  for (const RunSummary& r : runs) {
    const std::string key = group_key(r.data.cfg);
    auto& g = groups[key];
    g.key = key;
    g.runs.push_back(&r);
  }
  for (auto& [key, g] : groups) {
    std::vector<double> finals, aucs;
    for (const RunSummary* r : g.runs) {
      finals.push_back(r->final_return);
      aucs.push_back(r->auc);
    }
    std::tie(g.final_mean, g.final_std) = detail::mean_sample_std(finals);
    std::tie(g.auc_mean, g.auc_std) = detail::mean_sample_std(aucs);
  }

  {
    auto f = open_out("summary.csv");
    f << "env,algo,ct,pairing,runs,final_mean,final_std,auc_mean,auc_std,"
         "config\n";
    for (const auto& [key, g] : groups) {
      const RunConfig& c = g.runs.front()->data.cfg;
      f << c.env << "," << c.algo << "," << (c.ct ? "on" : "off") << ","
        << c.pairing << "," << g.runs.size() << ","
        << kv::format_double(g.final_mean) << ","
        << kv::format_double(g.final_std) << ","
        << kv::format_double(g.auc_mean) << ","
        << kv::format_double(g.auc_std) << ",\"" << key << "\"\n";
    }
  }

  {
    auto f = open_out("summary.txt");
    f << "runs: " << runs.size() << "\n\n";
    for (const auto& [key, g] : groups) {
      const RunConfig& c = g.runs.front()->data.cfg;
      char buf[256];
      std::snprintf(buf, sizeof buf,
                    "%-10s %-4s ct=%-3s pairing=%-11s n=%zu  "
                    "final %.2f +- %.2f  auc %.4g +- %.4g\n",
                    c.env.c_str(), c.algo.c_str(), c.ct ? "on" : "off",
                    c.pairing.c_str(), g.runs.size(), g.final_mean,
                    g.final_std, g.auc_mean, g.auc_std);
      f << buf;
    }
  }
}

}  // namespace ctrl
