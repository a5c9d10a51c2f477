// Command-line entry point: `run` trains one configuration, `report`
// aggregates finished runs, `sweep` spawns one run per seed.
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "ctrl/harness.hpp"
#include "ctrl/report.hpp"

namespace {

struct KeyedOption {
  std::string key;
  std::string value;
  CLI::Option* opt = nullptr;
};

// One CLI flag per config key, so flags, config files, and the config echo
// a run writes all share a single vocabulary.
std::vector<KeyedOption>* add_config_flags(CLI::App* cmd) {
  static const std::pair<const char*, const char*> kKeys[] = {
      {"env", "environment: pendulum | reacher | mcar"},
      {"algo", "learner: sac | td3"},
      {"ct", "interpolated-transition training: on | off"},
      {"pairing", "pair sampling: consecutive | random"},
      {"ratio", "mixing-ratio law: beta | uniform"},
      {"beta-fixed", "pin beta in (0,1] and disable the controller"},
      {"tolerance", "target mean corrected distance (controller setpoint)"},
      {"seed", "master seed; every stream derives from it"},
      {"steps", "total environment steps"},
      {"eval-interval", "environment steps between evaluations"},
      {"eval-episodes", "episodes per evaluation"},
      {"warmup", "uniform-random action steps before learning"},
      {"batch", "update batch size"},
      {"buffer", "replay capacity"},
      {"hidden", "comma list of hidden widths shared by all networks"},
      {"out", "output directory"},
      {"dtilde", "distance correction: vector | scalar"},
      {"disc-normalize", "running input/target normalization: on | off"},
      {"actor-raw", "actor consumes authentic anchor states: on | off"},
      {"bootstrap-timeouts", "bootstrap through time-limit ends: on | off"},
      {"terminal-anchors", "episode-final transitions in pairs: self | exclude"},
      {"force-eps", "test hook: pin every mixing ratio to this value"},
  };
  auto* opts = new std::vector<KeyedOption>(std::size(kKeys));
  for (std::size_t i = 0; i < std::size(kKeys); ++i) {
    (*opts)[i].key = kKeys[i].first;
    (*opts)[i].opt = cmd->add_option(std::string("--") + kKeys[i].first,
                                     (*opts)[i].value, kKeys[i].second);
  }
  return opts;
}

// defaults < --profile < --config file < explicit flags.
ctrl::RunConfig resolve_config(const std::string& profile,
                               const std::string& config_file,
                               const std::vector<KeyedOption>& flags) {
  ctrl::RunConfig cfg;
  if (!profile.empty()) ctrl::apply_profile(cfg, profile);
  if (!config_file.empty())
    for (const auto& [k, v] : ctrl::read_kv_file(config_file))
      cfg.apply(k, v);
  for (const KeyedOption& f : flags)
    if (f.opt->count() > 0) cfg.apply(f.key, f.value);
  cfg.validate();
  return cfg;
}

int run_child(const std::vector<std::string>& argv_strings) {
  std::vector<char*> argv;
  argv.reserve(argv_strings.size() + 1);
  for (const std::string& s : argv_strings)
    argv.push_back(const_cast<char*>(s.c_str()));
  argv.push_back(nullptr);
  const pid_t pid = fork();
  if (pid < 0) {
    std::perror("fork");
    return 1;
  }
  if (pid == 0) {
    execv("/proc/self/exe", argv.data());
    std::perror("execv");
    _exit(127);
  }
  int status = 0;
  if (waitpid(pid, &status, 0) < 0) {
    std::perror("waitpid");
    return 1;
  }
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return 1;
}

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(
    const std::string& spec) {
  const auto dots = spec.find("..");
  if (dots == std::string::npos) {
    const std::uint64_t s = ctrl::kv::parse_u64("seeds", spec);
    return {s, s};
  }
  const std::uint64_t a =
      ctrl::kv::parse_u64("seeds", spec.substr(0, dots));
  const std::uint64_t b =
      ctrl::kv::parse_u64("seeds", spec.substr(dots + 2));
  if (b < a) throw ctrl::UsageError("seeds: range '" + spec + "' is reversed");
  if (b - a > 9999) throw ctrl::UsageError("seeds: range is implausibly wide");
  return {a, b};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continuous-transition training harness"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "train one configuration");
  auto* run_flags = add_config_flags(run_cmd);
  std::string run_profile, run_config_file;
  bool resume = false, quiet = false;
  run_cmd->add_option("--profile", run_profile,
                      "scale preset applied before other flags: desk | paper");
  run_cmd->add_option("--config", run_config_file,
                      "key=value file applied before explicit flags");
  run_cmd->add_flag("--resume", resume,
                    "continue from the checkpoint in the output directory");
  run_cmd->add_flag("--quiet", quiet, "suppress progress output");

  auto* report_cmd =
      app.add_subcommand("report", "summarize finished run directories");
  std::vector<std::string> report_dirs;
  std::string report_out = "report";
  report_cmd->add_option("dirs", report_dirs, "run directories")
      ->required()
      ->expected(-1);
  report_cmd->add_option("--out", report_out, "report output directory");

  auto* sweep_cmd =
      app.add_subcommand("sweep", "run one seed per process, sequentially");
  auto* sweep_flags = add_config_flags(sweep_cmd);
  std::string sweep_profile, sweep_config_file, seeds_spec = "0..3";
  sweep_cmd->add_option("--profile", sweep_profile,
                        "scale preset applied before other flags");
  sweep_cmd->add_option("--config", sweep_config_file,
                        "key=value file applied before explicit flags");
  sweep_cmd->add_option("--seeds", seeds_spec,
                        "inclusive seed range, e.g. 0..3");

  try {
    app.parse(argc, argv);

    if (run_cmd->parsed()) {
      const ctrl::RunConfig cfg =
          resolve_config(run_profile, run_config_file, *run_flags);
      ctrl::Trainer trainer(cfg, resume);
      trainer.progress = !quiet;
      trainer.run();
      std::printf("run complete: %ld steps, %ld updates -> %s\n",
                  trainer.env_steps(), trainer.updates(),
                  trainer.path("metrics.csv").c_str());
      if (!trainer.rows().empty())
        std::printf("final eval return: %s +- %s\n",
                    ctrl::kv::format_double(
                        trainer.rows().back().eval_return_mean)
                        .c_str(),
                    ctrl::kv::format_double(
                        trainer.rows().back().eval_return_std)
                        .c_str());
      return 0;
    }

    if (report_cmd->parsed()) {
      ctrl::write_report(report_dirs, report_out);
      std::printf("report written to %s\n", report_out.c_str());
      return 0;
    }

    if (sweep_cmd->parsed()) {
      const ctrl::RunConfig base =
          resolve_config(sweep_profile, sweep_config_file, *sweep_flags);
      const auto [lo, hi] = parse_seed_range(seeds_spec);
      const std::string base_out =
          sweep_cmd->count("--out") || !sweep_config_file.empty()
              ? base.out_dir
              : std::string("sweep");
      int worst = 0;
      for (std::uint64_t s = lo; s <= hi; ++s) {
        std::vector<std::string> child = {argv[0], "run"};
        for (const auto& [k, v] : base.to_kv()) {
          if (k == "seed" || k == "out") continue;
          child.push_back("--" + k);
          child.push_back(v);
        }
        child.push_back("--seed");
        child.push_back(std::to_string(s));
        child.push_back("--out");
        child.push_back(base_out + "/seed" + std::to_string(s));
        const int code = run_child(child);
        std::printf("seed %llu: %s\n", static_cast<unsigned long long>(s),
                    code == 0 ? "ok" : "FAILED");
        if (code != 0 && worst == 0) worst = code;
      }
      return worst;
    }

    return 2;  // unreachable: a subcommand is required
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ctrl::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ctrl::NumericError& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
