#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string binary() {
  const char* b = std::getenv("CTRL_BIN");
  REQUIRE(b != nullptr);  // ctest exports the tool's location
  return b;
}

int run_cmd(const std::string& args) {
  const std::string cmd = binary() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("ctrl_cli_" + tag);
  fs::remove_all(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const std::string kTinyFlags =
    "--steps 300 --warmup 100 --eval-interval 100 --eval-episodes 1 "
    "--batch 8 --hidden 8 --quiet";

}  // namespace

TEST_CASE("usage problems exit with code two", "[cli]") {
  REQUIRE(run_cmd("") == 2);                          // missing subcommand
  REQUIRE(run_cmd("run --no-such-flag x") == 2);      // unknown flag
  REQUIRE(run_cmd("run --env venus") == 2);           // bad enumeration
  REQUIRE(run_cmd("run --steps -5") == 2);            // invalid count
  REQUIRE(run_cmd("report /nonexistent/dir") == 2);   // unreadable run
  REQUIRE(run_cmd("sweep --seeds 3..1") == 2);        // reversed range
  REQUIRE(run_cmd("--help") == 0);
}

TEST_CASE("a tiny run completes and leaves its artifacts", "[cli]") {
  const std::string out = fresh_dir("run");
  REQUIRE(run_cmd("run " + kTinyFlags + " --out " + out) == 0);
  for (const char* name :
       {"metrics.csv", "config.txt", "run.log", "checkpoint.ctck",
        "buffer.ctrb"})
    REQUIRE(fs::exists(fs::path(out) / name));
}

TEST_CASE("the config echo feeds back through --config", "[cli]") {
  const std::string first = fresh_dir("echo_a");
  const std::string second = fresh_dir("echo_b");
  REQUIRE(run_cmd("run " + kTinyFlags + " --seed 5 --out " + first) == 0);
  // Same resolved config, new output directory: flags override the file.
  REQUIRE(run_cmd("run --config " + first + "/config.txt --quiet --out " +
                  second) == 0);
  REQUIRE(slurp(first + "/metrics.csv") == slurp(second + "/metrics.csv"));
}

TEST_CASE("sweep fans out one directory per seed", "[cli]") {
  const std::string base = fresh_dir("sweep");
  REQUIRE(run_cmd("sweep --steps 200 --warmup 100 --eval-interval 100 "
                  "--eval-episodes 1 --batch 8 --hidden 8 --seeds 4..5 "
                  "--out " + base) == 0);
  REQUIRE(fs::exists(fs::path(base) / "seed4" / "metrics.csv"));
  REQUIRE(fs::exists(fs::path(base) / "seed5" / "metrics.csv"));
  // Each child pinned its own seed in the echo.
  REQUIRE(slurp(base + "/seed4/config.txt").find("seed=4") !=
          std::string::npos);
  REQUIRE(slurp(base + "/seed5/config.txt").find("seed=5") !=
          std::string::npos);

  const std::string rep = fresh_dir("sweep_report");
  REQUIRE(run_cmd("report " + base + "/seed4 " + base + "/seed5 --out " +
                  rep) == 0);
  for (const char* name : {"runs.csv", "summary.csv", "summary.txt"})
    REQUIRE(fs::exists(fs::path(rep) / name));
}

TEST_CASE("profiles preset the scale knobs", "[cli]") {
  const std::string out = fresh_dir("profile");
  // desk profile then explicit overrides shrink it to test size
  REQUIRE(run_cmd("run --profile desk " + kTinyFlags + " --out " + out) == 0);
  REQUIRE(slurp(out + "/config.txt").find("steps=300") != std::string::npos);
  REQUIRE(run_cmd("run --profile nosuch --out " + fresh_dir("badprof")) == 2);
}
