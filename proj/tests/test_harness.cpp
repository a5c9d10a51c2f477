#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <ctrl/harness.hpp>
#include <ctrl/report.hpp>

namespace fs = std::filesystem;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("ctrl_harness_" + tag);
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

ctrl::RunConfig tiny_cfg(const std::string& out) {
  ctrl::RunConfig cfg;
  cfg.total_steps = 400;
  cfg.warmup_steps = 200;
  cfg.eval_interval = 200;
  cfg.eval_episodes = 1;
  cfg.batch = 16;
  cfg.hidden = {8};
  cfg.seed = 11;
  cfg.out_dir = out;
  return cfg;
}

std::string agent_bytes(ctrl::Agent& a) {
  std::ostringstream ss(std::ios::binary);
  a.serialize(ss);
  return ss.str();
}

// Stands perfectly still; pairs with the forced-start hook to make
// evaluation returns pure arithmetic.
struct NullAgent final : ctrl::Agent {
  ctrl::AgentConfig cfg;
  explicit NullAgent(const ctrl::EnvSpec& spec) {
    cfg.obs_dim = spec.obs_dim;
    cfg.act_dim = spec.act_dim;
    cfg.act_low = spec.action_low;
    cfg.act_high = spec.action_high;
  }
  const ctrl::AgentConfig& config() const override { return cfg; }
  ctrl::Vec select_action(const ctrl::Vec&, ctrl::ActionMode,
                          ctrl::RngStream&) override {
    return ctrl::Vec::Zero(cfg.act_dim);
  }
  ctrl::UpdateStats update(const ctrl::TrainingBatch&,
                           ctrl::RngStream&) override {
    throw ctrl::InvalidInput("null agent does not learn");
  }
  void serialize(std::ostream&) override {}
  void deserialize(std::istream&) override {}
};

}  // namespace

TEST_CASE("metrics header is pinned", "[harness]") {
  REQUIRE(std::string(ctrl::kMetricsHeader) ==
          "step,eval_return_mean,eval_return_std,beta,mean_dtilde,disc_loss,"
          "critic_loss,actor_loss,alpha,wall_ms");
}

TEST_CASE("a short run produces every artifact with the right shape",
          "[harness]") {
  const std::string out = fresh_dir("shape");
  auto cfg = tiny_cfg(out);
  ctrl::Trainer t(cfg);
  t.run();

  REQUIRE(t.env_steps() == 400);
  REQUIRE(t.updates() == 200);
  REQUIRE(t.buffer().size() == 400);
  REQUIRE(t.rows().size() == 2);
  REQUIRE(t.rows()[0].step == 200);
  REQUIRE(t.rows()[1].step == 400);
  for (const char* name :
       {"metrics.csv", "config.txt", "run.log", "checkpoint.ctck",
        "buffer.ctrb"})
    REQUIRE(fs::exists(fs::path(out) / name));

  std::ifstream csv(t.path("metrics.csv"));
  std::string line;
  REQUIRE(std::getline(csv, line));
  REQUIRE(line == ctrl::kMetricsHeader);
  long rows = 0;
  while (std::getline(csv, line)) ++rows;
  REQUIRE(rows == 2);

  // First evaluation happens before any update: only beta is known.
  const ctrl::MetricsRow& r0 = t.rows()[0];
  REQUIRE(r0.beta == 1.0);
  REQUIRE(std::isnan(r0.critic_loss));
  REQUIRE(std::isnan(r0.mean_dtilde));
  REQUIRE(std::isnan(r0.disc_loss));
  const ctrl::MetricsRow& r1 = t.rows()[1];
  REQUIRE(std::isfinite(r1.eval_return_mean));
  REQUIRE(std::isfinite(r1.critic_loss));
  REQUIRE(r1.mean_dtilde >= 0.0);
  REQUIRE(std::isfinite(r1.disc_loss));
  REQUIRE(r1.alpha > 0.0);
  REQUIRE(r1.beta > 0.0);
  REQUIRE(r1.beta <= 1.0);
  REQUIRE(std::isnan(r1.wall_ms));  // timing never reaches the artifacts

  // The config echo round-trips through the flat key=value format.
  ctrl::RunConfig echo;
  for (const auto& [k, v] : ctrl::read_kv_file(t.path("config.txt")))
    echo.apply(k, v);
  REQUIRE(echo.to_text() == cfg.to_text());
}

TEST_CASE("the baseline path leaves interpolation columns empty",
          "[harness]") {
  const std::string out = fresh_dir("baseline_cols");
  auto cfg = tiny_cfg(out);
  cfg.ct = false;
  ctrl::Trainer t(cfg);
  t.run();
  REQUIRE(t.rows().size() == 2);
  for (const ctrl::MetricsRow& r : t.rows()) {
    REQUIRE(std::isnan(r.beta));
    REQUIRE(std::isnan(r.mean_dtilde));
    REQUIRE(std::isnan(r.disc_loss));
  }
  REQUIRE(std::isfinite(t.rows()[1].critic_loss));
  REQUIRE(t.rows()[1].alpha > 0.0);
}

TEST_CASE("the baseline path allocates no interpolation machinery",
          "[harness]") {
  auto cfg = tiny_cfg(fresh_dir("alloc"));
  cfg.total_steps = 10;
  cfg.warmup_steps = 5;
  cfg.eval_interval = 10;

  cfg.ct = false;
  ctrl::Trainer off(cfg);
  REQUIRE_FALSE(off.has_discriminator());
  REQUIRE_FALSE(off.has_temperature());

  cfg.ct = true;
  ctrl::Trainer on(cfg);
  REQUIRE(on.has_discriminator());
  REQUIRE(on.has_temperature());

  cfg.beta_fixed = 0.4;
  ctrl::Trainer pinned(cfg);
  REQUIRE(pinned.has_discriminator());
  REQUIRE_FALSE(pinned.has_temperature());
  REQUIRE(pinned.current_beta() == 0.4);

  cfg.beta_fixed.reset();
  cfg.ratio = "uniform";
  ctrl::Trainer uniform(cfg);
  REQUIRE(uniform.has_discriminator());
  REQUIRE_FALSE(uniform.has_temperature());
}

TEST_CASE("updates fire once per environment step after warmup",
          "[harness]") {
  auto cfg = tiny_cfg(fresh_dir("accounting"));
  cfg.total_steps = 50;
  cfg.warmup_steps = 20;
  cfg.eval_interval = 50;
  cfg.batch = 8;
  ctrl::Trainer t(cfg);
  t.run();
  REQUIRE(t.env_steps() == 50);
  REQUIRE(t.updates() == 30);
  REQUIRE(t.buffer().size() == 50);
}

TEST_CASE("episode bookkeeping rolls over at the time limit", "[harness]") {
  auto cfg = tiny_cfg(fresh_dir("episodes"));
  cfg.total_steps = 450;
  cfg.warmup_steps = 450;  // pure interaction, no updates
  cfg.eval_interval = 450;
  ctrl::Trainer t(cfg);
  t.run();

  const ctrl::Transition& last_of_first = t.buffer().at(199);
  REQUIRE(last_of_first.episode_id == 0);
  REQUIRE(last_of_first.step_in_episode == 199);
  REQUIRE(last_of_first.d == 1.0);
  REQUIRE(last_of_first.timeout);

  const ctrl::Transition& first_of_second = t.buffer().at(200);
  REQUIRE(first_of_second.episode_id == 1);
  REQUIRE(first_of_second.step_in_episode == 0);
  REQUIRE(first_of_second.d == 0.0);

  const ctrl::Transition& tail = t.buffer().at(449);
  REQUIRE(tail.episode_id == 2);
  REQUIRE(tail.step_in_episode == 49);

  const std::string log = slurp(t.path("run.log"));
  REQUIRE_THAT(log, ContainsSubstring("episodes=3"));
  REQUIRE_THAT(log, ContainsSubstring("steps=450"));
  REQUIRE_THAT(log, ContainsSubstring("updates=0"));
}

TEST_CASE("identical configs give byte-identical artifacts", "[harness]") {
  auto ca = tiny_cfg(fresh_dir("det_a"));
  auto cb = tiny_cfg(fresh_dir("det_b"));
  ctrl::Trainer a(ca), b(cb);
  a.run();
  b.run();
  REQUIRE(slurp(a.path("metrics.csv")) == slurp(b.path("metrics.csv")));
  REQUIRE(slurp(a.path("buffer.ctrb")) == slurp(b.path("buffer.ctrb")));
  REQUIRE(slurp(a.path("run.log")) == slurp(b.path("run.log")));
  REQUIRE(agent_bytes(a.agent()) == agent_bytes(b.agent()));
}

TEST_CASE("evaluation cadence cannot perturb training", "[harness]") {
  auto ca = tiny_cfg(fresh_dir("cadence_a"));
  ca.eval_interval = 100;
  ca.eval_episodes = 5;
  auto cb = tiny_cfg(fresh_dir("cadence_b"));
  cb.eval_interval = 400;
  cb.eval_episodes = 1;
  ctrl::Trainer a(ca), b(cb);
  a.run();
  b.run();
  REQUIRE(a.rows().size() == 4);
  REQUIRE(b.rows().size() == 1);
  REQUIRE(agent_bytes(a.agent()) == agent_bytes(b.agent()));
}

TEST_CASE("forced unit ratio reproduces the baseline bit for bit",
          "[harness]") {
  auto con = tiny_cfg(fresh_dir("wire_ct"));
  con.total_steps = 600;
  con.batch = 32;
  con.hidden = {16, 16};
  con.forced_eps = 1.0;
  auto coff = con;
  coff.out_dir = fresh_dir("wire_base");
  coff.ct = false;
  coff.forced_eps.reset();

  ctrl::Trainer ton(con), toff(coff);
  ton.run();
  toff.run();

  REQUIRE(agent_bytes(ton.agent()) == agent_bytes(toff.agent()));
  REQUIRE(ton.rows().size() == toff.rows().size());
  for (std::size_t i = 0; i < ton.rows().size(); ++i) {
    const auto& x = ton.rows()[i];
    const auto& y = toff.rows()[i];
    REQUIRE(x.step == y.step);
    REQUIRE(x.eval_return_mean == y.eval_return_mean);
    REQUIRE(x.eval_return_std == y.eval_return_std);
    // The pre-update row carries empty loss fields on both sides.
    auto same = [](double a, double b) {
      return (std::isnan(a) && std::isnan(b)) || a == b;
    };
    REQUIRE(same(x.critic_loss, y.critic_loss));
    REQUIRE(same(x.actor_loss, y.actor_loss));
    REQUIRE(same(x.alpha, y.alpha));
  }
}

TEST_CASE("resume reproduces the uninterrupted run bit for bit",
          "[harness]") {
  auto whole = tiny_cfg(fresh_dir("resume_whole"));
  whole.total_steps = 800;
  whole.eval_interval = 200;
  ctrl::Trainer straight(whole);
  straight.run();

  auto part = whole;
  part.out_dir = fresh_dir("resume_part");
  part.total_steps = 400;
  {
    ctrl::Trainer first_half(part);
    first_half.run();
  }
  part.total_steps = 800;
  ctrl::Trainer second_half(part, /*resume=*/true);
  REQUIRE(second_half.env_steps() == 400);
  second_half.run();

  REQUIRE(second_half.env_steps() == 800);
  REQUIRE(slurp(straight.path("metrics.csv")) ==
          slurp(second_half.path("metrics.csv")));
  REQUIRE(slurp(straight.path("buffer.ctrb")) ==
          slurp(second_half.path("buffer.ctrb")));
  REQUIRE(agent_bytes(straight.agent()) == agent_bytes(second_half.agent()));
}

TEST_CASE("resume rejects whatever it cannot honour", "[harness]") {
  auto cfg = tiny_cfg(fresh_dir("resume_guards"));
  cfg.total_steps = 200;
  cfg.warmup_steps = 100;
  {
    ctrl::Trainer t(cfg);
    t.run();
  }

  SECTION("missing checkpoint") {
    auto other = cfg;
    other.out_dir = fresh_dir("resume_missing");
    REQUIRE_THROWS_AS(ctrl::Trainer(other, true), ctrl::UsageError);
  }
  SECTION("diverging config names the key") {
    auto other = cfg;
    other.batch = 64;
    REQUIRE_THROWS_WITH(ctrl::Trainer(other, true),
                        ContainsSubstring("batch"));
  }
  SECTION("shrunken step budget") {
    auto other = cfg;
    other.total_steps = 150;
    other.warmup_steps = 100;
    REQUIRE_THROWS_WITH(ctrl::Trainer(other, true),
                        ContainsSubstring("below the checkpointed"));
  }
  SECTION("foreign file") {
    std::ofstream f(cfg.out_dir + "/checkpoint.ctck",
                    std::ios::binary | std::ios::trunc);
    f << "definitely not a checkpoint";
    f.close();
    REQUIRE_THROWS_WITH(ctrl::Trainer(cfg, true),
                        ContainsSubstring("not a run checkpoint"));
  }
  SECTION("truncated file") {
    const std::string bytes = slurp(cfg.out_dir + "/checkpoint.ctck");
    std::ofstream f(cfg.out_dir + "/checkpoint.ctck",
                    std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<long>(bytes.size() / 2));
    f.close();
    REQUIRE_THROWS_AS(ctrl::Trainer(cfg, true), ctrl::UsageError);
  }
}

TEST_CASE("a numeric failure checkpoints before propagating", "[harness]") {
  auto cfg = tiny_cfg(fresh_dir("abort"));
  cfg.total_steps = 400;
  cfg.warmup_steps = 100;
  cfg.eval_interval = 100;
  {
    ctrl::Trainer t(cfg);
    long updates_seen = 0;
    t.phase_hook = [&](const char* phase) {
      if (std::string(phase) == "agent" && ++updates_seen == 50)
        throw ctrl::NumericError("test", "injected failure");
    };
    REQUIRE_THROWS_AS(t.run(), ctrl::NumericError);
    REQUIRE(fs::exists(fs::path(cfg.out_dir) / "checkpoint.ctck"));
    REQUIRE(fs::exists(fs::path(cfg.out_dir) / "buffer.ctrb"));
  }
  ctrl::Trainer resumed(cfg, /*resume=*/true);
  resumed.run();
  REQUIRE(resumed.env_steps() == 400);
  REQUIRE(resumed.rows().size() == 4);
}

TEST_CASE("a pinned start turns evaluation into arithmetic", "[harness]") {
  const ctrl::Env env = ctrl::Env::make("pendulum");
  NullAgent null(env.spec());
  ctrl::RngStream stream(99);
  const std::uint64_t before = stream.state();

  ctrl::Vec q(2);
  q << M_PI, 0.0;  // hanging straight down, at rest: nothing ever moves
  const ctrl::EvalResult r = ctrl::evaluate(null, env, 2, stream, q);
  REQUIRE(r.mean == Approx(200.0 * -(M_PI * M_PI)).epsilon(1e-9));
  REQUIRE(r.stddev == 0.0);
  REQUIRE(stream.state() == before);  // forced starts consume no draws

  ctrl::RngStream other(99);
  const ctrl::EvalResult one = ctrl::evaluate(null, env, 1, other);
  REQUIRE(one.stddev == 0.0);

  REQUIRE(ctrl::discounted_return({1.0, 1.0, 1.0}, 0.99) == Approx(2.9701));
  REQUIRE(ctrl::discounted_return({}, 0.5) == 0.0);
  REQUIRE_THROWS_AS(ctrl::discounted_return({1.0}, 1.5), ctrl::InvalidInput);
}

TEST_CASE("update phases follow the prescription", "[harness]") {
  auto cfg = tiny_cfg(fresh_dir("phases"));
  cfg.total_steps = 103;
  cfg.warmup_steps = 100;
  cfg.eval_interval = 103;

  auto collect = [](ctrl::RunConfig c) {
    ctrl::Trainer t(std::move(c));
    std::vector<std::string> phases;
    t.phase_hook = [&](const char* p) { phases.emplace_back(p); };
    t.run();
    return phases;
  };

  SECTION("full interpolation pipeline") {
    const auto phases = collect(cfg);
    const std::vector<std::string> want = {
        "construct", "agent", "disc", "beta", "construct", "agent", "disc",
        "beta",      "construct", "agent", "disc", "beta", "eval"};
    REQUIRE(phases == want);
  }
  SECTION("pinned beta drops only the temperature stage") {
    cfg.beta_fixed = 0.5;
    const auto phases = collect(cfg);
    const std::vector<std::string> want = {
        "construct", "agent", "disc", "construct", "agent", "disc",
        "construct", "agent", "disc", "eval"};
    REQUIRE(phases == want);
  }
  SECTION("baseline touches only the agent") {
    cfg.ct = false;
    const auto phases = collect(cfg);
    const std::vector<std::string> want = {"agent", "agent", "agent", "eval"};
    REQUIRE(phases == want);
  }
}

TEST_CASE("the entropy column belongs to sac alone", "[harness]") {
  auto cfg = tiny_cfg(fresh_dir("td3_row"));
  cfg.algo = "td3";
  cfg.ct = false;
  ctrl::Trainer t(cfg);
  t.run();
  const ctrl::MetricsRow& r = t.rows()[1];
  REQUIRE(std::isfinite(r.critic_loss));
  REQUIRE(std::isfinite(r.actor_loss));  // delay 2 still steps within window
  REQUIRE(std::isnan(r.alpha));
}

TEST_CASE("every environment drives the loop end to end", "[harness]") {
  for (const char* env : {"pendulum", "reacher", "mcar"}) {
    auto cfg = tiny_cfg(fresh_dir(std::string("env_") + env));
    cfg.env = env;
    cfg.total_steps = 300;
    cfg.warmup_steps = 150;
    cfg.eval_interval = 300;
    ctrl::Trainer t(cfg);
    t.run();
    REQUIRE(t.rows().size() == 1);
    REQUIRE(std::isfinite(t.rows()[0].eval_return_mean));
    REQUIRE(std::isfinite(t.rows()[0].critic_loss));
  }
}
