#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ctrl/agent.hpp"
#include "ctrl/config.hpp"
#include "ctrl/discriminator.hpp"
#include "ctrl/envs.hpp"
#include "ctrl/mixup.hpp"
#include "ctrl/replay.hpp"
#include "ctrl/sac.hpp"
#include "ctrl/serialize.hpp"
#include "ctrl/td3.hpp"
#include "ctrl/temperature.hpp"

namespace ctrl {

inline constexpr const char* kMetricsHeader =
    "step,eval_return_mean,eval_return_std,beta,mean_dtilde,disc_loss,"
    "critic_loss,actor_loss,alpha,wall_ms";

// One evaluation's worth of metrics. NaN fields render as empty CSV cells.
struct MetricsRow {
  long step = 0;
  double eval_return_mean = std::numeric_limits<double>::quiet_NaN();
  double eval_return_std = std::numeric_limits<double>::quiet_NaN();
  double beta = std::numeric_limits<double>::quiet_NaN();
  double mean_dtilde = std::numeric_limits<double>::quiet_NaN();
  double disc_loss = std::numeric_limits<double>::quiet_NaN();
  double critic_loss = std::numeric_limits<double>::quiet_NaN();
  double actor_loss = std::numeric_limits<double>::quiet_NaN();
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = std::numeric_limits<double>::quiet_NaN();

  std::string to_csv() const {
    auto field = [](double v) {
      return std::isnan(v) ? std::string() : kv::format_double(v);
    };
    std::string out = std::to_string(step);
    for (double v : {eval_return_mean, eval_return_std, beta, mean_dtilde,
                     disc_loss, critic_loss, actor_loss, alpha, wall_ms}) {
      out += ',';
      out += field(v);
    }
    return out;
  }
};

inline double discounted_return(const std::vector<double>& rewards,
                                double gamma) {
  require(gamma >= 0.0 && gamma <= 1.0, "discounted_return: bad gamma");
  double acc = 0.0, g = 1.0;
  for (double r : rewards) {
    acc += g * r;
    g *= gamma;
  }
  return acc;
}

struct EvalResult {
  double mean = 0.0;
  double stddev = 0.0;  // population (n divisor): one episode gives 0
};

// Undiscounted returns over full episodes in eval action mode. The stream
// feeds only episode resets; forced_q pins the initial physical state
// instead (test hook).
inline EvalResult evaluate(Agent& agent, const Env& env, long episodes,
                           RngStream& stream,
                           const std::optional<Vec>& forced_q = std::nullopt) {
  require(episodes >= 1, "evaluate: need at least one episode");
  std::vector<double> returns;
  returns.reserve(static_cast<std::size_t>(episodes));
  for (long e = 0; e < episodes; ++e) {
    EnvState st;
    Vec obs;
    if (forced_q.has_value()) {
      st.q = *forced_q;
      obs = env.observe(st);
    } else {
      auto [s0, o0] = env.reset(stream);
      st = std::move(s0);
      obs = std::move(o0);
    }
    double ret = 0.0;
    while (!st.done) {
      const Vec a = agent.select_action(obs, ActionMode::eval, stream);
      StepOut out = env.step(st, a);
      ret += out.reward;
      st = std::move(out.state);
      obs = std::move(out.obs);
    }
    returns.push_back(ret);
  }
  EvalResult r;
  for (double v : returns) r.mean += v;
  r.mean /= static_cast<double>(returns.size());
  double ss = 0.0;
  for (double v : returns) ss += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(ss / static_cast<double>(returns.size()));
  return r;
}

inline std::unique_ptr<Agent> make_agent(const RunConfig& cfg,
                                         const EnvSpec& spec,
                                         RngStream& rng) {
  AgentConfig ac;
  ac.obs_dim = spec.obs_dim;
  ac.act_dim = spec.act_dim;
  ac.act_low = spec.action_low;
  ac.act_high = spec.action_high;
  ac.hidden = cfg.hidden;
  ac.bootstrap_timeouts = cfg.bootstrap_timeouts;
  ac.actor_raw = cfg.actor_raw;
  if (cfg.algo == "sac") return std::make_unique<SacAgent>(ac, rng);
  if (cfg.algo == "td3") return std::make_unique<Td3Agent>(ac, rng);
  throw UsageError("algo: unknown '" + cfg.algo + "'");
}

// The full training loop: environment interaction, buffer population, one
// update per post-warmup step (interpolated batch, agent, dynamics model,
// temperature — in that order), periodic evaluation rows, and a checkpoint
// that restarts the run bit for bit.
class Trainer {
 public:
  explicit Trainer(RunConfig cfg, bool resume = false)
      : cfg_(std::move(cfg)),
        env_(Env::make(cfg_.env)),
        buffer_(cfg_.buffer_capacity),
        env_rng_(RngStream::derive(cfg_.seed, "env")),
        warmup_rng_(RngStream::derive(cfg_.seed, "warmup")),
        agent_rng_(RngStream::derive(cfg_.seed, "agent")),
        replay_rng_(RngStream::derive(cfg_.seed, "replay")),
        eps_rng_(RngStream::derive(cfg_.seed, "eps")),
        disc_rng_(RngStream::derive(cfg_.seed, "disc")),
        eval_rng_(RngStream::derive(cfg_.seed, "eval")),
        start_(std::chrono::steady_clock::now()) {
    cfg_.validate();
    agent_ = make_agent(cfg_, env_.spec(), agent_rng_);
    if (cfg_.ct) {
      // Separate init stream: the baseline path must not construct these,
      // and their absence must not shift any other module's draws.
      disc_.emplace(env_.spec().obs_dim, env_.spec().act_dim, cfg_.hidden,
                    disc_rng_, 3e-4, cfg_.disc_normalize);
      if (!cfg_.beta_fixed && cfg_.ratio == "beta")
        temp_.emplace(cfg_.tolerance);
    }
    std::filesystem::create_directories(cfg_.out_dir);
    if (resume) {
      load_checkpoint();
    } else {
      auto [s0, o0] = env_.reset(env_rng_);
      state_ = std::move(s0);
      obs_ = std::move(o0);
    }
    std::ofstream echo(path("config.txt"));
    if (!echo) throw UsageError("cannot write " + path("config.txt"));
    echo << cfg_.to_text();
  }

  const RunConfig& config() const { return cfg_; }
  const Env& env() const { return env_; }
  Agent& agent() { return *agent_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  long env_steps() const { return env_steps_; }
  long updates() const { return updates_; }
  long episodes_started() const { return episode_id_ + 1; }
  long clipped_actions() const { return clipped_actions_; }
  bool has_discriminator() const { return disc_.has_value(); }
  bool has_temperature() const { return temp_.has_value(); }
  Discriminator& discriminator() { return *disc_; }
  Temperature& temperature() { return *temp_; }
  const std::vector<MetricsRow>& rows() const { return rows_; }

  // Observation point for sequencing tests; called with "construct",
  // "agent", "disc", "beta", "eval" as the corresponding stage begins.
  std::function<void(const char*)> phase_hook;

  // When set, each evaluation prints a one-line progress note to stderr.
  // Timing lives only here: every file artifact must be reproducible from
  // config+seed alone, so physical wall time never reaches disk.
  bool progress = false;

  double current_beta() const {
    if (cfg_.beta_fixed) return *cfg_.beta_fixed;
    if (temp_) return temp_->beta();
    return 1.0;  // uniform-ratio ablation: the sampler ignores it
  }

  // One environment step; after warmup also one full update iteration, and
  // on interval boundaries an evaluation row.
  void step_once() {
    require(env_steps_ < cfg_.total_steps, "step_once: run already complete");
    Vec a;
    if (env_steps_ < cfg_.warmup_steps) {
      a.resize(env_.spec().act_dim);
      for (int i = 0; i < a.size(); ++i)
        a(i) = warmup_rng_.uniform(env_.spec().action_low(i),
                                   env_.spec().action_high(i));
    } else {
      a = agent_->select_action(obs_, ActionMode::explore, agent_rng_);
    }
    StepOut out = env_.step(state_, a);
    if (out.clipped) ++clipped_actions_;

    Transition t;
    t.s = obs_;
    t.a = a;
    t.r = out.reward;
    t.s_next = out.obs;
    t.d = out.done ? 1.0 : 0.0;
    t.timeout = out.timeout;
    t.episode_id = episode_id_;
    t.step_in_episode = step_in_episode_;
    buffer_.push(std::move(t));

    ++env_steps_;
    if (out.done) {
      ++episode_id_;
      step_in_episode_ = 0;
      auto [s0, o0] = env_.reset(env_rng_);
      state_ = std::move(s0);
      obs_ = std::move(o0);
    } else {
      ++step_in_episode_;
      state_ = std::move(out.state);
      obs_ = std::move(out.obs);
    }

    if (env_steps_ > cfg_.warmup_steps) update_once();
    if (env_steps_ % cfg_.eval_interval == 0) write_eval_row();
  }

  // Runs to total_steps; a numeric failure checkpoints before propagating
  // so the run can be inspected or resumed.
  void run() {
    try {
      while (env_steps_ < cfg_.total_steps) step_once();
    } catch (const NumericError&) {
      finalize();
      throw;
    }
    finalize();
  }

  void finalize() {
    write_csv();
    write_checkpoint();
    write_log();
  }

  std::string path(const std::string& name) const {
    return (std::filesystem::path(cfg_.out_dir) / name).string();
  }

 private:
  struct MetricAccum {
    long updates = 0;
    double critic_sum = 0.0;
    long actor_count = 0;
    double actor_sum = 0.0;
    long alpha_count = 0;
    double alpha_sum = 0.0;
    double disc_sum = 0.0;
    double dtilde_sum = 0.0;
  };

  void hook(const char* phase) {
    if (phase_hook) phase_hook(phase);
  }

  void update_once() {
    UpdateStats st;
    if (cfg_.ct) {
      hook("construct");
      auto pairs =
          cfg_.pairing == "random"
              ? buffer_.sample_random_pairs(cfg_.batch, replay_rng_)
              : buffer_.sample_pairs(cfg_.batch, replay_rng_,
                                     cfg_.terminal_anchors == "exclude"
                                         ? TerminalAnchors::exclude
                                         : TerminalAnchors::self_pair);
      const auto cts = make_batch(
          pairs, current_beta(), eps_rng_,
          cfg_.ratio == "uniform" ? RatioKind::uniform : RatioKind::beta,
          cfg_.forced_eps);
      // d-tilde is computed with the pre-update model and reused for both
      // the temperature step and the metrics row.
      const Vec dt = disc_->corrected_batch(
          cts, cfg_.dtilde == "scalar" ? CorrectionKind::scalar_energy
                                       : CorrectionKind::vector_residual);
      const double mean_dtilde = dt.mean();
      const TrainingBatch tb =
          to_batch(cts, cfg_.bootstrap_timeouts, cfg_.actor_raw);
      hook("agent");
      st = agent_->update(tb, agent_rng_);
      hook("disc");
      // The dynamics model trains on the authentic endpoints of the same
      // sampled pairs (self-pairs contribute their transition twice).
      std::vector<Transition> endpoints;
      endpoints.reserve(pairs.size() * 2);
      for (const auto& p : pairs) {
        endpoints.push_back(p.first);
        endpoints.push_back(p.second);
      }
      const double dloss = disc_->train_step(endpoints);
      if (temp_) {
        hook("beta");
        temp_->update_mean(mean_dtilde);
      }
      acc_.disc_sum += dloss;
      acc_.dtilde_sum += mean_dtilde;
    } else {
      const auto ts = buffer_.sample(cfg_.batch, replay_rng_);
      const TrainingBatch tb = to_batch(ts, cfg_.bootstrap_timeouts);
      hook("agent");
      st = agent_->update(tb, agent_rng_);
    }
    ++updates_;
    ++acc_.updates;
    acc_.critic_sum += st.critic_loss;
    if (st.actor_stepped) {
      ++acc_.actor_count;
      acc_.actor_sum += st.actor_loss;
    }
    if (!std::isnan(st.alpha)) {
      ++acc_.alpha_count;
      acc_.alpha_sum += st.alpha;
    }
  }

  void write_eval_row() {
    hook("eval");
    const EvalResult ev =
        evaluate(*agent_, env_, cfg_.eval_episodes, eval_rng_);
    MetricsRow row;
    row.step = env_steps_;
    row.eval_return_mean = ev.mean;
    row.eval_return_std = ev.stddev;
    if (cfg_.ct) {
      if (temp_)
        row.beta = temp_->beta();
      else if (cfg_.beta_fixed)
        row.beta = *cfg_.beta_fixed;
      if (acc_.updates > 0) {
        row.mean_dtilde = acc_.dtilde_sum / static_cast<double>(acc_.updates);
        row.disc_loss = acc_.disc_sum / static_cast<double>(acc_.updates);
      }
    }
    if (acc_.updates > 0)
      row.critic_loss = acc_.critic_sum / static_cast<double>(acc_.updates);
    if (acc_.actor_count > 0)
      row.actor_loss = acc_.actor_sum / static_cast<double>(acc_.actor_count);
    if (acc_.alpha_count > 0)
      row.alpha = acc_.alpha_sum / static_cast<double>(acc_.alpha_count);
    rows_.push_back(row);
    acc_ = MetricAccum{};
    write_csv();
    if (progress) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                        start_)
              .count();
      std::fprintf(stderr, "[%s] step %ld/%ld  return %.1f +- %.1f  (%.1fs)\n",
                   cfg_.out_dir.c_str(), env_steps_, cfg_.total_steps,
                   ev.mean, ev.stddev, secs);
    }
  }

  void write_csv() const {
    const std::string tmp = path("metrics.csv.tmp");
    {
      std::ofstream f(tmp, std::ios::trunc);
      if (!f) throw UsageError("cannot write " + tmp);
      f << kMetricsHeader << "\n";
      for (const MetricsRow& r : rows_) f << r.to_csv() << "\n";
    }
    std::filesystem::rename(tmp, path("metrics.csv"));
  }

  void write_log() const {
    std::ofstream f(path("run.log"), std::ios::trunc);
    if (!f) throw UsageError("cannot write " + path("run.log"));
    f << "steps=" << env_steps_ << "\n"
      << "updates=" << updates_ << "\n"
      << "episodes=" << episode_id_ + (step_in_episode_ > 0 ? 1 : 0) << "\n"
      << "clipped-actions=" << clipped_actions_ << "\n";
  }

  // Checkpoint: everything needed to continue the run bit for bit. The
  // buffer goes to its own sidecar file in the replay dump format; layout
  // details live in docs/formats.md.
  void write_checkpoint() {
    buffer_.dump(path("buffer.ctrb"));
    const std::string tmp = path("checkpoint.ctck.tmp");
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw UsageError("cannot write " + tmp);
      f.write("CTCK", 4);
      bin::write_u32(f, 1);
      const std::string text = cfg_.to_text();
      bin::write_u64(f, text.size());
      bin::write_bytes(f, text.data(), text.size());
      bin::write_i64(f, env_steps_);
      bin::write_i64(f, updates_);
      bin::write_i64(f, episode_id_);
      bin::write_i64(f, step_in_episode_);
      bin::write_i64(f, clipped_actions_);
      bin::write_u8(f, state_.done ? 1 : 0);
      bin::write_i64(f, state_.step_index);
      bin::write_vec(f, state_.q);
      agent_->serialize(f);
      bin::write_u8(f, disc_ ? 1 : 0);
      if (disc_) {
        bin::write_mlp(f, disc_->net());
        bin::write_adam(f, disc_->adam());
        for (RunningMoments* m : {&disc_->x_moments(), &disc_->y_moments()}) {
          bin::write_i64(f, m->count);
          bin::write_vec(f, m->mean);
          bin::write_vec(f, m->m2);
        }
      }
      bin::write_u8(f, temp_ ? 1 : 0);
      if (temp_) {
        bin::write_f64(f, temp_->beta());
        bin::write_scalar_adam(f, temp_->adam());
      }
      for (const RngStream* s : {&env_rng_, &warmup_rng_, &agent_rng_,
                                 &replay_rng_, &eps_rng_, &disc_rng_,
                                 &eval_rng_})
        bin::write_u64(f, s->state());
      bin::write_i64(f, acc_.updates);
      bin::write_f64(f, acc_.critic_sum);
      bin::write_i64(f, acc_.actor_count);
      bin::write_f64(f, acc_.actor_sum);
      bin::write_i64(f, acc_.alpha_count);
      bin::write_f64(f, acc_.alpha_sum);
      bin::write_f64(f, acc_.disc_sum);
      bin::write_f64(f, acc_.dtilde_sum);
      bin::write_u64(f, rows_.size());
      for (const MetricsRow& r : rows_) {
        bin::write_i64(f, r.step);
        for (double v : {r.eval_return_mean, r.eval_return_std, r.beta,
                         r.mean_dtilde, r.disc_loss, r.critic_loss,
                         r.actor_loss, r.alpha, r.wall_ms})
          bin::write_f64(f, v);
      }
      f.write("KCTC", 4);
      if (!f) throw UsageError("checkpoint write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path("checkpoint.ctck"));
  }

  void load_checkpoint() {
    const std::string file = path("checkpoint.ctck");
    std::ifstream f(file, std::ios::binary);
    if (!f) throw UsageError("resume: cannot open " + file);
    char magic[4];
    bin::read_bytes(f, magic, 4);
    if (std::string(magic, 4) != "CTCK")
      throw UsageError("resume: " + file + " is not a run checkpoint");
    if (bin::read_u32(f) != 1)
      throw UsageError("resume: unsupported checkpoint version");
    const std::uint64_t len = bin::read_u64(f);
    std::string text(len, '\0');
    bin::read_bytes(f, text.data(), len);
    check_config_compatible(text);
    env_steps_ = bin::read_i64(f);
    updates_ = bin::read_i64(f);
    episode_id_ = bin::read_i64(f);
    step_in_episode_ = bin::read_i64(f);
    clipped_actions_ = bin::read_i64(f);
    state_.done = bin::read_u8(f) != 0;
    state_.step_index = static_cast<int>(bin::read_i64(f));
    state_.q = bin::read_vec(f);
    obs_ = env_.observe(state_);
    agent_->deserialize(f);
    const bool has_disc = bin::read_u8(f) != 0;
    if (has_disc != disc_.has_value())
      throw UsageError("resume: checkpoint and config disagree on the "
                       "dynamics model");
    if (disc_) {
      disc_->net() = bin::read_mlp(f);
      bin::read_adam(f, disc_->adam());
      for (RunningMoments* m : {&disc_->x_moments(), &disc_->y_moments()}) {
        m->count = bin::read_i64(f);
        m->mean = bin::read_vec(f);
        m->m2 = bin::read_vec(f);
      }
    }
    const bool has_temp = bin::read_u8(f) != 0;
    if (has_temp != temp_.has_value())
      throw UsageError("resume: checkpoint and config disagree on the "
                       "temperature controller");
    if (temp_) {
      temp_->set_beta(bin::read_f64(f));
      bin::read_scalar_adam(f, temp_->adam());
    }
    for (RngStream* s : {&env_rng_, &warmup_rng_, &agent_rng_, &replay_rng_,
                         &eps_rng_, &disc_rng_, &eval_rng_})
      s->set_state(bin::read_u64(f));
    acc_.updates = bin::read_i64(f);
    acc_.critic_sum = bin::read_f64(f);
    acc_.actor_count = bin::read_i64(f);
    acc_.actor_sum = bin::read_f64(f);
    acc_.alpha_count = bin::read_i64(f);
    acc_.alpha_sum = bin::read_f64(f);
    acc_.disc_sum = bin::read_f64(f);
    acc_.dtilde_sum = bin::read_f64(f);
    const std::uint64_t n = bin::read_u64(f);
    rows_.clear();
    rows_.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      MetricsRow r;
      r.step = bin::read_i64(f);
      for (double* v : {&r.eval_return_mean, &r.eval_return_std, &r.beta,
                        &r.mean_dtilde, &r.disc_loss, &r.critic_loss,
                        &r.actor_loss, &r.alpha, &r.wall_ms})
        *v = bin::read_f64(f);
      rows_.push_back(r);
    }
    char tail[4];
    bin::read_bytes(f, tail, 4);
    if (std::string(tail, 4) != "KCTC")
      throw UsageError("resume: truncated checkpoint " + file);
    if (cfg_.total_steps < env_steps_)
      throw UsageError("resume: steps (" + std::to_string(cfg_.total_steps) +
                       ") is below the checkpointed progress (" +
                       std::to_string(env_steps_) + ")");
    buffer_ = ReplayBuffer::load(path("buffer.ctrb"));
  }

  // Identical resolved config except the step budget (a finished run may be
  // extended) and the output directory (it is where the checkpoint lives).
  void check_config_compatible(const std::string& stored_text) const {
    std::vector<std::pair<std::string, std::string>> stored;
    std::stringstream ss(stored_text);
    std::string line;
    while (std::getline(ss, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      stored.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    auto relevant = [](const std::pair<std::string, std::string>& kvp) {
      return kvp.first != "steps" && kvp.first != "out";
    };
    auto current = cfg_.to_kv();
    std::erase_if(stored, [&](const auto& p) { return !relevant(p); });
    std::erase_if(current, [&](const auto& p) { return !relevant(p); });
    if (stored.size() != current.size())
      throw UsageError("resume: config shape differs from the checkpoint");
    for (std::size_t i = 0; i < stored.size(); ++i) {
      if (stored[i] != current[i])
        throw UsageError("resume: config key '" + current[i].first +
                         "' differs from the checkpoint ('" +
                         stored[i].second + "' vs '" + current[i].second +
                         "')");
    }
  }

  RunConfig cfg_;
  Env env_;
  ReplayBuffer buffer_;
  RngStream env_rng_, warmup_rng_, agent_rng_, replay_rng_, eps_rng_,
      disc_rng_, eval_rng_;
  std::unique_ptr<Agent> agent_;
  std::optional<Discriminator> disc_;
  std::optional<Temperature> temp_;

  EnvState state_;
  Vec obs_;
  long env_steps_ = 0;
  long updates_ = 0;
  long episode_id_ = 0;
  long step_in_episode_ = 0;
  long clipped_actions_ = 0;
  MetricAccum acc_;
  std::vector<MetricsRow> rows_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace ctrl
