#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <map>

#include "ctrl/replay.hpp"
#include "ctrl/rng.hpp"

using ctrl::ReplayBuffer;
using ctrl::RngStream;
using ctrl::TerminalAnchors;
using ctrl::Transition;
using ctrl::Vec;

namespace {

Transition make_t(long episode, long step, bool last = false,
                  bool timeout = false) {
  Transition t;
  t.s = Vec::Constant(3, static_cast<double>(episode * 1000 + step));
  t.a = Vec::Constant(1, 0.5);
  t.r = static_cast<double>(step);
  t.s_next = Vec::Constant(3, static_cast<double>(episode * 1000 + step + 1));
  t.d = last ? 1.0 : 0.0;
  t.timeout = timeout;
  t.episode_id = episode;
  t.step_in_episode = step;
  return t;
}

void push_episode(ReplayBuffer& buf, long episode, long len,
                  bool timeout_end = false) {
  for (long i = 0; i < len; ++i)
    buf.push(make_t(episode, i, i == len - 1, i == len - 1 && timeout_end));
}

}  // namespace

TEST_CASE("push, size, eviction order", "[replay]") {
  ReplayBuffer buf(5);
  for (long i = 0; i < 8; ++i) buf.push(make_t(0, i));
  REQUIRE(buf.size() == 5);
  REQUIRE(buf.capacity() == 5);
  // oldest three evicted
  REQUIRE(buf.at(0).step_in_episode == 3);
  REQUIRE(buf.at(4).step_in_episode == 7);
}

TEST_CASE("push validates its input", "[replay]") {
  ReplayBuffer buf(10);
  Transition t = make_t(0, 0);
  t.d = 0.5;
  REQUIRE_THROWS_AS(buf.push(t), ctrl::InvalidInput);
  t = make_t(0, 0);
  t.timeout = true;  // timeout with d == 0
  REQUIRE_THROWS_AS(buf.push(t), ctrl::InvalidInput);
  t = make_t(0, 0);
  t.r = std::nan("");
  REQUIRE_THROWS_AS(buf.push(t), ctrl::InvalidInput);
  buf.push(make_t(0, 0));
  Transition wrong = make_t(0, 1);
  wrong.s = Vec::Zero(5);
  REQUIRE_THROWS_AS(buf.push(wrong), ctrl::InvalidInput);
}

TEST_CASE("empty buffer refuses to sample", "[replay]") {
  ReplayBuffer buf(4);
  RngStream r(1);
  REQUIRE_THROWS_AS(buf.sample(1, r), ctrl::EmptyBufferError);
  REQUIRE_THROWS_AS(buf.sample_pairs(1, r), ctrl::EmptyBufferError);
}

TEST_CASE("pairs follow episode order, tail self-pairs", "[replay]") {
  ReplayBuffer buf(100);
  push_episode(buf, 7, 10);  // steps 0..9, 9 terminal
  RngStream r(5);
  auto pairs = buf.sample_pairs(5000, r);
  for (const auto& [a, b] : pairs) {
    if (a.step_in_episode < 9) {
      REQUIRE(b.episode_id == a.episode_id);
      REQUIRE(b.step_in_episode == a.step_in_episode + 1);
    } else {
      REQUIRE(b.episode_id == a.episode_id);
      REQUIRE(b.step_in_episode == a.step_in_episode);
    }
  }
}

TEST_CASE("no pair spans an episode boundary", "[replay]") {
  ReplayBuffer buf(100);
  push_episode(buf, 0, 6);
  push_episode(buf, 1, 6);
  RngStream r(9);
  auto pairs = buf.sample_pairs(10000, r);
  for (const auto& [a, b] : pairs) {
    REQUIRE(a.episode_id == b.episode_id);
    if (a.d == 1.0) REQUIRE(b.step_in_episode == a.step_in_episode);
  }
}

TEST_CASE("the newest transition self-pairs until its successor arrives",
          "[replay]") {
  ReplayBuffer buf(100);
  for (long i = 0; i < 4; ++i) buf.push(make_t(0, i));  // no terminal yet
  RngStream r(11);
  auto pairs = buf.sample_pairs(2000, r);
  for (const auto& [a, b] : pairs) {
    if (a.step_in_episode == 3) {
      REQUIRE(b.step_in_episode == 3);
    } else {
      REQUIRE(b.step_in_episode == a.step_in_episode + 1);
    }
  }
}

TEST_CASE("pair lookup survives ring wraparound", "[replay]") {
  ReplayBuffer buf(6);
  push_episode(buf, 0, 10);  // steps 4..9 remain
  RngStream r(13);
  auto pairs = buf.sample_pairs(3000, r);
  for (const auto& [a, b] : pairs) {
    REQUIRE(a.step_in_episode >= 4);
    if (a.step_in_episode < 9) {
      REQUIRE(b.step_in_episode == a.step_in_episode + 1);
    } else {
      REQUIRE(b.step_in_episode == a.step_in_episode);
    }
  }
}

TEST_CASE("anchor sampling is uniform", "[replay]") {
  ReplayBuffer buf(10);
  for (long i = 0; i < 10; ++i) buf.push(make_t(0, i));
  RngStream r(17);
  std::map<long, long> freq;
  const long n = 100000;
  auto ts = buf.sample(n, r);
  for (const auto& t : ts) ++freq[t.step_in_episode];
  for (const auto& [step, count] : freq) {
    const double f = static_cast<double>(count) / static_cast<double>(n);
    REQUIRE(f == Catch::Approx(0.1).margin(0.01));
  }
}

TEST_CASE("sampling is deterministic in the stream", "[replay]") {
  ReplayBuffer buf(50);
  push_episode(buf, 0, 30);
  RngStream a(21), b(21);
  auto p1 = buf.sample_pairs(64, a);
  auto p2 = buf.sample_pairs(64, b);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    REQUIRE(p1[i].first.step_in_episode == p2[i].first.step_in_episode);
    REQUIRE(p1[i].second.step_in_episode == p2[i].second.step_in_episode);
  }
}

TEST_CASE("excluding terminal anchors leaves only live pairs", "[replay]") {
  ReplayBuffer buf(100);
  push_episode(buf, 0, 5);
  RngStream r(23);
  auto pairs = buf.sample_pairs(2000, r, TerminalAnchors::exclude);
  for (const auto& [a, b] : pairs) {
    REQUIRE(a.d == 0.0);
    REQUIRE(b.step_in_episode == a.step_in_episode + 1);
  }

  ReplayBuffer lonely(4);
  lonely.push(make_t(0, 0, true));  // single terminal: nothing eligible
  REQUIRE_THROWS_AS(lonely.sample_pairs(1, r, TerminalAnchors::exclude),
                    ctrl::EmptyBufferError);
}

TEST_CASE("dump and load round-trip bit for bit", "[replay]") {
  ReplayBuffer buf(64);
  push_episode(buf, 3, 7, true);
  push_episode(buf, 4, 5);
  const std::string path = "replay_roundtrip.bin";
  buf.dump(path);
  ReplayBuffer back = ReplayBuffer::load(path);
  std::remove(path.c_str());

  REQUIRE(back.size() == buf.size());
  REQUIRE(back.capacity() == buf.capacity());
  for (long i = 0; i < buf.size(); ++i) {
    const Transition& x = buf.at(i);
    const Transition& y = back.at(i);
    REQUIRE((x.s - y.s).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((x.a - y.a).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((x.s_next - y.s_next).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(x.r == y.r);
    REQUIRE(x.d == y.d);
    REQUIRE(x.timeout == y.timeout);
    REQUIRE(x.episode_id == y.episode_id);
    REQUIRE(x.step_in_episode == y.step_in_episode);
  }

  // pair bookkeeping still works after reload
  RngStream r(29);
  auto pairs = back.sample_pairs(500, r);
  for (const auto& [a, b] : pairs)
    REQUIRE(a.episode_id == b.episode_id);
}

TEST_CASE("load rejects garbage", "[replay]") {
  const std::string path = "replay_bad.bin";
  {
    std::ofstream f(path, std::ios::binary);
    f << "not a dump at all";
  }
  REQUIRE_THROWS_AS(ReplayBuffer::load(path), ctrl::UsageError);
  std::remove(path.c_str());
}
