#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ctrl/common.hpp"
#include "ctrl/rng.hpp"

namespace ctrl {

struct Transition {
  Vec s;
  Vec a;
  double r = 0.0;
  Vec s_next;
  double d = 0.0;     // 0 or 1 for stored transitions
  bool timeout = false;  // d == 1 purely because the step limit was hit
  long episode_id = 0;
  long step_in_episode = 0;
};

enum class TerminalAnchors { self_pair, exclude };

// FIFO ring of transitions with consecutive-pair lookup. Writes are
// chronological, so the successor of slot i (if it is still stored) lives at
// slot i+1 mod capacity; an (episode_id, step_in_episode) check tells a real
// successor from an overwrite or an episode boundary.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(long capacity) : capacity_(capacity) {
    require(capacity >= 1, "replay: capacity must be >= 1");
    storage_.reserve(static_cast<std::size_t>(std::min(capacity, 4096L)));
  }

  long capacity() const { return capacity_; }
  long size() const { return size_; }

  void push(Transition t) {
    require(t.d == 0.0 || t.d == 1.0, "push: d must be 0 or 1");
    require(!(t.timeout && t.d == 0.0), "push: timeout requires d == 1");
    require(std::isfinite(t.r), "push: non-finite reward");
    if (!t.s.allFinite() || !t.a.allFinite() || !t.s_next.allFinite())
      throw InvalidInput("push: non-finite state or action");
    if (size_ > 0) {
      const Transition& first = at(0);
      require(t.s.size() == first.s.size() && t.a.size() == first.a.size(),
              "push: dim mismatch with stored transitions");
    }
    if (size_ < capacity_) {
      storage_.push_back(std::move(t));
      ++size_;
    } else {
      storage_[static_cast<std::size_t>(write_)] = std::move(t);
    }
    write_ = (write_ + 1) % capacity_;
  }

  // i-th stored transition in chronological order, 0 = oldest.
  const Transition& at(long i) const {
    require(i >= 0 && i < size_, "at: index out of range");
    const long slot = (size_ < capacity_) ? i : (write_ + i) % capacity_;
    return storage_[static_cast<std::size_t>(slot)];
  }

  std::vector<Transition> sample(long n, RngStream& rng) const {
    if (size_ == 0) throw EmptyBufferError("sample: buffer is empty");
    require(n >= 1, "sample: n must be >= 1");
    std::vector<Transition> out;
    out.reserve(static_cast<std::size_t>(n));
    for (long k = 0; k < n; ++k)
      out.push_back(slot_ref(draw_slot(rng)));
    return out;
  }

  // Anchor uniform over stored transitions; partner is the stored successor
  // when one exists, otherwise the anchor itself (episode tails and
  // just-written transitions self-pair). Consumes exactly n index draws.
  std::vector<std::pair<Transition, Transition>> sample_pairs(
      long n, RngStream& rng,
      TerminalAnchors mode = TerminalAnchors::self_pair) const {
    if (size_ == 0) throw EmptyBufferError("sample_pairs: buffer is empty");
    require(n >= 1, "sample_pairs: n must be >= 1");
    if (mode == TerminalAnchors::exclude && !any_live_successor())
      throw EmptyBufferError("sample_pairs: no anchor has a successor");
    std::vector<std::pair<Transition, Transition>> out;
    out.reserve(static_cast<std::size_t>(n));
    for (long k = 0; k < n; ++k) {
      long slot = draw_slot(rng);
      if (mode == TerminalAnchors::exclude)
        while (successor_of(slot) < 0) slot = draw_slot(rng);
      const long succ = successor_of(slot);
      const Transition& anchor = slot_ref(slot);
      out.emplace_back(anchor, slot_ref(succ >= 0 ? succ : slot));
    }
    return out;
  }

  // Random pairing ablation: both members drawn independently (2n draws).
  std::vector<std::pair<Transition, Transition>> sample_random_pairs(
      long n, RngStream& rng) const {
    if (size_ == 0)
      throw EmptyBufferError("sample_random_pairs: buffer is empty");
    require(n >= 1, "sample_random_pairs: n must be >= 1");
    std::vector<std::pair<Transition, Transition>> out;
    out.reserve(static_cast<std::size_t>(n));
    for (long k = 0; k < n; ++k) {
      const Transition& a = slot_ref(draw_slot(rng));
      const Transition& b = slot_ref(draw_slot(rng));
      out.emplace_back(a, b);
    }
    return out;
  }

  // Flat little-endian dump: header, then transitions oldest to newest.
  // Layout documented in docs/formats.md.
  void dump(const std::string& path) const {
    static_assert(std::endian::native == std::endian::little,
                  "dump assumes a little-endian host");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw UsageError("dump: cannot open " + path);
    const char magic[4] = {'C', 'T', 'R', 'B'};
    f.write(magic, 4);
    write_u32(f, 1);  // version
    const std::uint32_t obs = size_ ? static_cast<std::uint32_t>(at(0).s.size()) : 0;
    const std::uint32_t act = size_ ? static_cast<std::uint32_t>(at(0).a.size()) : 0;
    write_u32(f, obs);
    write_u32(f, act);
    write_u64(f, static_cast<std::uint64_t>(size_));
    write_u64(f, static_cast<std::uint64_t>(capacity_));
    for (long i = 0; i < size_; ++i) {
      const Transition& t = at(i);
      write_vec(f, t.s);
      write_vec(f, t.a);
      write_f64(f, t.r);
      write_vec(f, t.s_next);
      write_f64(f, t.d);
      const std::uint8_t to = t.timeout ? 1 : 0;
      f.write(reinterpret_cast<const char*>(&to), 1);
      write_i64(f, t.episode_id);
      write_i64(f, t.step_in_episode);
    }
    if (!f) throw UsageError("dump: short write to " + path);
  }

  static ReplayBuffer load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UsageError("load: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::string(magic, 4) != "CTRB")
      throw UsageError("load: " + path + " is not a replay dump");
    const std::uint32_t version = read_u32(f);
    if (version != 1) throw UsageError("load: unsupported version");
    const std::uint32_t obs = read_u32(f);
    const std::uint32_t act = read_u32(f);
    const std::uint64_t count = read_u64(f);
    const std::uint64_t capacity = read_u64(f);
    ReplayBuffer buf(static_cast<long>(capacity));
    for (std::uint64_t i = 0; i < count; ++i) {
      Transition t;
      t.s = read_vec(f, obs);
      t.a = read_vec(f, act);
      t.r = read_f64(f);
      t.s_next = read_vec(f, obs);
      t.d = read_f64(f);
      std::uint8_t to = 0;
      f.read(reinterpret_cast<char*>(&to), 1);
      t.timeout = to != 0;
      t.episode_id = read_i64(f);
      t.step_in_episode = read_i64(f);
      if (!f) throw UsageError("load: truncated file " + path);
      buf.push(std::move(t));
    }
    return buf;
  }

 private:
  long draw_slot(RngStream& rng) const {
    const long i = static_cast<long>(rng.index(static_cast<std::uint64_t>(size_)));
    return (size_ < capacity_) ? i : (write_ + i) % capacity_;
  }

  const Transition& slot_ref(long slot) const {
    return storage_[static_cast<std::size_t>(slot)];
  }

  // Slot of the stored successor of `slot`, or -1.
  long successor_of(long slot) const {
    const long next = (slot + 1) % capacity_;
    if (next >= size_) return -1;  // not yet written (buffer still filling)
    if (size_ == capacity_ && next == write_) return -1;  // newest element
    const Transition& a = slot_ref(slot);
    const Transition& b = slot_ref(next);
    if (a.d != 0.0) return -1;  // episode ended here
    if (b.episode_id != a.episode_id ||
        b.step_in_episode != a.step_in_episode + 1)
      return -1;
    return next;
  }

  bool any_live_successor() const {
    for (long i = 0; i < size_; ++i) {
      const long slot = (size_ < capacity_) ? i : (write_ + i) % capacity_;
      if (successor_of(slot) >= 0) return true;
    }
    return false;
  }

  static void write_u32(std::ostream& f, std::uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  static void write_u64(std::ostream& f, std::uint64_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  static void write_i64(std::ostream& f, std::int64_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  static void write_f64(std::ostream& f, double v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  static void write_vec(std::ostream& f, const Vec& v) {
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * v.size()));
  }
  static std::uint32_t read_u32(std::istream& f) {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  static std::uint64_t read_u64(std::istream& f) {
    std::uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  static std::int64_t read_i64(std::istream& f) {
    std::int64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  static double read_f64(std::istream& f) {
    double v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  static Vec read_vec(std::istream& f, std::uint32_t n) {
    Vec v(n);
    f.read(reinterpret_cast<char*>(v.data()),
           static_cast<std::streamsize>(sizeof(double) * n));
    return v;
  }

  long capacity_;
  std::vector<Transition> storage_;
  long write_ = 0;
  long size_ = 0;
};

}  // namespace ctrl
