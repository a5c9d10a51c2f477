#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "ctrl/adam.hpp"
#include "ctrl/common.hpp"
#include "ctrl/mlp.hpp"

static_assert(std::endian::native == std::endian::little,
              "serialized formats are little-endian");

namespace ctrl::bin {

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out) throw UsageError("write failed");
}

inline void read_bytes(std::istream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n))
    throw UsageError("read failed: truncated stream");
}

template <class T>
void write_pod(std::ostream& out, T v) {
  write_bytes(out, &v, sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  read_bytes(in, &v, sizeof(T));
  return v;
}

inline void write_f64(std::ostream& o, double v) { write_pod(o, v); }
inline void write_i64(std::ostream& o, std::int64_t v) { write_pod(o, v); }
inline void write_u64(std::ostream& o, std::uint64_t v) { write_pod(o, v); }
inline void write_u32(std::ostream& o, std::uint32_t v) { write_pod(o, v); }
inline void write_u8(std::ostream& o, std::uint8_t v) { write_pod(o, v); }
inline double read_f64(std::istream& i) { return read_pod<double>(i); }
inline std::int64_t read_i64(std::istream& i) {
  return read_pod<std::int64_t>(i);
}
inline std::uint64_t read_u64(std::istream& i) {
  return read_pod<std::uint64_t>(i);
}
inline std::uint32_t read_u32(std::istream& i) {
  return read_pod<std::uint32_t>(i);
}
inline std::uint8_t read_u8(std::istream& i) {
  return read_pod<std::uint8_t>(i);
}

inline void write_vec(std::ostream& out, const Vec& v) {
  write_u64(out, static_cast<std::uint64_t>(v.size()));
  write_bytes(out, v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
}

inline Vec read_vec(std::istream& in) {
  const auto n = read_u64(in);
  if (n > (1ull << 32)) throw UsageError("read failed: absurd vector size");
  Vec v(static_cast<long>(n));
  read_bytes(in, v.data(), sizeof(double) * n);
  return v;
}

inline void write_mat(std::ostream& out, const Mat& m) {
  write_u64(out, static_cast<std::uint64_t>(m.rows()));
  write_u64(out, static_cast<std::uint64_t>(m.cols()));
  write_bytes(out, m.data(),
              sizeof(double) * static_cast<std::size_t>(m.size()));
}

inline Mat read_mat(std::istream& in) {
  const auto rows = read_u64(in);
  const auto cols = read_u64(in);
  if (rows > (1ull << 24) || cols > (1ull << 24))
    throw UsageError("read failed: absurd matrix size");
  Mat m(static_cast<long>(rows), static_cast<long>(cols));
  read_bytes(in, m.data(), sizeof(double) * rows * cols);
  return m;
}

inline void write_mlp(std::ostream& out, const Mlp& net) {
  write_u64(out, net.dims.size());
  for (int d : net.dims) write_u64(out, static_cast<std::uint64_t>(d));
  for (std::size_t l = 0; l < net.w.size(); ++l) {
    write_mat(out, net.w[l]);
    write_vec(out, net.b[l]);
  }
}

inline Mlp read_mlp(std::istream& in) {
  const auto nd = read_u64(in);
  if (nd < 2 || nd > 64) throw UsageError("read failed: bad layer count");
  Mlp net;
  for (std::uint64_t i = 0; i < nd; ++i)
    net.dims.push_back(static_cast<int>(read_u64(in)));
  for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
    net.w.push_back(read_mat(in));
    net.b.push_back(read_vec(in));
  }
  return net;
}

inline void write_adam(std::ostream& out, AdamState& st) {
  write_i64(out, st.raw_step());
  write_u64(out, st.raw_mw().size());
  for (std::size_t l = 0; l < st.raw_mw().size(); ++l) {
    write_mat(out, st.raw_mw()[l]);
    write_mat(out, st.raw_vw()[l]);
    write_vec(out, st.raw_mb()[l]);
    write_vec(out, st.raw_vb()[l]);
  }
}

inline void read_adam(std::istream& in, AdamState& st) {
  st.raw_step() = read_i64(in);
  const auto layers = read_u64(in);
  if (layers != st.raw_mw().size())
    throw UsageError("read failed: optimizer layout mismatch");
  for (std::size_t l = 0; l < layers; ++l) {
    st.raw_mw()[l] = read_mat(in);
    st.raw_vw()[l] = read_mat(in);
    st.raw_mb()[l] = read_vec(in);
    st.raw_vb()[l] = read_vec(in);
  }
}

inline void write_scalar_adam(std::ostream& out, ScalarAdam& st) {
  write_i64(out, st.raw_step());
  write_f64(out, st.raw_m());
  write_f64(out, st.raw_v());
}

inline void read_scalar_adam(std::istream& in, ScalarAdam& st) {
  st.raw_step() = read_i64(in);
  st.raw_m() = read_f64(in);
  st.raw_v() = read_f64(in);
}

}  // namespace ctrl::bin
