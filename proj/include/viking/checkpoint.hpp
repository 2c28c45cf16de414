/// \file checkpoint.hpp
/// \brief Versioned posterior checkpoint container.
///
/// Layout (little-endian):
///   bytes 0-7   magic "VIKCKPT\0"
///   u32         format version (currently 1)
///   u64         model spec hash (ModelSpec::hash of the trained model)
///   u64         rng seed the run was started with
///   f64         log alpha
///   f64         log sigma_im
///   u64         D, parameter count
///   f64 * D     theta_hat

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "viking/core.hpp"
#include "viking/posterior.hpp"

namespace viking {

struct Checkpoint {
  std::uint64_t model_hash = 0;
  std::uint64_t seed = 0;
  Posterior posterior;
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'V', 'I', 'K', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  write_bytes(out, b, 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  write_bytes(out, b, 8);
}

inline void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(out, bits);
}

inline void read_bytes(std::istream& in, void* p, std::size_t n, const std::string& what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint: truncated file while reading " + what);
}

inline std::uint32_t read_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  read_bytes(in, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& in, const std::string& what) {
  unsigned char b[8];
  read_bytes(in, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

inline double read_f64(std::istream& in, const std::string& what) {
  const std::uint64_t bits = read_u64(in, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  detail::write_bytes(out, detail::kCheckpointMagic, 8);
  detail::write_u32(out, detail::kCheckpointVersion);
  detail::write_u64(out, ck.model_hash);
  detail::write_u64(out, ck.seed);
  detail::write_f64(out, ck.posterior.log_alpha);
  detail::write_f64(out, ck.posterior.log_sigma_im);
  detail::write_u64(out, ck.posterior.theta_hat.size());
  for (double v : ck.posterior.theta_hat) detail::write_f64(out, v);
  if (!out) throw std::runtime_error("checkpoint: write failure on " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  detail::read_bytes(in, magic, 8, "magic");
  if (std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint32_t version = detail::read_u32(in, "version");
  if (version != detail::kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ck;
  ck.model_hash = detail::read_u64(in, "model hash");
  ck.seed = detail::read_u64(in, "seed");
  ck.posterior.log_alpha = detail::read_f64(in, "log alpha");
  ck.posterior.log_sigma_im = detail::read_f64(in, "log sigma_im");
  const std::uint64_t dim = detail::read_u64(in, "parameter count");
  ck.posterior.theta_hat.resize(dim);
  for (std::uint64_t i = 0; i < dim; ++i)
    ck.posterior.theta_hat[i] = detail::read_f64(in, "theta");
  return ck;
}

}  // namespace viking
