#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace esds {

enum class ErrorCode {
  InvalidParams,
  ExtentTooSmall,
  OutOfBounds,
  NoValidSpawn,
  EmptyInput,
  SyntaxError,
  UnknownFunction,
  UnknownFeature,
  DuplicateTerm,
  ValidationFailed,
  NanDetected,
  NonFiniteLoss,
  NoProgramFound,
  RemoteUnreachable,
  AllCandidatesUnparseable,
  AllCandidatesFailed,
  Io,
  Format,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidParams: return "invalid-params";
    case ErrorCode::ExtentTooSmall: return "extent-too-small";
    case ErrorCode::OutOfBounds: return "out-of-bounds";
    case ErrorCode::NoValidSpawn: return "no-valid-spawn";
    case ErrorCode::EmptyInput: return "empty-input";
    case ErrorCode::SyntaxError: return "syntax-error";
    case ErrorCode::UnknownFunction: return "unknown-function";
    case ErrorCode::UnknownFeature: return "unknown-feature";
    case ErrorCode::DuplicateTerm: return "duplicate-term";
    case ErrorCode::ValidationFailed: return "validation-failed";
    case ErrorCode::NanDetected: return "nan-detected";
    case ErrorCode::NonFiniteLoss: return "non-finite-loss";
    case ErrorCode::NoProgramFound: return "no-program-found";
    case ErrorCode::RemoteUnreachable: return "remote-unreachable";
    case ErrorCode::AllCandidatesUnparseable: return "all-candidates-unparseable";
    case ErrorCode::AllCandidatesFailed: return "all-candidates-failed";
    case ErrorCode::Io: return "io";
    case ErrorCode::Format: return "format";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Seeded generator with distribution code pinned here rather than left to the
/// standard library, so sampled values do not depend on the toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// splitmix64 finalizer; combines a base seed with stream indices.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::Io, "short write " + path);
}

/// Fixed-point formatting with a set number of decimals ("%.3f" style).
inline std::string format_fixed(double value, int decimals) {
  if (value == 0.0) value = 0.0;  // drop negative zero
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  std::string s(buf);
  if (s.size() > 1 && s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_roundtrip(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

}  // namespace esds
