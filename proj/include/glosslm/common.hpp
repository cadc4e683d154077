#pragma once

// Shared primitives: error taxonomy, deterministic RNG, hashing,
// compensated summation.

#include <cstdint>
#include <stdexcept>
#include <string>

namespace glosslm {

// ---------------------------------------------------------------------------
// Errors. Validation-class failures (bad input, bad config) map to CLI exit
// code 2, runtime-class failures (I/O, corruption, numerics) to exit code 1.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// validation class
struct UsageError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct ValidationError : Error { using Error::Error; };
struct SizeError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct IndexError : Error { using Error::Error; };
struct ConflictError : Error { using Error::Error; };

// runtime class
struct IoError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct CorruptionError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct InternalError : Error { using Error::Error; };

int exit_code_for(const std::exception& e);

// ---------------------------------------------------------------------------
// Counter-based RNG. Each draw is a splitmix64 finalizer applied to
// key + counter, so any draw is reproducible from (seed, counter) alone and
// independent streams can be derived by mixing sub-seeds into the key.
// ---------------------------------------------------------------------------

constexpr std::uint64_t kRngGamma = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Derives a child stream seed; mix_seed(s, a) != mix_seed(s, b) for a != b.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(seed + kRngGamma * (stream + 1));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix64(seed + kRngGamma)) {}

  std::uint64_t next_u64() { return mix64(key_ + kRngGamma * ++counter_); }

  // [0, 1) with 24 bits of mantissa, enough for float32 draws.
  float next_unit() {
    return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
  }

  float next_uniform(float lo, float hi) {
    return lo + (hi - lo) * next_unit();
  }

  // Unbiased integer in [0, n). Lemire's multiply-shift with rejection.
  std::uint64_t next_below(std::uint64_t n);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// FNV-1a 64-bit, used for manifest file hashes and parameter seed streams.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xCBF29CE484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

// ---------------------------------------------------------------------------
// Kahan-compensated accumulator for cross-entropy sums.
// ---------------------------------------------------------------------------

struct KahanSum {
  double total = 0.0;
  double carry = 0.0;

  void add(double x) {
    double y = x - carry;
    double t = total + y;
    carry = (t - total) - y;
    total = t;
  }
};

}  // namespace glosslm
