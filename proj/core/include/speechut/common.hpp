#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace speechut {

// All recoverable failures are thrown as one of these. The message carries
// the offending names/shapes so callers can report them verbatim.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error { using Error::Error; };       // dimension mismatch
struct VocabError : Error { using Error::Error; };       // token/unit id out of range
struct InputError : Error { using Error::Error; };       // bad user input (too short, missing file, ...)
struct ConfigError : Error { using Error::Error; };      // invalid configuration
struct CheckpointError : Error { using Error::Error; };  // checkpoint container problems
struct NumericError : Error { using Error::Error; };     // NaN/Inf in a forward value, zero-norm guard
struct ContractError : Error { using Error::Error; };    // API misuse (non-scalar backward, ...)

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

// Deterministic RNG. mt19937_64 is fully specified by the standard and the
// value derivations below avoid std::uniform_*_distribution (whose output is
// implementation-defined), so streams replay bit-identically everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // [0, n)
  int64_t uniform_int(int64_t n) {
    if (n <= 0) throw ContractError("Rng::uniform_int: n must be positive");
    return static_cast<int64_t>(static_cast<double>(n) * uniform());
  }

  // standard normal via Box-Muller
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stable sub-stream seeds: hash the tag into the base seed (FNV-1a + splitmix
// finalizer). Used to give each corpus/example/purpose its own stream.
uint64_t derive_seed(uint64_t base, std::string_view tag);
uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index);

inline double logsumexp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double logsumexp3(double a, double b, double c) {
  return logsumexp2(logsumexp2(a, b), c);
}

}  // namespace speechut
