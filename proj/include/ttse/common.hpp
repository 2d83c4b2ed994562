#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace ttse {

// Library-wide error type. `kind` distinguishes validation failures that
// tests and callers need to tell apart.
class Error : public std::runtime_error {
 public:
  enum class Kind {
    validation,   // bad argument values, shape mismatches, range errors
    format,       // malformed files (TSV rows, WAV headers, checkpoints)
    io,           // filesystem failures
    numeric,      // non-finite values detected mid-computation
    contract,     // internal invariant broken (frozen-parameter drift etc.)
  };

  Error(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline void require(bool cond, Error::Kind kind, const std::string& msg) {
  if (!cond) throw Error(kind, msg);
}

using Rng = std::mt19937_64;

// Derives an independent stream from a base seed and a stream index.
// splitmix64 keeps nearby (seed, index) pairs uncorrelated.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace ttse
