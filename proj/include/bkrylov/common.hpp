#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bkrylov {

/// Configuration / argument errors (bad algebra parameters, mismatched sizes, ...).
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// File / parse errors. Carries the offending line when known.
class InputError : public std::runtime_error {
public:
  explicit InputError(const std::string& what, long line = -1)
      : std::runtime_error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  long line() const { return line_; }

private:
  long line_;
};

/// Numerically singular element; carries the offending pivot magnitude.
class SingularError : public std::runtime_error {
public:
  explicit SingularError(const std::string& what, double pivot)
      : std::runtime_error(what + " (pivot magnitude " + std::to_string(pivot) + ")"),
        pivot_(pivot) {}
  double pivot() const { return pivot_; }

private:
  double pivot_;
};

/// Solver breakdown (singular coefficient without stabilization, stagnation, NaN).
class BreakdownError : public std::runtime_error {
public:
  explicit BreakdownError(const std::string& what, int iteration = -1)
      : std::runtime_error(iteration >= 0 ? what + " at iteration " + std::to_string(iteration)
                                          : what),
        iteration_(iteration) {}
  int iteration() const { return iteration_; }

private:
  int iteration_;
};

/// SPMD discipline violations: deadlock, mismatched collectives, reused futures.
class CommError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// SplitMix64: the fixed counter-based PRNG used for reproducible right-hand sides.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Uniform value in (-1, 1) for counter `ctr` under `seed`.
inline double uniform_pm1(std::uint64_t seed, std::uint64_t ctr) {
  const std::uint64_t z = splitmix64(splitmix64(seed) ^ splitmix64(ctr));
  // 53 mantissa bits -> [0,1), then map to (-1,1)
  const double u = static_cast<double>(z >> 11) * 0x1.0p-53;
  return 2.0 * u - 1.0;
}

}  // namespace bkrylov
