#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace csim {

// Error taxonomy, mirrored by the CLI exit codes: invalid parameters and
// malformed invocations raise std::invalid_argument (exit 1), broken or
// missing input data raises DataError (exit 2), and solver failures raise
// SolverError (exit 3).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

uint64_t splitmix64(uint64_t& state);

// Derives an independent stream seed from a base seed. Used so that every
// randomized stage of a run draws from its own stream while staying fully
// reproducible from one top-level seed.
uint64_t derive_seed(uint64_t base, uint64_t stream);

// Deterministic RNG. The engine (mt19937_64) is bit-exact across platforms,
// but std::*_distribution is implementation-defined, so the distribution
// transforms are pinned here instead.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(splitmix_init(seed)) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) using the top 53 bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n). Modulo reduction: the bias is far below any
  // tolerance that matters here and the result is reproducible everywhere.
  std::size_t uniform_index(std::size_t n);

  // Standard normal via Box-Muller with a cached spare.
  double gaussian();

 private:
  static std::mt19937_64 splitmix_init(uint64_t seed) {
    uint64_t s = seed;
    return std::mt19937_64(splitmix64(s));
  }

  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Maximum worker threads: the CSIM_THREADS environment variable when set to
// a positive value, otherwise the hardware concurrency. Parallel regions are
// restricted to embarrassingly parallel per-row work so results are identical
// for every thread count.
int max_threads();

// Runs fn(begin, end) over contiguous chunks of [0, count) on up to
// max_threads() threads. fn must not touch state shared across chunks.
void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace csim
