#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <torch/torch.h>

namespace hagan {

// Explicit seeded random source. Every stochastic operation takes one of
// these by reference, so a run is reproducible from its seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  double uniform(double lo, double hi);
  /// Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal(double mean, double stddev);

  /// float32 tensor with i.i.d. U[lo, hi] entries.
  torch::Tensor uniform_tensor(at::IntArrayRef shape, double lo, double hi);

  std::mt19937_64& engine() { return engine_; }

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

/// Stateless 64-bit mixer for deriving independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace hagan
