#include "hagan/rng.hpp"

#include <sstream>

#include "hagan/error.hpp"

namespace hagan {

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

double Rng::uniform(double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return lo == hi ? lo : dist(engine_);
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw InvalidArgument("uniform_int: empty range");
  std::uniform_int_distribution<std::int64_t> dist(lo, hi);
  return dist(engine_);
}

double Rng::normal(double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  return dist(engine_);
}

torch::Tensor Rng::uniform_tensor(at::IntArrayRef shape, double lo, double hi) {
  auto out = torch::empty(shape, torch::kFloat32);
  auto* data = out.data_ptr<float>();
  const auto n = out.numel();
  std::uniform_real_distribution<double> dist(lo, hi);
  for (std::int64_t i = 0; i < n; ++i) {
    data[i] = static_cast<float>(dist(engine_));
  }
  return out;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (is.fail()) throw InvalidArgument("Rng::restore: malformed state");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace hagan
