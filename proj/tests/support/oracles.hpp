#pragma once

// Scalar reference implementations used as test oracles. Everything here is
// plain loops over accessors in double precision and deliberately shares no
// code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace oracle {

// M * real + (1 - M) * fake, mask broadcast over channels.
inline torch::Tensor compose(const torch::Tensor& real, const torch::Tensor& fake, const torch::Tensor& mask) {
  auto r = real.to(torch::kFloat64).contiguous();
  auto f = fake.to(torch::kFloat64).contiguous();
  auto m = mask.to(torch::kFloat64).contiguous();
  auto out = torch::empty_like(r);
  auto ra = r.accessor<double, 4>(), fa = f.accessor<double, 4>(), ma = m.accessor<double, 4>();
  auto oa = out.accessor<double, 4>();
  for (int64_t b = 0; b < r.size(0); ++b)
    for (int64_t c = 0; c < r.size(1); ++c)
      for (int64_t y = 0; y < r.size(2); ++y)
        for (int64_t x = 0; x < r.size(3); ++x)
          oa[b][c][y][x] = ma[b][0][y][x] * ra[b][c][y][x] + (1.0 - ma[b][0][y][x]) * fa[b][c][y][x];
  return out;
}

// Block majority: a cell is 1 when at least half of its block is 1.
inline torch::Tensor majority(const torch::Tensor& mask, int64_t h, int64_t w) {
  auto m = mask.to(torch::kFloat64).contiguous();
  auto ma = m.accessor<double, 4>();
  const int64_t sh = m.size(2) / h, sw = m.size(3) / w;
  auto out = torch::zeros({m.size(0), 1, h, w}, torch::kFloat64);
  auto oa = out.accessor<double, 4>();
  for (int64_t b = 0; b < m.size(0); ++b)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        int64_t ones = 0;
        for (int64_t dy = 0; dy < sh; ++dy)
          for (int64_t dx = 0; dx < sw; ++dx) ones += ma[b][0][y * sh + dy][x * sw + dx] > 0.5 ? 1 : 0;
        oa[b][0][y][x] = 2 * ones >= sh * sw ? 1.0 : 0.0;
      }
  return out;
}

inline torch::Tensor pixel_targets(const torch::Tensor& mask, const torch::Tensor& real_map,
                                   const torch::Tensor& fake_map) {
  auto m = majority(mask, real_map.size(2), real_map.size(3));
  return compose(real_map, fake_map, m);
}

// sum(M * A) / sum(A) per image.
inline std::vector<double> weighted_ratio(const torch::Tensor& mask, const torch::Tensor& saliency) {
  auto m = mask.to(torch::kFloat64).contiguous();
  auto a = saliency.to(torch::kFloat64).contiguous();
  auto ma = m.accessor<double, 4>(), aa = a.accessor<double, 4>();
  std::vector<double> out;
  for (int64_t b = 0; b < m.size(0); ++b) {
    double in = 0, tot = 0;
    for (int64_t y = 0; y < m.size(2); ++y)
      for (int64_t x = 0; x < m.size(3); ++x) {
        in += ma[b][0][y][x] * aa[b][0][y][x];
        tot += aa[b][0][y][x];
      }
    out.push_back(in / tot);
  }
  return out;
}

inline double area_ratio(const torch::Tensor& mask, int64_t b) {
  auto m = mask.to(torch::kFloat64).contiguous();
  auto ma = m.accessor<double, 4>();
  double s = 0;
  for (int64_t y = 0; y < m.size(2); ++y)
    for (int64_t x = 0; x < m.size(3); ++x) s += ma[b][0][y][x];
  return s / static_cast<double>(m.size(2) * m.size(3));
}

inline double label(double l0, double l1, double alpha) { return std::clamp(alpha * (l0 + l1), 0.0, 1.0); }

// Frechet distance between two 1-D Gaussians.
inline double frechet_1d(double mu_a, double sigma_a, double mu_b, double sigma_b) {
  return (mu_a - mu_b) * (mu_a - mu_b) + (sigma_a - sigma_b) * (sigma_a - sigma_b);
}

// EMA entry after k updates with constant f, starting from g.
inline double ema_after(double g, double f, double m, int k) { return f + std::pow(1.0 - m, k) * (g - f); }

inline double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
  return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs().max().item<double>();
}

// Random {0,1} mask with one rectangle per image (any size, possibly empty).
inline torch::Tensor random_rect_mask(int64_t batch, int64_t h, int64_t w, std::mt19937_64& gen) {
  auto out = torch::zeros({batch, 1, h, w});
  auto oa = out.accessor<float, 4>();
  for (int64_t b = 0; b < batch; ++b) {
    std::uniform_int_distribution<int64_t> ry(0, h), rx(0, w);
    int64_t y0 = ry(gen), y1 = ry(gen), x0 = rx(gen), x1 = rx(gen);
    if (y0 > y1) std::swap(y0, y1);
    if (x0 > x1) std::swap(x0, x1);
    for (int64_t y = y0; y < y1; ++y)
      for (int64_t x = x0; x < x1; ++x) oa[b][0][y][x] = 1.0f;
  }
  return out;
}

// Random {0,1} mask with independent pixels.
inline torch::Tensor random_bit_mask(int64_t batch, int64_t h, int64_t w, std::mt19937_64& gen) {
  auto out = torch::zeros({batch, 1, h, w});
  auto oa = out.accessor<float, 4>();
  std::bernoulli_distribution coin(0.5);
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) oa[b][0][y][x] = coin(gen) ? 1.0f : 0.0f;
  return out;
}

// Central difference of `loss` with respect to one element of `param`.
inline double central_difference(torch::Tensor param, int64_t flat_index, double eps,
                                 const std::function<double()>& loss) {
  torch::NoGradGuard guard;
  auto flat = param.view(-1);
  const double orig = flat[flat_index].item<double>();
  flat[flat_index].fill_(orig + eps);
  const double up = loss();
  flat[flat_index].fill_(orig - eps);
  const double down = loss();
  flat[flat_index].fill_(orig);
  return (up - down) / (2 * eps);
}

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("hagan_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace oracle
