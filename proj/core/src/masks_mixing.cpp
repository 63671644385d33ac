#include "hagan/masks_mixing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hagan/error.hpp"

namespace hagan::mix {
namespace {

namespace F = torch::nn::functional;

std::string shape_str(const torch::Tensor& t) {
  std::ostringstream os;
  os << t.sizes();
  return os.str();
}

void check_mask_shape(const torch::Tensor& values) {
  if (!values.defined() || values.dim() != 4 || values.size(1) != 1) {
    throw InvalidArgument("mask must be (B, 1, H, W), got " +
                          (values.defined() ? shape_str(values) : "undefined"));
  }
}

torch::Tensor area_of(const torch::Tensor& values) {
  const double cells = static_cast<double>(values.size(2) * values.size(3));
  return values.to(torch::kFloat64).sum({1, 2, 3}) / cells;
}

}  // namespace

BinaryMask sample_cut_mask(std::int64_t batch, std::int64_t height,
                           std::int64_t width, RatioBounds bounds, Rng& rng) {
  if (height < 4 || width < 4) {
    throw InvalidArgument("sample_cut_mask: height and width must be >= 4");
  }
  if (batch < 1) throw InvalidArgument("sample_cut_mask: batch must be >= 1");
  if (!(bounds.lo >= 0.0 && bounds.hi <= 1.0 && bounds.lo <= bounds.hi)) {
    throw InvalidArgument("sample_cut_mask: ratio bounds must satisfy 0 <= lo <= hi <= 1");
  }

  auto values = torch::zeros({batch, 1, height, width}, torch::kFloat32);
  auto acc = values.accessor<float, 4>();
  const double cells = static_cast<double>(height * width);
  for (std::int64_t b = 0; b < batch; ++b) {
    const double ratio = rng.uniform(bounds.lo, bounds.hi);
    // Height follows the square-root rule; width absorbs the remainder so the
    // area error stays below one row.
    auto rows = static_cast<std::int64_t>(std::llround(height * std::sqrt(ratio)));
    rows = std::clamp<std::int64_t>(rows, 0, height);
    if (rows == 0 && ratio > 0.0) rows = 1;
    std::int64_t cols = 0;
    if (rows > 0) {
      cols = static_cast<std::int64_t>(std::llround(ratio * cells / static_cast<double>(rows)));
      cols = std::clamp<std::int64_t>(cols, 0, width);
    }
    const auto top = rng.uniform_int(0, height - rows);
    const auto left = rng.uniform_int(0, width - cols);
    for (std::int64_t y = top; y < top + rows; ++y) {
      for (std::int64_t x = left; x < left + cols; ++x) acc[b][0][y][x] = 1.0f;
    }
  }
  return BinaryMask{values, area_of(values)};
}

BinaryMask mask_from_values(const torch::Tensor& values) {
  check_mask_shape(values);
  auto v = values.detach().to(torch::kFloat32).contiguous();
  if (!torch::logical_or(v == 0.0f, v == 1.0f).all().item<bool>()) {
    throw InvalidArgument("mask entries must be exactly 0 or 1");
  }
  return BinaryMask{v, area_of(v)};
}

BinaryMask constant_mask(std::int64_t batch, std::int64_t height,
                         std::int64_t width, bool ones) {
  auto v = ones ? torch::ones({batch, 1, height, width}, torch::kFloat32)
                : torch::zeros({batch, 1, height, width}, torch::kFloat32);
  return BinaryMask{v, area_of(v)};
}

BinaryMask complement(const BinaryMask& mask) {
  auto v = 1.0f - mask.values;
  return BinaryMask{v, area_of(v)};
}

torch::Tensor attnmix_compose(const torch::Tensor& real,
                              const torch::Tensor& fake,
                              const BinaryMask& mask) {
  check_mask_shape(mask.values);
  if (real.dim() != 4 || !real.sizes().equals(fake.sizes())) {
    throw InvalidArgument("attnmix_compose: real " + shape_str(real) +
                          " and fake " + shape_str(fake) + " differ");
  }
  if (mask.values.size(0) != real.size(0) || mask.values.size(2) != real.size(2) ||
      mask.values.size(3) != real.size(3)) {
    throw InvalidArgument("attnmix_compose: mask " + shape_str(mask.values) +
                          " does not cover images " + shape_str(real));
  }
  // where() rather than arithmetic so every output pixel is a bitwise copy.
  return torch::where(mask.values.to(real.device()) > 0.5f, real, fake);
}

SaliencyMap attention_to_saliency(const torch::Tensor& raw_attention,
                                  std::int64_t target_h, std::int64_t target_w) {
  if (!raw_attention.defined() || (raw_attention.dim() != 2 && raw_attention.dim() != 3)) {
    throw InvalidArgument("attention_to_saliency: expected (B, N) or (B, Nq, Nk) attention");
  }
  if (target_h < 1 || target_w < 1) {
    throw InvalidArgument("attention_to_saliency: target size must be positive");
  }
  auto att = raw_attention.detach().to(torch::kFloat64);
  if (att.dim() == 3) att = att.sum(1);

  const auto batch = att.size(0);
  const auto positions = att.size(1);
  const auto side = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(positions))));
  if (side * side != positions) {
    throw InternalError("attention_to_saliency: " + std::to_string(positions) +
                        " key positions do not form a square grid");
  }
  if (!torch::isfinite(att).all().item<bool>() || (att < 0).any().item<bool>()) {
    throw InvalidArgument("attention_to_saliency: attention must be finite and nonnegative");
  }

  auto grid = att.reshape({batch, 1, side, side});
  if (side != target_h || side != target_w) {
    grid = F::interpolate(grid, F::InterpolateFuncOptions()
                                    .size(std::vector<std::int64_t>{target_h, target_w})
                                    .mode(torch::kNearest));
  }
  auto mass = grid.sum({1, 2, 3}, /*keepdim=*/true);
  if ((mass <= 0).any().item<bool>()) {
    throw InvalidArgument("attention_to_saliency: attention has zero mass");
  }
  return SaliencyMap{(grid / mass).to(torch::kFloat32)};
}

torch::Tensor attention_weighted_ratio(const BinaryMask& mask,
                                       const SaliencyMap& saliency) {
  check_mask_shape(mask.values);
  if (!mask.values.sizes().equals(saliency.values.sizes())) {
    throw InvalidArgument("attention_weighted_ratio: mask " + shape_str(mask.values) +
                          " vs saliency " + shape_str(saliency.values));
  }
  auto m = mask.values.to(torch::kFloat64);
  auto a = saliency.values.to(torch::kFloat64);
  auto inside = (m * a).sum({1, 2, 3});
  auto total = (m * a + (1.0 - m) * a).sum({1, 2, 3});
  if ((total <= 0).any().item<bool>()) {
    throw InvalidArgument("attention_weighted_ratio: saliency has zero mass");
  }
  return inside / total;
}

double mix_label(double lambda0, double lambda1, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("mix_label: alpha must be > 0");
  if (!(lambda0 >= 0.0 && lambda0 <= 1.0 && lambda1 >= 0.0 && lambda1 <= 1.0)) {
    throw InvalidArgument("mix_label: ratios must lie in [0, 1]");
  }
  return std::clamp(alpha * (lambda0 + lambda1), 0.0, 1.0);
}

torch::Tensor mix_label(const torch::Tensor& lambda0,
                        const torch::Tensor& lambda1, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("mix_label: alpha must be > 0");
  auto l0 = lambda0.to(torch::kFloat64);
  auto l1 = lambda1.to(torch::kFloat64);
  // Tolerate float round-off at the interval ends.
  constexpr double slack = 1e-9;
  if ((l0 < -slack).any().item<bool>() || (l0 > 1 + slack).any().item<bool>() ||
      (l1 < -slack).any().item<bool>() || (l1 > 1 + slack).any().item<bool>()) {
    throw InvalidArgument("mix_label: ratios must lie in [0, 1]");
  }
  return torch::clamp(alpha * (l0 + l1), 0.0, 1.0);
}

MixLabel allocate_label(const BinaryMask& mask, const SaliencyMap& saliency,
                        double alpha) {
  auto lambda1 = attention_weighted_ratio(mask, saliency);
  return MixLabel{mix_label(mask.area_ratio, lambda1, alpha), mask};
}

torch::Tensor downsample_mask_majority(const torch::Tensor& mask_values,
                                       std::int64_t height, std::int64_t width) {
  check_mask_shape(mask_values);
  const auto h = mask_values.size(2);
  const auto w = mask_values.size(3);
  if (h == height && w == width) return mask_values;
  if (height < 1 || width < 1 || height > h || width > w || h % height != 0 || w % width != 0) {
    throw InvalidArgument("downsample_mask_majority: " + std::to_string(h) + "x" +
                          std::to_string(w) + " is not an integer multiple of " +
                          std::to_string(height) + "x" + std::to_string(width));
  }
  auto frac = F::avg_pool2d(mask_values.to(torch::kFloat32),
                            F::AvgPool2dFuncOptions({h / height, w / width}));
  return (frac >= 0.5f).to(torch::kFloat32);
}

torch::Tensor mix_pixel_targets(const BinaryMask& mask,
                                const torch::Tensor& per_pixel_real,
                                const torch::Tensor& per_pixel_fake) {
  check_mask_shape(mask.values);
  if (per_pixel_real.dim() != 4 || !per_pixel_real.sizes().equals(per_pixel_fake.sizes())) {
    throw InvalidArgument("mix_pixel_targets: pixel maps " + shape_str(per_pixel_real) +
                          " and " + shape_str(per_pixel_fake) + " differ");
  }
  if (per_pixel_real.size(0) != mask.batch() || per_pixel_real.size(1) != 1) {
    throw InvalidArgument("mix_pixel_targets: pixel maps must be (B, 1, Hp, Wp) matching mask batch");
  }
  auto m = downsample_mask_majority(mask.values, per_pixel_real.size(2), per_pixel_real.size(3));
  return torch::where(m.to(per_pixel_real.device()) > 0.5f, per_pixel_real, per_pixel_fake);
}

}  // namespace hagan::mix
