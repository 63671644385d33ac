#include "hagan/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hagan/error.hpp"

namespace hagan {
namespace {

namespace F = torch::nn::functional;

torch::Tensor per_sample(const std::vector<double>& values, const torch::Tensor& like) {
  auto t = torch::tensor(values, torch::kFloat64).to(like.dtype());
  return t.view({static_cast<std::int64_t>(values.size()), 1, 1, 1});
}

torch::Tensor brightness(const torch::Tensor& x, const AugPolicy& p, Rng& rng) {
  std::vector<double> shift(static_cast<std::size_t>(x.size(0)));
  for (auto& s : shift) s = rng.uniform(p.brightness_lo, p.brightness_hi);
  return torch::clamp(x + per_sample(shift, x), -1.0, 1.0);
}

torch::Tensor contrast(const torch::Tensor& x, const AugPolicy& p, Rng& rng) {
  std::vector<double> scale(static_cast<std::size_t>(x.size(0)));
  for (auto& s : scale) s = rng.uniform(p.contrast_lo, p.contrast_hi);
  auto mean = x.mean({1, 2, 3}, /*keepdim=*/true);
  return torch::clamp((x - mean) * per_sample(scale, x) + mean, -1.0, 1.0);
}

torch::Tensor translation(const torch::Tensor& x, const AugPolicy& p, Rng& rng) {
  const auto h = x.size(2);
  const auto w = x.size(3);
  const auto max_shift = static_cast<std::int64_t>(std::floor(static_cast<double>(w) * p.translation_ratio));
  if (max_shift == 0) return x;
  // Zero padding, then a per-sample window: out[y][x] = in[y - dy][x - dx].
  auto padded = F::pad(x, F::PadFuncOptions({max_shift, max_shift, max_shift, max_shift}));
  std::vector<torch::Tensor> rows;
  rows.reserve(static_cast<std::size_t>(x.size(0)));
  for (std::int64_t b = 0; b < x.size(0); ++b) {
    const auto dy = rng.uniform_int(-max_shift, max_shift);
    const auto dx = rng.uniform_int(-max_shift, max_shift);
    rows.push_back(padded[b].narrow(1, max_shift - dy, h).narrow(2, max_shift - dx, w));
  }
  return torch::stack(rows);
}

torch::Tensor cutout(const torch::Tensor& x, const AugPolicy& p, Rng& rng) {
  const auto h = x.size(2);
  const auto w = x.size(3);
  const auto side = static_cast<std::int64_t>(std::llround(static_cast<double>(w) * p.cutout_ratio));
  if (side <= 0) return x;
  auto keep = torch::ones({x.size(0), 1, h, w}, torch::kFloat32);
  auto acc = keep.accessor<float, 4>();
  for (std::int64_t b = 0; b < x.size(0); ++b) {
    const auto cy = rng.uniform_int(0, h - 1);
    const auto cx = rng.uniform_int(0, w - 1);
    const auto y0 = std::max<std::int64_t>(0, cy - side / 2);
    const auto x0 = std::max<std::int64_t>(0, cx - side / 2);
    const auto y1 = std::min<std::int64_t>(h, cy - side / 2 + side);
    const auto x1 = std::min<std::int64_t>(w, cx - side / 2 + side);
    for (auto y = y0; y < y1; ++y) {
      for (auto xx = x0; xx < x1; ++xx) acc[b][0][y][xx] = 0.0f;
    }
  }
  return x * keep.to(x.dtype());
}

}  // namespace

AugPolicy AugPolicy::defaults() {
  AugPolicy p;
  p.ops = {AugOp::Brightness, AugOp::Translation, AugOp::Cutout};
  return p;
}

void AugPolicy::validate() const {
  if (!(brightness_lo <= brightness_hi) || !(contrast_lo <= contrast_hi) || contrast_lo < 0.0) {
    throw InvalidArgument("augmentation: invalid brightness/contrast bounds");
  }
  if (!(translation_ratio >= 0.0 && translation_ratio < 0.5)) {
    throw InvalidArgument("augmentation: translation ratio must lie in [0, 0.5)");
  }
  if (!(cutout_ratio >= 0.0 && cutout_ratio <= 1.0)) {
    throw InvalidArgument("augmentation: cutout ratio must lie in [0, 1]");
  }
}

std::string to_string(AugOp op) {
  switch (op) {
    case AugOp::Brightness: return "brightness";
    case AugOp::Contrast: return "contrast";
    case AugOp::Translation: return "translation";
    case AugOp::Cutout: return "cutout";
  }
  return "?";
}

AugOp parse_aug_op(const std::string& name) {
  if (name == "brightness") return AugOp::Brightness;
  if (name == "contrast" || name == "saturation") return AugOp::Contrast;
  if (name == "translation") return AugOp::Translation;
  if (name == "cutout") return AugOp::Cutout;
  throw InvalidArgument("unknown augmentation op '" + name + "'");
}

std::string ops_to_string(const std::vector<AugOp>& ops) {
  if (ops.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (i) out += ',';
    out += to_string(ops[i]);
  }
  return out;
}

std::vector<AugOp> parse_ops(const std::string& text) {
  std::vector<AugOp> ops;
  if (text.empty() || text == "none") return ops;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    ops.push_back(parse_aug_op(item));
  }
  return ops;
}

torch::Tensor diff_augment(const torch::Tensor& images, const AugPolicy& policy, Rng& rng) {
  if (images.dim() != 4) throw InvalidArgument("diff_augment: expected (B, C, H, W) images");
  policy.validate();
  auto x = images;
  for (auto op : policy.ops) {
    switch (op) {
      case AugOp::Brightness: x = brightness(x, policy, rng); break;
      case AugOp::Contrast: x = contrast(x, policy, rng); break;
      case AugOp::Translation: x = translation(x, policy, rng); break;
      case AugOp::Cutout: x = cutout(x, policy, rng); break;
    }
  }
  return x;
}

}  // namespace hagan
