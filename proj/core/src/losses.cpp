#include "hagan/losses.hpp"

#include <cmath>

#include "hagan/error.hpp"

namespace hagan {
namespace {

torch::Tensor zero_like_scalar(const torch::Tensor& like) {
  return torch::zeros({}, like.options().requires_grad(false));
}

torch::Tensor or_zero(const torch::Tensor& t) {
  return t.defined() ? t : torch::zeros({}, torch::kFloat32);
}

torch::Tensor sq_to(const torch::Tensor& x, double target) {
  return (x - target).pow(2).mean();
}

void check_finite_weight(double w, const char* name) {
  if (!(std::isfinite(w) && w >= 0.0)) {
    throw InvalidArgument(std::string("loss weight ") + name + " must be finite and >= 0");
  }
}

}  // namespace

void LossWeights::validate() const {
  check_finite_weight(beta1, "beta1");
  check_finite_weight(beta2, "beta2");
  check_finite_weight(beta_g, "beta_g");
  check_finite_weight(feature_cons_weight, "feature_cons_weight");
}

std::string to_string(FeatureConsistencyMode mode) {
  return mode == FeatureConsistencyMode::MaskedL2 ? "masked_l2" : "infonce";
}

FeatureConsistencyMode parse_feature_mode(const std::string& name) {
  if (name == "masked_l2") return FeatureConsistencyMode::MaskedL2;
  if (name == "infonce") return FeatureConsistencyMode::InfoNce;
  throw InvalidArgument("unknown feature consistency mode '" + name + "'");
}

AdvLoss adv_d_loss(const DiscOutput& real_out, const DiscOutput& fake_out) {
  AdvLoss out;
  out.img = sq_to(real_out.img_score, 1.0) + sq_to(fake_out.img_score, 0.0);
  if (real_out.pixel_map.defined() && fake_out.pixel_map.defined()) {
    out.pixel = sq_to(real_out.pixel_map, 1.0) + sq_to(fake_out.pixel_map, 0.0);
  } else {
    out.pixel = zero_like_scalar(real_out.img_score);
  }
  return out;
}

AdvLoss adv_g_loss(const DiscOutput& fake_out) {
  AdvLoss out;
  out.img = sq_to(fake_out.img_score, 1.0);
  out.pixel = fake_out.pixel_map.defined() ? sq_to(fake_out.pixel_map, 1.0)
                                           : zero_like_scalar(fake_out.img_score);
  return out;
}

ConsistencyLoss consistency_loss(const DiscOutput& mixed_out, const DiscOutput& real_out,
                                 const DiscOutput& fake_out, const mix::BinaryMask& mask,
                                 const mix::MixLabel& label) {
  const auto batch = mixed_out.img_score.size(0);
  if (mask.batch() != batch || label.lambda.dim() != 1 || label.lambda.size(0) != batch) {
    throw InvalidArgument("consistency_loss: mask/label batch does not match discriminator output");
  }
  if (!label.pixel_targets.values.sizes().equals(mask.values.sizes()) ||
      !torch::equal(label.pixel_targets.values, mask.values)) {
    throw InvalidArgument("consistency_loss: label was allocated for a different mask");
  }

  ConsistencyLoss out;
  auto target = label.lambda.to(mixed_out.img_score.dtype()).to(mixed_out.img_score.device());
  out.image_term = (mixed_out.img_score - target).pow(2).mean();

  if (!mixed_out.pixel_map.defined()) {
    out.pixel_term = zero_like_scalar(mixed_out.img_score);
    return out;
  }
  if (!real_out.pixel_map.defined() || !fake_out.pixel_map.defined()) {
    throw InvalidArgument("consistency_loss: constituent pixel maps are missing");
  }
  auto targets = mix::mix_pixel_targets(mask, real_out.pixel_map.detach(), fake_out.pixel_map.detach());
  out.pixel_term = (mixed_out.pixel_map - targets).pow(2).mean();
  return out;
}

torch::Tensor feature_consistency_loss(const FeaturePyramid& mixed_features,
                                       const FeaturePyramid& real_features,
                                       const FeaturePyramid& fake_features,
                                       const mix::BinaryMask& mask, FeatureConsistencyMode mode,
                                       double temperature) {
  if (mixed_features.size() != real_features.size() || mixed_features.size() != fake_features.size()) {
    throw InvalidArgument("feature_consistency_loss: pyramids have different level counts");
  }
  if (mode == FeatureConsistencyMode::InfoNce && !(temperature > 0.0)) {
    throw InvalidArgument("feature_consistency_loss: temperature must be > 0");
  }
  torch::Tensor total;
  for (const auto& [r, f_mix] : mixed_features) {
    auto real_it = real_features.find(r);
    auto fake_it = fake_features.find(r);
    if (real_it == real_features.end() || fake_it == fake_features.end()) {
      throw InvalidArgument("feature_consistency_loss: level " + std::to_string(r) + " missing");
    }
    auto f_real = real_it->second.detach();
    auto f_fake = fake_it->second.detach();
    if (!f_real.sizes().equals(f_mix.sizes()) || !f_fake.sizes().equals(f_mix.sizes())) {
      throw InvalidArgument("feature_consistency_loss: level " + std::to_string(r) + " shapes differ");
    }
    auto m = mix::downsample_mask_majority(mask.values, f_mix.size(2), f_mix.size(3)).to(f_mix.dtype());

    torch::Tensor level;
    if (mode == FeatureConsistencyMode::MaskedL2) {
      auto d_real = (f_mix - f_real).pow(2).sum(1, /*keepdim=*/true);
      auto d_fake = (f_mix - f_fake).pow(2).sum(1, /*keepdim=*/true);
      level = (m * d_real + (1.0 - m) * d_fake).mean();
    } else {
      auto positive = m * f_real + (1.0 - m) * f_fake;
      auto negative = m * f_fake + (1.0 - m) * f_real;
      auto s_pos = torch::cosine_similarity(f_mix, positive, 1, 1e-8);
      auto s_neg = torch::cosine_similarity(f_mix, negative, 1, 1e-8);
      level = torch::softplus((s_neg - s_pos) / temperature).mean();
    }
    total = total.defined() ? total + level : level;
  }
  return total.defined() ? total : torch::zeros({}, torch::kFloat32);
}

torch::Tensor total_d_loss(const DLossParts& parts, const LossWeights& weights) {
  weights.validate();
  auto cons = or_zero(parts.cons) + weights.feature_cons_weight * or_zero(parts.feature_cons);
  return or_zero(parts.img) + weights.beta1 * or_zero(parts.pixel) + weights.beta2 * cons;
}

torch::Tensor total_g_loss(const GLossParts& parts, const LossWeights& weights) {
  weights.validate();
  return or_zero(parts.img) + weights.beta_g * or_zero(parts.pixel);
}

}  // namespace hagan
