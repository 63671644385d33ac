#pragma once

// Least-squares adversarial losses at image and pixel level, the AttnMix
// consistency loss, feature-map consistency, and the weighted totals for both
// players. Undefined tensors in any parts struct count as zero.

#include <string>

#include <torch/torch.h>

#include "hagan/discriminator.hpp"
#include "hagan/masks_mixing.hpp"

namespace hagan {

struct LossWeights {
  double beta1 = 1.0;               // pixel adversarial weight in the D objective
  double beta2 = 1.0;               // consistency weight in the D objective
  double beta_g = 1.0;              // pixel adversarial weight in the G objective
  double feature_cons_weight = 0.1; // share of feature consistency inside the consistency slot

  void validate() const;
};

enum class FeatureConsistencyMode { MaskedL2, InfoNce };
std::string to_string(FeatureConsistencyMode mode);
FeatureConsistencyMode parse_feature_mode(const std::string& name);

struct AdvLoss {
  torch::Tensor img;
  torch::Tensor pixel;  // zero scalar when either side lacks a pixel map
};

/// Image: mean((D(real) - 1)^2) + mean(D(fake)^2); pixel likewise per pixel.
AdvLoss adv_d_loss(const DiscOutput& real_out, const DiscOutput& fake_out);

/// Image: mean((D(fake) - 1)^2); pixel likewise per pixel.
AdvLoss adv_g_loss(const DiscOutput& fake_out);

struct ConsistencyLoss {
  torch::Tensor image_term;  // mean((D_img(i) - lambda)^2)
  torch::Tensor pixel_term;  // mean((D_pix(i) - mix(M, D_pix(real), D_pix(fake)))^2)

  torch::Tensor total() const { return image_term + pixel_term; }
};

/// Consistency between the discriminator's response to the mixed batch and
/// the mix of its responses to the constituents. Real/fake outputs are used
/// as detached targets. Throws InvalidArgument if the label was allocated for
/// a different mask or batch.
ConsistencyLoss consistency_loss(const DiscOutput& mixed_out, const DiscOutput& real_out,
                                 const DiscOutput& fake_out, const mix::BinaryMask& mask,
                                 const mix::MixLabel& label);

/// Per level r, with M_r the majority-downsampled mask:
///   mean over (batch, positions) of M_r * |f_mix - f_real|^2 + (1 - M_r) * |f_mix - f_fake|^2
/// summed over levels, |.|^2 taken over channels. InfoNce instead scores the
/// masked target against the other constituent by cosine similarity.
torch::Tensor feature_consistency_loss(const FeaturePyramid& mixed_features,
                                       const FeaturePyramid& real_features,
                                       const FeaturePyramid& fake_features,
                                       const mix::BinaryMask& mask,
                                       FeatureConsistencyMode mode = FeatureConsistencyMode::MaskedL2,
                                       double temperature = 0.1);

struct DLossParts {
  torch::Tensor img;
  torch::Tensor pixel;
  torch::Tensor cons;
  torch::Tensor feature_cons;
};

/// img + beta1 * pixel + beta2 * (cons + feature_cons_weight * feature_cons).
torch::Tensor total_d_loss(const DLossParts& parts, const LossWeights& weights);

struct GLossParts {
  torch::Tensor img;
  torch::Tensor pixel;
};

/// img + beta_g * pixel.
torch::Tensor total_g_loss(const GLossParts& parts, const LossWeights& weights);

}  // namespace hagan
