#pragma once

// Cut-mask sampling, real/fake composition and realness-label allocation for
// AttnMix.
//
// Conventions: images are (batch, channel, H, W) float tensors in [-1, 1];
// masks are (batch, 1, H, W) with 1 marking pixels taken from the real image.
// All mixing ratios are "realness": the fraction of a mixed image that is
// attributable to the real constituent.

#include <cstdint>

#include <torch/torch.h>

#include "hagan/rng.hpp"

namespace hagan::mix {

struct RatioBounds {
  double lo = 0.2;
  double hi = 0.8;
};

struct BinaryMask {
  torch::Tensor values;      // (B, 1, H, W) float32, entries exactly 0 or 1
  torch::Tensor area_ratio;  // (B) float64, lambda0 = sum(values) / (H*W)

  std::int64_t batch() const { return values.size(0); }
  std::int64_t height() const { return values.size(2); }
  std::int64_t width() const { return values.size(3); }
};

// Nonnegative per-pixel saliency, each image summing to 1.
struct SaliencyMap {
  torch::Tensor values;  // (B, 1, H, W) float32
};

struct MixLabel {
  torch::Tensor lambda;  // (B) float64 in [0, 1]
  BinaryMask pixel_targets;
};

/// One axis-aligned rectangle per image whose area ratio is drawn uniformly
/// from `bounds`. Throws InvalidArgument for H or W < 4 or bounds outside
/// [0, 1].
BinaryMask sample_cut_mask(std::int64_t batch, std::int64_t height,
                           std::int64_t width, RatioBounds bounds, Rng& rng);

/// Wraps an existing {0,1} tensor, validating it and computing lambda0.
BinaryMask mask_from_values(const torch::Tensor& values);

/// All-ones (`ones == true`) or all-zeros mask.
BinaryMask constant_mask(std::int64_t batch, std::int64_t height,
                         std::int64_t width, bool ones);

/// 1 - M.
BinaryMask complement(const BinaryMask& mask);

/// M * real + (1 - M) * fake with the mask broadcast over channels. Exact:
/// each output pixel is a copy of one input pixel.
torch::Tensor attnmix_compose(const torch::Tensor& real,
                              const torch::Tensor& fake,
                              const BinaryMask& mask);

/// Converts raw attention into a per-image saliency map at the target size.
///
/// `raw_attention` is either (B, N) key importance or a (B, Nq, Nk) attention
/// matrix with queries on axis 1; a matrix is reduced by summing over
/// queries. The N key positions are reshaped to a sqrt(N) x sqrt(N) grid,
/// upsampled nearest-neighbour and normalized to unit mass per image.
SaliencyMap attention_to_saliency(const torch::Tensor& raw_attention,
                                  std::int64_t target_h, std::int64_t target_w);

/// lambda1 = sum(M * A) / sum(M * A + (1 - M) * A), per image, float64.
torch::Tensor attention_weighted_ratio(const BinaryMask& mask,
                                       const SaliencyMap& saliency);

/// clamp(alpha * (lambda0 + lambda1), 0, 1).
double mix_label(double lambda0, double lambda1, double alpha);
torch::Tensor mix_label(const torch::Tensor& lambda0,
                        const torch::Tensor& lambda1, double alpha);

/// Full label allocation for a mask and saliency map.
MixLabel allocate_label(const BinaryMask& mask, const SaliencyMap& saliency,
                        double alpha);

/// Area-majority downsampling: a cell becomes 1 when at least half of the
/// covered pixels are 1. Requires integer scale factors.
torch::Tensor downsample_mask_majority(const torch::Tensor& mask_values,
                                       std::int64_t height, std::int64_t width);

/// M * real_map + (1 - M) * fake_map for (B, 1, Hp, Wp) pixel maps; the mask
/// is majority-downsampled when the pixel maps are smaller than it.
torch::Tensor mix_pixel_targets(const BinaryMask& mask,
                                const torch::Tensor& per_pixel_real,
                                const torch::Tensor& per_pixel_fake);

}  // namespace hagan::mix
