#pragma once

// Differentiable augmentation applied to every discriminator input. Each op
// is piecewise linear in the pixels and clamps back into [-1, 1].

#include <string>
#include <vector>

#include <torch/torch.h>

#include "hagan/rng.hpp"

namespace hagan {

enum class AugOp { Brightness, Contrast, Translation, Cutout };

struct AugPolicy {
  std::vector<AugOp> ops;
  double brightness_lo = -0.5;
  double brightness_hi = 0.5;
  double contrast_lo = 0.5;
  double contrast_hi = 1.5;
  double translation_ratio = 0.125;  // max shift as a fraction of width
  double cutout_ratio = 0.25;        // square side as a fraction of width

  /// brightness, translation, cutout.
  static AugPolicy defaults();
  static AugPolicy none() { return {}; }

  void validate() const;
};

std::string to_string(AugOp op);
AugOp parse_aug_op(const std::string& name);
/// Comma-separated op names; "none" or "" for the empty policy.
std::string ops_to_string(const std::vector<AugOp>& ops);
std::vector<AugOp> parse_ops(const std::string& text);

/// Applies the policy's ops in order with per-sample parameters drawn from
/// `rng`. The empty policy returns the input tensor unchanged.
torch::Tensor diff_augment(const torch::Tensor& images, const AugPolicy& policy, Rng& rng);

}  // namespace hagan
