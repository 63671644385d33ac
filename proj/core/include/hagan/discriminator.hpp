#pragma once

// Hierarchical discriminator: an image-level branch (stride-2 downsampling to
// one score per image) and a pixel-level branch (channel-reducing stride-1
// convolutions to a full-resolution realness map). The branches are decoupled
// unless `shared_stem` is set.

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "hagan/reverse_skip.hpp"

namespace hagan {

struct DiscriminatorConfig {
  std::int64_t resolution = 64;
  std::int64_t channels = 1;
  std::int64_t base_channels = 64;
  std::int64_t max_channels = 512;
  std::int64_t image_layers = 4;
  bool shared_stem = false;

  /// Resolution and width of every image-branch activation, i.e. the levels
  /// a feature pyramid can provide.
  FeatureLayout feature_layout() const;
  void validate() const;
};

struct DiscOutput {
  torch::Tensor img_score;   // (B) raw score
  torch::Tensor pixel_map;   // (B, 1, R, R) raw scores; undefined if not requested
  FeaturePyramid features;   // image-branch activations when captured
};

struct DiscriminateOptions {
  bool capture_features = false;
  bool pixel = true;
};

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorConfig config);

  DiscOutput forward(const torch::Tensor& images, DiscriminateOptions options = {});

  const DiscriminatorConfig& config() const { return config_; }

  std::vector<torch::Tensor> stem_parameters() const;
  std::vector<torch::Tensor> image_parameters() const;
  std::vector<torch::Tensor> pixel_parameters() const;

 private:
  DiscriminatorConfig config_;
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::ModuleList image_layers_;
  torch::nn::Linear image_head_{nullptr};
  torch::nn::ModuleList pixel_layers_;
};
TORCH_MODULE(Discriminator);

/// Forward pass with resolution checking.
DiscOutput discriminate(Discriminator& discriminator, const torch::Tensor& images,
                        DiscriminateOptions options = {});

}  // namespace hagan
