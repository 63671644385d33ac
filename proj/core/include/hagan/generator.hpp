#pragma once

// Attention-mixed generator: a transposed-convolution upsampling stack with a
// single self-attention layer whose attention matrix is exported, and 1x1
// fusion sockets that merge banked discriminator features back in.

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "hagan/reverse_skip.hpp"
#include "hagan/rng.hpp"

namespace hagan {

struct GeneratorConfig {
  std::int64_t latent_dim = 100;
  std::int64_t base_channels = 64;
  std::int64_t max_channels = 512;
  std::int64_t resolution = 64;  // power of two, >= 8
  std::int64_t channels = 1;
  std::int64_t attention_resolution = 0;  // 0 selects resolution / 2
  bool skip_fusion_enabled = true;
  FeatureLayout skip_sockets;  // resolution -> banked channel count

  std::int64_t effective_attention_resolution() const;
  /// Channel width of the generator activation at resolution r.
  std::int64_t channels_at(std::int64_t r) const;
  /// 4, 8, ..., resolution.
  std::vector<std::int64_t> stage_resolutions() const;
  void validate() const;
};

struct GeneratorOutput {
  torch::Tensor images;     // (B, channels, R, R) in [-1, 1]
  torch::Tensor attention;  // (B, N, N), rows are queries and sum to 1
};

/// i.i.d. U[-1, 1] latent batch of shape (batch, latent_dim).
torch::Tensor sample_latent(std::int64_t batch, std::int64_t latent_dim, Rng& rng);

// Self-attention over spatial positions with a learned residual gate that
// starts at zero.
class SelfAttentionImpl : public torch::nn::Module {
 public:
  explicit SelfAttentionImpl(std::int64_t channels);

  /// Returns (output, attention) with attention of shape (B, N, N).
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d query_{nullptr}, key_{nullptr}, value_{nullptr};
  torch::Tensor gamma_;
};
TORCH_MODULE(SelfAttention);

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig config);

  /// `bank` may be null. With no bank, or fusion disabled, every socket
  /// receives zeros.
  GeneratorOutput forward(const torch::Tensor& z, const FeatureView* bank = nullptr);

  const GeneratorConfig& config() const { return config_; }

 private:
  torch::Tensor fuse(std::int64_t r, const torch::Tensor& x, const FeatureView* bank);

  GeneratorConfig config_;
  torch::nn::Linear project_{nullptr};
  torch::nn::ModuleList ups_;
  std::map<std::int64_t, torch::nn::Conv2d> fusions_;
  SelfAttention attention_{nullptr};
  torch::nn::Conv2d to_image_{nullptr};
};
TORCH_MODULE(Generator);

/// Forward pass with the contract checks applied to `z` and `bank`.
GeneratorOutput generate(Generator& generator, const torch::Tensor& z,
                         const FeatureView* bank = nullptr);

}  // namespace hagan
