#pragma once

#include <cstdint>
#include <string>

#include "hagan/augmentation.hpp"
#include "hagan/discriminator.hpp"
#include "hagan/generator.hpp"
#include "hagan/losses.hpp"
#include "hagan/masks_mixing.hpp"

namespace hagan {

// Ablation switches. With everything off the model trains as a plain
// image-level least-squares GAN.
struct ModuleToggles {
  bool attnmix = true;       // augmentation, mixing and consistency terms
  bool reverse_skip = true;  // bank updates and generator fusion
  bool pixel_branch = true;  // pixel-level adversarial and consistency terms
  bool two_phase = true;     // warmup epochs before augmentation starts
};

enum class BankMode { Ema, LatestBatch };
std::string to_string(BankMode mode);
BankMode parse_bank_mode(const std::string& name);

struct TrainConfig {
  std::int64_t resolution = 64;
  std::int64_t channels = 1;
  std::int64_t latent_dim = 100;
  std::int64_t batch_size = 32;

  double lr_g = 1e-3;
  double lr_d = 1e-3;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;

  std::int64_t warmup_epochs = 100;
  std::int64_t total_epochs = 200;
  std::int64_t max_steps = 0;  // > 0 overrides total_epochs with a step budget

  std::int64_t g_base_channels = 64;
  std::int64_t d_base_channels = 64;
  std::int64_t max_channels = 512;
  std::int64_t d_image_layers = 4;
  bool d_shared_stem = false;

  LossWeights weights;
  FeatureConsistencyMode feature_mode = FeatureConsistencyMode::MaskedL2;
  double alpha = 0.5;
  mix::RatioBounds mask_ratio;
  AugPolicy aug = AugPolicy::defaults();

  double bank_momentum = 0.1;
  BankMode bank_mode = BankMode::Ema;

  ModuleToggles toggles;
  std::uint64_t seed = 0;

  std::int64_t checkpoint_every = 10;  // epochs; 0 writes only the final checkpoint
  std::int64_t grid_samples = 16;
  bool log_timing = true;

  void validate() const;

  GeneratorConfig generator_config() const;
  DiscriminatorConfig discriminator_config() const;
  /// Weights with disabled modules zeroed.
  LossWeights effective_weights() const;
  /// Momentum actually applied to the bank (1 in latest-batch mode).
  double effective_momentum() const;
  /// Levels shared by the discriminator pyramid and the generator path
  /// (resolutions 4 .. resolution/2).
  FeatureLayout skip_layout() const;
};

}  // namespace hagan
