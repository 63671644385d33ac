#include "hagan/train_config.hpp"

#include <cmath>

#include "hagan/error.hpp"

namespace hagan {

std::string to_string(BankMode mode) { return mode == BankMode::Ema ? "ema" : "latest"; }

BankMode parse_bank_mode(const std::string& name) {
  if (name == "ema") return BankMode::Ema;
  if (name == "latest" || name == "latest_batch") return BankMode::LatestBatch;
  throw InvalidArgument("unknown bank mode '" + name + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (total_epochs < 1 && max_steps < 1) throw InvalidArgument("total_epochs or max_steps must be >= 1");
  if (warmup_epochs < 0) throw InvalidArgument("warmup_epochs must be >= 0");
  if (max_steps <= 0 && warmup_epochs > total_epochs) {
    throw InvalidArgument("warmup_epochs must not exceed total_epochs");
  }
  if (!(lr_g > 0 && lr_d > 0)) throw InvalidArgument("learning rates must be > 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw InvalidArgument("Adam betas must lie in [0, 1)");
  }
  if (!(alpha > 0)) throw InvalidArgument("alpha must be > 0");
  if (!(mask_ratio.lo >= 0 && mask_ratio.hi <= 1 && mask_ratio.lo <= mask_ratio.hi)) {
    throw InvalidArgument("mask ratio bounds must satisfy 0 <= min <= max <= 1");
  }
  if (!(bank_momentum > 0 && bank_momentum <= 1)) throw InvalidArgument("bank_momentum must lie in (0, 1]");
  if (checkpoint_every < 0 || grid_samples < 1) throw InvalidArgument("checkpoint_every/grid_samples out of range");
  weights.validate();
  aug.validate();
  generator_config().validate();
  discriminator_config().validate();
}

DiscriminatorConfig TrainConfig::discriminator_config() const {
  DiscriminatorConfig c;
  c.resolution = resolution;
  c.channels = channels;
  c.base_channels = d_base_channels;
  c.max_channels = max_channels;
  c.image_layers = d_image_layers;
  c.shared_stem = d_shared_stem;
  return c;
}

FeatureLayout TrainConfig::skip_layout() const {
  FeatureLayout out;
  for (const auto& [r, c] : discriminator_config().feature_layout()) {
    if (r >= 4 && r < resolution) out[r] = c;
  }
  return out;
}

GeneratorConfig TrainConfig::generator_config() const {
  GeneratorConfig c;
  c.latent_dim = latent_dim;
  c.base_channels = g_base_channels;
  c.max_channels = max_channels;
  c.resolution = resolution;
  c.channels = channels;
  c.skip_fusion_enabled = toggles.reverse_skip;
  c.skip_sockets = skip_layout();
  return c;
}

LossWeights TrainConfig::effective_weights() const {
  auto w = weights;
  if (!toggles.pixel_branch) {
    w.beta1 = 0.0;
    w.beta_g = 0.0;
  }
  if (!toggles.attnmix) w.beta2 = 0.0;
  return w;
}

double TrainConfig::effective_momentum() const {
  return bank_mode == BankMode::LatestBatch ? 1.0 : bank_momentum;
}

}  // namespace hagan
