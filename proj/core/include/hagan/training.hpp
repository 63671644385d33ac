#pragma once

// Two-phase adversarial training: conventional image/pixel adversarial
// training during the warmup epochs, then differentiable augmentation,
// AttnMix mixing and consistency regularization of the discriminator.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "hagan/data.hpp"
#include "hagan/discriminator.hpp"
#include "hagan/generator.hpp"
#include "hagan/losses.hpp"
#include "hagan/masks_mixing.hpp"
#include "hagan/reverse_skip.hpp"
#include "hagan/rng.hpp"
#include "hagan/run_config.hpp"
#include "hagan/train_config.hpp"

namespace hagan {

enum class Phase { Warmup, Augmented };
std::string to_string(Phase phase);

inline constexpr int kCheckpointVersion = 1;

struct StepMetrics {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  Phase phase = Phase::Warmup;
  bool augmented = false;    // T applied to discriminator inputs
  bool consistency = false;  // consistency terms in the D objective

  double d_img = 0, d_pixel = 0, d_cons_img = 0, d_cons_pixel = 0, d_feature = 0, d_total = 0;
  double g_img = 0, g_pixel = 0, g_total = 0;
  std::optional<double> lambda0_mean, lambda_mean, lambda_std;
  std::optional<double> time_ms;

  /// One NDJSON record.
  std::string to_json() const;
  static StepMetrics from_json(const std::string& line);
};

struct DiscriminatorObjective {
  DLossParts parts;
  torch::Tensor total;
  ConsistencyLoss consistency;   // set when mixing
  mix::BinaryMask mask;          // set when mixing
  mix::MixLabel label;           // set when mixing
  FeaturePyramid real_features;  // real-path activations, captured when reverse skip is on
};

/// Discriminator loss for one step. Generated images enter detached. With
/// `mixing`, both batches pass through the augmentation policy, a fresh cut
/// mask is drawn and the mixed batch is labelled from the generator's
/// attention.
DiscriminatorObjective discriminator_objective(Discriminator& discriminator, const TrainConfig& config,
                                               const torch::Tensor& real, const GeneratorOutput& gen,
                                               bool mixing, Rng& rng);

struct GeneratorObjective {
  GLossParts parts;
  torch::Tensor total;
};

GeneratorObjective generator_objective(Discriminator& discriminator, const TrainConfig& config,
                                       const torch::Tensor& fake, bool augment, Rng& rng);

class Trainer {
 public:
  explicit Trainer(TrainConfig config, data::DatasetSpec data_spec = {});

  const TrainConfig& config() const { return config_; }

  /// Phase the schedule assigns to `epoch`.
  Phase phase_for_epoch(std::int64_t epoch) const;

  /// One discriminator update followed by one generator update. Throws
  /// NumericalError naming the seed, step and offending term if a loss is
  /// not finite, before the failing update is applied.
  StepMetrics train_step(const torch::Tensor& real, Phase phase, std::int64_t epoch = 0);

  std::int64_t step() const { return step_; }

  Generator& generator() { return generator_; }
  Discriminator& discriminator() { return discriminator_; }
  const FeatureBank& bank() const { return bank_; }
  Rng& rng() { return rng_; }

  /// Generator output under no_grad, with the stored bank when `use_bank`
  /// and reverse skip is enabled, else with zero injection.
  torch::Tensor sample(const torch::Tensor& z, bool use_bank = true);
  /// Fixed latent batch used for every sample grid of a run.
  torch::Tensor grid_latent() const;

  void save(const std::filesystem::path& path) const;
  /// Restores networks, optimizers, bank, random state and step counter.
  static Trainer load(const std::filesystem::path& path);

 private:
  void check_finite(double value, const char* term) const;

  TrainConfig config_;
  data::DatasetSpec data_spec_;
  Generator generator_{nullptr};
  Discriminator discriminator_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
  FeatureBank bank_;
  Rng rng_;
  std::int64_t step_ = 0;
};

// Generator plus bank restored from a checkpoint, for sampling and evaluation.
struct Sampler {
  TrainConfig config;
  Generator generator{nullptr};
  FeatureBank bank;

  torch::Tensor sample(const torch::Tensor& z, bool use_bank = true);
  torch::Tensor grid_latent() const;
};

Sampler load_sampler(const std::filesystem::path& checkpoint);

/// Run configuration stored in a checkpoint header.
RunConfig checkpoint_config(const std::filesystem::path& checkpoint);

/// Latent batch for sample grids: depends only on the seed and sizes.
torch::Tensor grid_latent_for(const TrainConfig& config);

struct TrainOptions {
  std::optional<std::filesystem::path> resume_from;
  bool write_artifacts = true;  // metrics log, checkpoints and grids
  std::function<void(const StepMetrics&)> on_step;
  /// Called once before the first step with the freshly built trainer.
  std::function<void(Trainer&)> on_start;
  /// Called once after the last step.
  std::function<void(Trainer&)> on_finish;
};

struct RunArtifacts {
  std::filesystem::path out_dir;
  std::vector<StepMetrics> metrics;  // steps executed by this call
  std::filesystem::path final_checkpoint;
  std::filesystem::path final_grid;
  std::int64_t steps_per_epoch = 0;
  std::int64_t total_steps = 0;
};

std::int64_t steps_per_epoch(const TrainConfig& config, std::int64_t dataset_size);
std::int64_t total_steps(const TrainConfig& config, std::int64_t dataset_size);

/// Runs the schedule: epochs [0, n) warmup, [n, total) augmented (when
/// AttnMix and the two-phase strategy are on). Output layout under
/// `out_dir`: config.resolved, metrics.ndjson, checkpoints/, grids/.
/// Throws InvalidArgument if the dataset does not match the configured
/// resolution or channels.
RunArtifacts train(const TrainConfig& config, const data::Dataset& dataset,
                   const std::filesystem::path& out_dir, const TrainOptions& options = {},
                   const data::DatasetSpec& data_spec = {});

/// Parses a metrics.ndjson file.
std::vector<StepMetrics> read_metrics(const std::filesystem::path& path);

}  // namespace hagan
