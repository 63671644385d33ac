#pragma once

// Module-accumulation ablation: five rows that switch the components on one
// at a time (base, +AttnMix, +reverse skip, +pixel branch, +two-phase
// schedule), each trained over several seeds and scored by FID.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hagan/data.hpp"
#include "hagan/evaluation.hpp"
#include "hagan/train_config.hpp"
#include "hagan/training.hpp"

namespace hagan {

struct AblationRow {
  std::string name;
  ModuleToggles toggles;
};

/// Small-network configuration for CPU-scale runs at `resolution`.
TrainConfig desk_config(std::int64_t resolution = 16);

/// The five cumulative rows, base model first and full model last.
std::vector<AblationRow> ablation_schedule();

struct AblationOptions {
  TrainConfig base = desk_config();  // toggles and schedule fields are overridden per row
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::int64_t steps = 2000;
  /// Share of the epochs spent in warmup when the two-phase toggle is on.
  double warmup_fraction = 0.5;
  std::int64_t eval_samples = 512;
  std::vector<std::size_t> rows;  // indices into the schedule; empty runs all
  std::optional<std::filesystem::path> out_dir;  // per-run artifacts when set
  std::function<void(const std::string&)> progress;
};

struct AblationRun {
  std::uint64_t seed = 0;
  double init_fid = 0.0;
  double final_fid = 0.0;
  std::vector<StepMetrics> metrics;
};

struct AblationRowResult {
  AblationRow row;
  std::vector<AblationRun> runs;

  double median_init() const;
  double median_final() const;
};

struct AblationResult {
  std::vector<AblationRowResult> rows;

  /// Full-model median FID <= base-model median FID. False unless both the
  /// first and last schedule rows were run.
  bool full_not_worse_than_base() const;
  /// Whether every row's median is <= the previous row's (reported only).
  bool monotone() const;
  std::string table() const;
};

double median(std::vector<double> values);

/// FID of `count` samples from the trainer's generator (stored bank) against
/// the first `count` images of the dataset, with latents derived from `seed`.
double trainer_fid(Trainer& trainer, const data::Dataset& dataset, const eval::FeatureExtractor& extractor,
                   std::int64_t count, std::uint64_t seed);

/// Training config for one row of the schedule.
TrainConfig ablation_config(const AblationOptions& options, const AblationRow& row, std::uint64_t seed,
                            std::int64_t dataset_size);

/// Trains every run on `dataset` and scores FID against the first
/// `eval_samples` images of `reference`.
AblationResult run_ablation(const data::Dataset& dataset, const data::Dataset& reference,
                            const AblationOptions& options);
/// Scores against the training set itself.
AblationResult run_ablation(const data::Dataset& dataset, const AblationOptions& options);

/// Default desk ablation data: a 64-image phantom training set, small enough
/// that an unregularized discriminator overfits within the step budget, and
/// an independent 512-image phantom reference for FID.
struct AblationData {
  data::Dataset train;
  data::Dataset reference;
};
AblationData desk_ablation_data(std::int64_t resolution = 16, std::int64_t train_count = 64,
                                std::int64_t reference_count = 512, std::uint64_t seed = 0);

/// Phantom images drawn independently of the training set described by
/// `spec` (same resolution, different stream).
data::Dataset held_out_phantoms(const data::DatasetSpec& spec, std::int64_t count);

}  // namespace hagan
