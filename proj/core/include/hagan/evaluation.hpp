#pragma once

// Frechet distance between Gaussian fits of embedded image sets, with a
// pluggable embedding network.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "hagan/data.hpp"

namespace hagan::eval {

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  /// (N, C, H, W) images -> (N, dim()) float64 features.
  virtual torch::Tensor embed(const torch::Tensor& images) const = 0;
  virtual std::int64_t dim() const = 0;
  virtual std::string name() const = 0;
};

// Fixed-seed random convolutional network with global average pooling.
// Weights come from the extractor's own seed, independent of torch's global
// generator, so the same seed always yields the same features.
class RandomConvExtractor : public FeatureExtractor {
 public:
  /// `resolution` 0 accepts any input size.
  RandomConvExtractor(std::int64_t channels, std::int64_t resolution = 0,
                      std::uint64_t seed = 20240101, std::int64_t dim = 64);

  torch::Tensor embed(const torch::Tensor& images) const override;
  std::int64_t dim() const override { return dim_; }
  std::string name() const override;

 private:
  std::int64_t channels_;
  std::int64_t resolution_;
  std::uint64_t seed_;
  std::int64_t dim_;
  std::vector<torch::Tensor> weights_;
  std::vector<torch::Tensor> biases_;
};

/// Batched call into the extractor.
torch::Tensor embed(const torch::Tensor& images, const FeatureExtractor& extractor,
                    std::int64_t batch_size = 256);

struct FeatureStats {
  std::vector<double> mean;        // d
  std::vector<double> covariance;  // d x d, row-major, unbiased
  std::int64_t sample_count = 0;

  std::int64_t dim() const { return static_cast<std::int64_t>(mean.size()); }
};

// Streaming mean/covariance (Chan et al. pairwise update); merge is
// associative so shards can be reduced in any grouping.
class StatsAccumulator {
 public:
  explicit StatsAccumulator(std::int64_t dim);

  void add(const torch::Tensor& features);  // (N, d)
  void merge(const StatsAccumulator& other);
  FeatureStats finalize() const;
  std::int64_t count() const { return count_; }

 private:
  std::int64_t dim_;
  std::int64_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;  // sum of outer products of deviations
};

FeatureStats compute_stats(const torch::Tensor& features);

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), square roots taken by
/// symmetric eigendecomposition with negative eigenvalues clipped to zero.
/// Throws InvalidArgument on a dimension mismatch and NumericalError if a
/// covariance has an eigenvalue below -1e-8 (relative to its scale).
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

/// FID between two image sets under `extractor`. Warns on stderr when there
/// are fewer samples than feature dimensions.
double fid_between(const torch::Tensor& images_a, const torch::Tensor& images_b,
                   const FeatureExtractor& extractor);

struct EvalOptions {
  bool use_bank = true;
  std::uint64_t seed = 0;
  std::filesystem::path grid_path;  // empty: no grid
  std::int64_t grid_count = 64;
};

struct EvalReport {
  double fid = 0.0;
  std::int64_t real_count = 0;
  std::int64_t fake_count = 0;
  bool used_bank = false;
  std::string extractor;
  std::filesystem::path grid_path;

  /// key = value lines.
  std::string to_text() const;
};

/// Generates `sample_count` images from a checkpoint and compares them with
/// the same number of real images. Throws InvalidArgument if sample_count
/// exceeds the dataset.
EvalReport eval_run(const std::filesystem::path& checkpoint, const data::Dataset& dataset,
                    const FeatureExtractor& extractor, std::int64_t sample_count,
                    const EvalOptions& options = {});

}  // namespace hagan::eval
