#pragma once

// Feature bank carrying real-path discriminator activations back into the
// generator at matching resolutions.

#include <cstdint>
#include <map>
#include <vector>

#include <torch/torch.h>

namespace hagan {

/// resolution -> channel count of the banked activation.
using FeatureLayout = std::map<std::int64_t, std::int64_t>;

/// resolution -> activation tensor.
using FeaturePyramid = std::map<std::int64_t, torch::Tensor>;

// Immutable, gradient-free view handed to the generator. Every resolution in
// the layout is present; resolutions the bank never saw are zeros.
class FeatureView {
 public:
  FeatureView() = default;
  explicit FeatureView(FeaturePyramid entries);

  bool contains(std::int64_t resolution) const;
  /// (1, C, r, r). Throws InvalidArgument for an unknown resolution.
  const torch::Tensor& at(std::int64_t resolution) const;
  std::vector<std::int64_t> resolutions() const;

 private:
  FeaturePyramid entries_;
};

struct FeatureBank {
  FeatureLayout layout;
  FeaturePyramid entries;  // (1, C_r, r, r), only resolutions seen so far
  double momentum = 0.1;
  std::int64_t step_count = 0;

  static FeatureBank empty(FeatureLayout layout, double momentum);
  bool is_empty() const { return entries.empty(); }
};

/// EMA update from a batch of real-image features:
///   entry <- (1 - m) * entry + m * mean_over_batch(features)
/// The first update of a resolution stores the batch mean directly. Features
/// are detached; extra resolutions in `real_features` are ignored.
/// Throws InvalidArgument for m outside (0, 1] or a missing/mis-shaped level.
FeatureBank update_bank(const FeatureBank& bank, const FeaturePyramid& real_features,
                        double momentum);

/// Deep copy of the bank as a generator input, zeros for unseen levels.
FeatureView snapshot_for_generation(const FeatureBank& bank);

/// All-zeros view for a layout.
FeatureView zero_view(const FeatureLayout& layout);

}  // namespace hagan
