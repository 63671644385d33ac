#pragma once

// Real image directories and the procedural phantom set used for desk-scale
// runs. Datasets are immutable after construction.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace hagan::data {

enum class ChannelMode { Grayscale, Rgb };

struct DatasetSpec {
  std::string source = "phantom";  // "phantom" or "dir"
  std::filesystem::path directory;
  std::int64_t resolution = 64;
  ChannelMode channel_mode = ChannelMode::Grayscale;
  std::int64_t phantom_count = 512;
  std::uint64_t seed = 0;

  std::int64_t channels() const { return channel_mode == ChannelMode::Grayscale ? 1 : 3; }
};

std::string to_string(ChannelMode mode);
ChannelMode parse_channel_mode(const std::string& name);

class Dataset {
 public:
  /// (N, C, R, R) float32 in [-1, 1]; throws InvalidArgument otherwise.
  explicit Dataset(torch::Tensor images);

  std::int64_t size() const { return images_.size(0); }
  std::int64_t channels() const { return images_.size(1); }
  std::int64_t resolution() const { return images_.size(2); }
  const torch::Tensor& images() const { return images_; }

  torch::Tensor gather(const std::vector<std::int64_t>& indices) const;
  /// Deterministic permutation of [0, size) for one epoch.
  std::vector<std::int64_t> epoch_order(std::uint64_t seed, std::int64_t epoch) const;

 private:
  torch::Tensor images_;
};

/// Loads every decodable PNG/JPEG in `path` (lexicographic order). Files that
/// fail to decode are skipped with a warning on stderr.
/// Throws DataError for a missing/empty directory or when nothing decodes.
Dataset load_image_dir(const std::filesystem::path& path, const DatasetSpec& spec);

/// `n` grayscale slice-like phantoms: dark background, a bright elliptical
/// body with 2-5 interior ellipses or rings, and faint noise.
Dataset phantom_dataset(std::int64_t n, std::int64_t resolution, std::uint64_t seed);

/// Dispatches on spec.source.
Dataset make_dataset(const DatasetSpec& spec);

/// Writes the first `count` images as individual PNGs into `dir`.
void export_pngs(const Dataset& dataset, const std::filesystem::path& dir, std::int64_t count);

}  // namespace hagan::data
