#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <torch/torch.h>

namespace hagan::io {

/// Tiles (N, C, H, W) images in [-1, 1] into one (C, H', W') image with
/// `padding` pixels of -1 between tiles.
torch::Tensor make_grid(const torch::Tensor& images, std::int64_t nrow, std::int64_t padding = 1);

/// Writes a (C, H, W) image in [-1, 1] as an 8-bit PNG (C = 1 or 3).
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

/// Decodes a PNG/JPEG, center-crops it to a square and resizes it
/// bilinearly to `size` x `size` on the 8-bit image, then maps [0, 255]
/// linearly to [-1, 1]. Returns (C, size, size) with C = 1 (grayscale) or 3
/// (RGB), or nullopt when the file cannot be decoded.
std::optional<torch::Tensor> load_image(const std::filesystem::path& path, std::int64_t size,
                                        bool grayscale);

}  // namespace hagan::io
