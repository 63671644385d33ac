#include "hagan/image_io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "hagan/error.hpp"

namespace hagan::io {

torch::Tensor make_grid(const torch::Tensor& images, std::int64_t nrow, std::int64_t padding) {
  if (images.dim() != 4 || images.size(0) < 1) throw InvalidArgument("make_grid: expected (N, C, H, W)");
  const auto n = images.size(0);
  const auto c = images.size(1);
  const auto h = images.size(2);
  const auto w = images.size(3);
  const auto cols = std::clamp<std::int64_t>(nrow, 1, n);
  const auto rows = (n + cols - 1) / cols;
  auto grid = torch::full({c, rows * (h + padding) + padding, cols * (w + padding) + padding}, -1.0f,
                          torch::kFloat32);
  auto src = images.detach().to(torch::kFloat32);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto y = padding + (i / cols) * (h + padding);
    const auto x = padding + (i % cols) * (w + padding);
    grid.narrow(1, y, h).narrow(2, x, w).copy_(src[i]);
  }
  return grid;
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  if (image.dim() != 3 || (image.size(0) != 1 && image.size(0) != 3)) {
    throw InvalidArgument("write_png: expected (1|3, H, W) image");
  }
  auto bytes = ((image.detach().to(torch::kFloat32).clamp(-1.0, 1.0) + 1.0) * 127.5)
                   .round()
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();
  const int h = static_cast<int>(bytes.size(0));
  const int w = static_cast<int>(bytes.size(1));
  const int c = static_cast<int>(bytes.size(2));
  cv::Mat mat(h, w, c == 1 ? CV_8UC1 : CV_8UC3, bytes.data_ptr<std::uint8_t>());
  cv::Mat out;
  if (c == 3) {
    cv::cvtColor(mat, out, cv::COLOR_RGB2BGR);
  } else {
    out = mat;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), out)) throw DataError("write_png: cannot write " + path.string());
}

std::optional<torch::Tensor> load_image(const std::filesystem::path& path, std::int64_t size,
                                        bool grayscale) {
  if (size < 1) throw InvalidArgument("load_image: size must be >= 1");
  cv::Mat mat = cv::imread(path.string(), grayscale ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  if (mat.empty()) return std::nullopt;
  if (!grayscale) cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
  const int side = std::min(mat.rows, mat.cols);
  cv::Mat crop = mat(cv::Rect((mat.cols - side) / 2, (mat.rows - side) / 2, side, side));
  cv::Mat resized;
  const int s = static_cast<int>(size);
  if (side == s) {
    resized = crop.clone();
  } else {
    cv::resize(crop, resized, cv::Size(s, s), 0, 0, cv::INTER_LINEAR);
  }
  const int c = grayscale ? 1 : 3;
  auto t = torch::from_blob(resized.data, {s, s, c}, torch::kUInt8).clone();
  return (t.permute({2, 0, 1}).to(torch::kFloat32) / 127.5f - 1.0f).contiguous();
}

}  // namespace hagan::io
