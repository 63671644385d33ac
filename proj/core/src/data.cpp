#include "hagan/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "hagan/error.hpp"
#include "hagan/image_io.hpp"
#include "hagan/rng.hpp"

namespace hagan::data {
namespace {

struct Ellipse {
  double cx, cy, ax, ay, theta, intensity;
  bool ring;

  // Normalized radius; < 1 inside.
  double rho(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double u = (c * dx + s * dy) / ax;
    const double v = (-s * dx + c * dy) / ay;
    return std::sqrt(u * u + v * v);
  }

  bool covers(double x, double y) const {
    const double r = rho(x, y);
    return ring ? (r <= 1.0 && r >= 0.65) : r <= 1.0;
  }
};

bool has_image_extension(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

std::string to_string(ChannelMode mode) {
  return mode == ChannelMode::Grayscale ? "grayscale" : "rgb";
}

ChannelMode parse_channel_mode(const std::string& name) {
  if (name == "grayscale" || name == "gray") return ChannelMode::Grayscale;
  if (name == "rgb") return ChannelMode::Rgb;
  throw InvalidArgument("unknown channel mode '" + name + "'");
}

Dataset::Dataset(torch::Tensor images) : images_(std::move(images)) {
  if (!images_.defined() || images_.dim() != 4 || images_.size(0) < 1 ||
      images_.size(2) != images_.size(3)) {
    throw InvalidArgument("dataset images must be a nonempty (N, C, R, R) tensor");
  }
  images_ = images_.detach().to(torch::kFloat32).contiguous();
  if ((images_ < -1.0f).any().item<bool>() || (images_ > 1.0f).any().item<bool>()) {
    throw InvalidArgument("dataset images must lie in [-1, 1]");
  }
}

torch::Tensor Dataset::gather(const std::vector<std::int64_t>& indices) const {
  auto idx = torch::tensor(indices, torch::kInt64);
  return images_.index_select(0, idx);
}

std::vector<std::int64_t> Dataset::epoch_order(std::uint64_t seed, std::int64_t epoch) const {
  std::vector<std::int64_t> order(static_cast<std::size_t>(size()));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 engine(mix_seed(seed, static_cast<std::uint64_t>(epoch) + 0x5eed));
  std::shuffle(order.begin(), order.end(), engine);
  return order;
}

Dataset load_image_dir(const std::filesystem::path& path, const DatasetSpec& spec) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(path)) throw DataError("image directory not found: " + path.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no PNG/JPEG files in " + path.string());

  const bool gray = spec.channel_mode == ChannelMode::Grayscale;
  std::vector<torch::Tensor> images;
  images.reserve(files.size());
  for (const auto& f : files) {
    auto img = io::load_image(f, spec.resolution, gray);
    if (!img) {
      std::cerr << "warning: skipping undecodable image " << f.string() << '\n';
      continue;
    }
    images.push_back(*img);
  }
  if (images.empty()) throw DataError("none of the files in " + path.string() + " could be decoded");
  return Dataset(torch::stack(images));
}

Dataset phantom_dataset(std::int64_t n, std::int64_t resolution, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("phantom_dataset: n must be >= 1");
  if (resolution < 16) throw InvalidArgument("phantom_dataset: resolution must be >= 16");
  Rng rng(mix_seed(seed, 0xfa47));
  const auto res = static_cast<double>(resolution);
  auto out = torch::empty({n, 1, resolution, resolution}, torch::kFloat32);
  auto acc = out.accessor<float, 4>();

  for (std::int64_t k = 0; k < n; ++k) {
    Ellipse body{res / 2 + rng.uniform(-0.06, 0.06) * res,
                 res / 2 + rng.uniform(-0.06, 0.06) * res,
                 rng.uniform(0.32, 0.44) * res,
                 rng.uniform(0.26, 0.40) * res,
                 rng.uniform(-0.4, 0.4),
                 rng.uniform(0.35, 0.55),
                 false};
    std::vector<Ellipse> inner;
    const auto count = rng.uniform_int(2, 5);
    for (std::int64_t i = 0; i < count; ++i) {
      const double ox = rng.uniform(-0.5, 0.5) * body.ax;
      const double oy = rng.uniform(-0.5, 0.5) * body.ay;
      inner.push_back(Ellipse{body.cx + ox, body.cy + oy, rng.uniform(0.06, 0.2) * res,
                              rng.uniform(0.06, 0.2) * res, rng.uniform(-1.5, 1.5),
                              rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0) < 0.35});
    }
    for (std::int64_t y = 0; y < resolution; ++y) {
      for (std::int64_t x = 0; x < resolution; ++x) {
        // 2x2 supersampling for soft edges.
        double v = 0.0;
        for (double sy : {0.25, 0.75}) {
          for (double sx : {0.25, 0.75}) {
            const double px = static_cast<double>(x) + sx;
            const double py = static_cast<double>(y) + sy;
            double s = 0.0;
            if (body.covers(px, py)) {
              s = body.intensity;
              for (const auto& e : inner) {
                if (e.covers(px, py) && body.covers(e.cx, e.cy)) s = e.intensity;
              }
            }
            v += 0.25 * s;
          }
        }
        v += rng.uniform(-0.03, 0.03);
        acc[k][0][y][x] = static_cast<float>(std::clamp(2.0 * v - 1.0, -1.0, 1.0));
      }
    }
  }
  return Dataset(out);
}

Dataset make_dataset(const DatasetSpec& spec) {
  if (spec.source == "phantom") {
    if (spec.channel_mode != ChannelMode::Grayscale) {
      throw InvalidArgument("phantom dataset is grayscale only");
    }
    return phantom_dataset(spec.phantom_count, spec.resolution, spec.seed);
  }
  if (spec.source == "dir") return load_image_dir(spec.directory, spec);
  throw InvalidArgument("unknown data source '" + spec.source + "'");
}

void export_pngs(const Dataset& dataset, const std::filesystem::path& dir, std::int64_t count) {
  std::filesystem::create_directories(dir);
  const auto n = std::min(count, dataset.size());
  for (std::int64_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06lld.png", static_cast<long long>(i));
    io::write_png(dir / name, dataset.images()[i]);
  }
}

}  // namespace hagan::data
