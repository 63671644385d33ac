#include "hagan/discriminator.hpp"

#include <algorithm>

#include "hagan/error.hpp"

namespace hagan {
namespace {

namespace nn = torch::nn;

std::int64_t image_width(const DiscriminatorConfig& c, std::int64_t layer) {
  return std::min(c.max_channels, c.base_channels << layer);
}

std::vector<torch::Tensor> collect(const nn::Module& m) {
  return m.parameters();
}

}  // namespace

FeatureLayout DiscriminatorConfig::feature_layout() const {
  FeatureLayout layout;
  auto r = resolution;
  for (std::int64_t l = 0; l < image_layers; ++l) {
    r /= 2;
    layout[r] = image_width(*this, l);
  }
  return layout;
}

void DiscriminatorConfig::validate() const {
  if (resolution < 2 || (resolution & (resolution - 1)) != 0) {
    throw InvalidArgument("discriminator: resolution must be a power of two");
  }
  if (image_layers < 1 || (resolution >> image_layers) < 1) {
    throw InvalidArgument("discriminator: " + std::to_string(image_layers) +
                          " stride-2 layers do not fit resolution " + std::to_string(resolution));
  }
  if (base_channels < 2 || max_channels < base_channels || channels < 1) {
    throw InvalidArgument("discriminator: invalid channel configuration");
  }
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto base = config_.base_channels;
  std::int64_t branch_in = config_.channels;
  if (config_.shared_stem) {
    stem_ = register_module("stem", nn::Conv2d(nn::Conv2dOptions(config_.channels, base, 3).padding(1)));
    branch_in = base;
  }

  image_layers_ = register_module("image", nn::ModuleList());
  std::int64_t in = branch_in;
  for (std::int64_t l = 0; l < config_.image_layers; ++l) {
    const auto out = image_width(config_, l);
    image_layers_->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1)));
    in = out;
  }
  const auto last_res = config_.resolution >> config_.image_layers;
  image_head_ = register_module("image_head", nn::Linear(in * last_res * last_res, 1));

  // base -> base/2 -> 1 channels at constant spatial size.
  pixel_layers_ = register_module("pixel", nn::ModuleList());
  pixel_layers_->push_back(nn::Conv2d(nn::Conv2dOptions(branch_in, base, 3).padding(1)));
  pixel_layers_->push_back(nn::Conv2d(nn::Conv2dOptions(base, base / 2, 3).padding(1)));
  pixel_layers_->push_back(nn::Conv2d(nn::Conv2dOptions(base / 2, 1, 3).padding(1)));
}

DiscOutput DiscriminatorImpl::forward(const torch::Tensor& images, DiscriminateOptions options) {
  auto trunk = images;
  if (stem_) trunk = torch::leaky_relu(stem_(images), 0.2);

  DiscOutput out;
  auto h = trunk;
  auto r = config_.resolution;
  for (const auto& layer : *image_layers_) {
    h = torch::leaky_relu(layer->as<nn::Conv2d>()->forward(h), 0.2);
    r /= 2;
    if (options.capture_features) out.features[r] = h;
  }
  out.img_score = image_head_(h.flatten(1)).squeeze(1);

  if (options.pixel) {
    auto p = trunk;
    const auto n = pixel_layers_->size();
    for (std::size_t i = 0; i < n; ++i) {
      p = pixel_layers_[i]->as<nn::Conv2d>()->forward(p);
      if (i + 1 < n) p = torch::leaky_relu(p, 0.2);
    }
    out.pixel_map = p;
  }
  return out;
}

std::vector<torch::Tensor> DiscriminatorImpl::stem_parameters() const {
  return stem_ ? collect(*stem_) : std::vector<torch::Tensor>{};
}

std::vector<torch::Tensor> DiscriminatorImpl::image_parameters() const {
  auto out = collect(*image_layers_);
  auto head = collect(*image_head_);
  out.insert(out.end(), head.begin(), head.end());
  return out;
}

std::vector<torch::Tensor> DiscriminatorImpl::pixel_parameters() const {
  return collect(*pixel_layers_);
}

DiscOutput discriminate(Discriminator& discriminator, const torch::Tensor& images,
                        DiscriminateOptions options) {
  const auto& cfg = discriminator->config();
  if (images.dim() != 4 || images.size(1) != cfg.channels || images.size(2) != cfg.resolution ||
      images.size(3) != cfg.resolution) {
    throw InvalidArgument("discriminate: expected (B, " + std::to_string(cfg.channels) + ", " +
                          std::to_string(cfg.resolution) + ", " + std::to_string(cfg.resolution) +
                          ") images");
  }
  return discriminator->forward(images, options);
}

}  // namespace hagan
