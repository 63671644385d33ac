#include "hagan/generator.hpp"

#include <algorithm>
#include <cmath>

#include "hagan/error.hpp"

namespace hagan {
namespace {

namespace nn = torch::nn;

bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

// Per-position channel normalization; keeps samples independent of the batch.
torch::Tensor pixel_norm(const torch::Tensor& x) {
  return x * torch::rsqrt(x.pow(2).mean(1, /*keepdim=*/true) + 1e-8);
}

torch::Tensor activate(const torch::Tensor& x) {
  return pixel_norm(torch::leaky_relu(x, 0.2));
}

}  // namespace

std::int64_t GeneratorConfig::effective_attention_resolution() const {
  return attention_resolution > 0 ? attention_resolution : resolution / 2;
}

std::int64_t GeneratorConfig::channels_at(std::int64_t r) const {
  return std::min(max_channels, base_channels * (resolution / r));
}

std::vector<std::int64_t> GeneratorConfig::stage_resolutions() const {
  std::vector<std::int64_t> out;
  for (std::int64_t r = 4; r <= resolution; r *= 2) out.push_back(r);
  return out;
}

void GeneratorConfig::validate() const {
  if (latent_dim < 1) throw InvalidArgument("generator: latent_dim must be >= 1");
  if (!is_power_of_two(resolution) || resolution < 8) {
    throw InvalidArgument("generator: resolution must be a power of two >= 8");
  }
  if (base_channels < 1 || max_channels < base_channels || channels < 1) {
    throw InvalidArgument("generator: invalid channel configuration");
  }
  const auto stages = stage_resolutions();
  const auto att = effective_attention_resolution();
  if (std::find(stages.begin(), stages.end(), att) == stages.end()) {
    throw InvalidArgument("generator: attention_resolution " + std::to_string(att) +
                          " is not a feature-map resolution of the upsampling path");
  }
  for (const auto& [r, c] : skip_sockets) {
    if (std::find(stages.begin(), stages.end(), r) == stages.end() || c < 1) {
      throw InvalidArgument("generator: skip resolution " + std::to_string(r) +
                            " is not a feature-map resolution of the upsampling path");
    }
  }
}

torch::Tensor sample_latent(std::int64_t batch, std::int64_t latent_dim, Rng& rng) {
  if (batch < 1 || latent_dim < 1) throw InvalidArgument("sample_latent: sizes must be >= 1");
  return rng.uniform_tensor({batch, latent_dim}, -1.0, 1.0);
}

SelfAttentionImpl::SelfAttentionImpl(std::int64_t channels) {
  const auto inner = std::max<std::int64_t>(1, channels / 8);
  query_ = register_module("query", nn::Conv2d(nn::Conv2dOptions(channels, inner, 1)));
  key_ = register_module("key", nn::Conv2d(nn::Conv2dOptions(channels, inner, 1)));
  value_ = register_module("value", nn::Conv2d(nn::Conv2dOptions(channels, channels, 1)));
  gamma_ = register_parameter("gamma", torch::zeros({1}));
}

std::pair<torch::Tensor, torch::Tensor> SelfAttentionImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0);
  const auto c = x.size(1);
  auto q = query_(x).flatten(2).transpose(1, 2);  // (B, N, c')
  auto k = key_(x).flatten(2);                     // (B, c', N)
  auto v = value_(x).flatten(2);                   // (B, C, N)
  auto attention = torch::softmax(torch::bmm(q, k), /*dim=*/-1);  // (B, Nq, Nk)
  auto attended = torch::bmm(v, attention.transpose(1, 2)).view({b, c, x.size(2), x.size(3)});
  return {x + gamma_ * attended, attention};
}

GeneratorImpl::GeneratorImpl(GeneratorConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto c4 = config_.channels_at(4);
  project_ = register_module("project", nn::Linear(config_.latent_dim, c4 * 16));
  ups_ = register_module("ups", nn::ModuleList());
  for (std::int64_t r = 8; r <= config_.resolution; r *= 2) {
    ups_->push_back(nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(config_.channels_at(r / 2), config_.channels_at(r), 4)
            .stride(2)
            .padding(1)));
  }
  for (const auto& [r, banked] : config_.skip_sockets) {
    const auto cg = config_.channels_at(r);
    fusions_.emplace(r, register_module("fuse_" + std::to_string(r),
                                        nn::Conv2d(nn::Conv2dOptions(cg + banked, cg, 1))));
  }
  attention_ = register_module(
      "attention", SelfAttention(config_.channels_at(config_.effective_attention_resolution())));
  to_image_ = register_module(
      "to_image", nn::Conv2d(nn::Conv2dOptions(config_.channels_at(config_.resolution),
                                               config_.channels, 3)
                                 .padding(1)));
}

torch::Tensor GeneratorImpl::fuse(std::int64_t r, const torch::Tensor& x, const FeatureView* bank) {
  auto it = fusions_.find(r);
  if (it == fusions_.end()) return x;
  const auto banked = config_.skip_sockets.at(r);
  torch::Tensor injected;
  if (bank != nullptr && config_.skip_fusion_enabled) {
    injected = bank->at(r).detach().to(x.dtype()).expand({x.size(0), banked, r, r});
  } else {
    injected = torch::zeros({x.size(0), banked, r, r}, x.options().requires_grad(false));
  }
  return it->second(torch::cat({x, injected}, 1));
}

GeneratorOutput GeneratorImpl::forward(const torch::Tensor& z, const FeatureView* bank) {
  const auto att_res = config_.effective_attention_resolution();
  torch::Tensor attention;
  auto x = activate(project_(z).view({z.size(0), config_.channels_at(4), 4, 4}));
  std::int64_t r = 4;
  auto stage = [&]() {
    x = fuse(r, x, bank);
    if (r == att_res) std::tie(x, attention) = attention_(x);
  };
  stage();
  for (const auto& up : *ups_) {
    x = activate(up->as<nn::ConvTranspose2d>()->forward(x));
    r *= 2;
    stage();
  }
  return GeneratorOutput{torch::tanh(to_image_(x)), attention};
}

GeneratorOutput generate(Generator& generator, const torch::Tensor& z, const FeatureView* bank) {
  const auto& cfg = generator->config();
  if (z.dim() != 2 || z.size(1) != cfg.latent_dim) {
    throw InvalidArgument("generate: latent batch must be (B, " + std::to_string(cfg.latent_dim) + ")");
  }
  if (bank != nullptr) {
    for (const auto& [r, c] : cfg.skip_sockets) {
      if (!bank->contains(r)) {
        throw InvalidArgument("generate: feature bank lacks resolution " + std::to_string(r));
      }
      const auto& t = bank->at(r);
      if (t.dim() != 4 || t.size(0) != 1 || t.size(1) != c || t.size(2) != r || t.size(3) != r) {
        throw InvalidArgument("generate: feature bank level " + std::to_string(r) +
                              " does not match the generator socket");
      }
    }
  }
  return generator->forward(z, bank);
}

}  // namespace hagan
