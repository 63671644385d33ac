#include "hagan/reverse_skip.hpp"

#include "hagan/error.hpp"

namespace hagan {

FeatureView::FeatureView(FeaturePyramid entries) : entries_(std::move(entries)) {}

bool FeatureView::contains(std::int64_t resolution) const {
  return entries_.count(resolution) != 0;
}

const torch::Tensor& FeatureView::at(std::int64_t resolution) const {
  auto it = entries_.find(resolution);
  if (it == entries_.end()) {
    throw InvalidArgument("feature view has no level at resolution " + std::to_string(resolution));
  }
  return it->second;
}

std::vector<std::int64_t> FeatureView::resolutions() const {
  std::vector<std::int64_t> out;
  for (const auto& [r, _] : entries_) out.push_back(r);
  return out;
}

FeatureBank FeatureBank::empty(FeatureLayout layout, double momentum) {
  if (!(momentum > 0.0 && momentum <= 1.0)) {
    throw InvalidArgument("feature bank momentum must lie in (0, 1]");
  }
  FeatureBank bank;
  bank.layout = std::move(layout);
  bank.momentum = momentum;
  return bank;
}

FeatureBank update_bank(const FeatureBank& bank, const FeaturePyramid& real_features,
                        double momentum) {
  if (!(momentum > 0.0 && momentum <= 1.0)) {
    throw InvalidArgument("update_bank: momentum must lie in (0, 1]");
  }
  torch::NoGradGuard no_grad;
  FeatureBank next;
  next.layout = bank.layout;
  next.momentum = momentum;
  next.step_count = bank.step_count + 1;
  for (const auto& [r, channels] : bank.layout) {
    auto it = real_features.find(r);
    if (it == real_features.end()) {
      throw InvalidArgument("update_bank: no real features at resolution " + std::to_string(r));
    }
    const auto& f = it->second;
    if (f.dim() != 4 || f.size(1) != channels || f.size(2) != r || f.size(3) != r) {
      throw InvalidArgument("update_bank: features at resolution " + std::to_string(r) +
                            " have the wrong shape");
    }
    auto batch_mean = f.detach().to(torch::kFloat32).mean(0, /*keepdim=*/true);
    auto prev = bank.entries.find(r);
    if (prev == bank.entries.end() || momentum == 1.0) {
      next.entries[r] = batch_mean.clone();
    } else {
      next.entries[r] = (1.0 - momentum) * prev->second + momentum * batch_mean;
    }
  }
  return next;
}

FeatureView snapshot_for_generation(const FeatureBank& bank) {
  FeaturePyramid out;
  for (const auto& [r, channels] : bank.layout) {
    auto it = bank.entries.find(r);
    out[r] = it == bank.entries.end() ? torch::zeros({1, channels, r, r}, torch::kFloat32)
                                      : it->second.detach().clone();
  }
  return FeatureView(std::move(out));
}

FeatureView zero_view(const FeatureLayout& layout) {
  FeaturePyramid out;
  for (const auto& [r, channels] : layout) out[r] = torch::zeros({1, channels, r, r}, torch::kFloat32);
  return FeatureView(std::move(out));
}

}  // namespace hagan
