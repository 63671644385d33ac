#include "hagan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include <Eigen/Dense>

#include "hagan/error.hpp"
#include "hagan/image_io.hpp"
#include "hagan/rng.hpp"
#include "hagan/training.hpp"

namespace hagan::eval {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

torch::Tensor random_normal(Rng& rng, at::IntArrayRef shape, double stddev) {
  auto t = torch::empty(shape, torch::kFloat32);
  auto* p = t.data_ptr<float>();
  for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<float>(rng.normal(0.0, stddev));
  return t;
}

MatrixXd to_matrix(const FeatureStats& s) {
  const auto d = s.dim();
  MatrixXd m(d, d);
  for (std::int64_t i = 0; i < d; ++i) {
    for (std::int64_t j = 0; j < d; ++j) m(i, j) = s.covariance[static_cast<std::size_t>(i * d + j)];
  }
  return m;
}

// Symmetric PSD square root with clipping; validates the spectrum first.
MatrixXd psd_sqrt(const MatrixXd& m, const char* which) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (m + m.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError(std::string("eigendecomposition failed for ") + which);
  const auto& values = eig.eigenvalues();
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  if (lo < -1e-8 * std::max(1.0, std::abs(hi))) {
    std::ostringstream os;
    os << "covariance " << which << " is not positive semidefinite: min eigenvalue " << lo
       << ", max eigenvalue " << hi;
    throw NumericalError(os.str());
  }
  const VectorXd root = values.cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

RandomConvExtractor::RandomConvExtractor(std::int64_t channels, std::int64_t resolution,
                                         std::uint64_t seed, std::int64_t dim)
    : channels_(channels), resolution_(resolution), seed_(seed), dim_(dim) {
  if (channels < 1 || dim < 4 || resolution < 0) throw InvalidArgument("RandomConvExtractor: bad sizes");
  Rng rng(seed);
  const std::int64_t widths[] = {channels, dim / 4, dim / 2, dim};
  for (int l = 0; l < 3; ++l) {
    const auto in = widths[l];
    const auto out = widths[l + 1];
    weights_.push_back(random_normal(rng, {out, in, 3, 3}, std::sqrt(2.0 / static_cast<double>(in * 9))));
    biases_.push_back(random_normal(rng, {out}, 0.1));
  }
}

std::string RandomConvExtractor::name() const {
  return "random_conv(d=" + std::to_string(dim_) + ",seed=" + std::to_string(seed_) + ")";
}

torch::Tensor RandomConvExtractor::embed(const torch::Tensor& images) const {
  if (images.dim() != 4 || images.size(1) != channels_) {
    throw InvalidArgument("embed: expected (N, " + std::to_string(channels_) + ", H, W) images");
  }
  if (resolution_ > 0 && (images.size(2) != resolution_ || images.size(3) != resolution_)) {
    throw InvalidArgument("embed: extractor expects " + std::to_string(resolution_) + "x" +
                          std::to_string(resolution_) + " images");
  }
  torch::NoGradGuard no_grad;
  auto x = images.detach().to(torch::kFloat32);
  const std::int64_t strides[] = {1, 2, 2};
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    x = torch::leaky_relu(torch::conv2d(x, weights_[l], biases_[l], strides[l], 1), 0.2);
  }
  return x.mean({2, 3}).to(torch::kFloat64);
}

torch::Tensor embed(const torch::Tensor& images, const FeatureExtractor& extractor,
                    std::int64_t batch_size) {
  std::vector<torch::Tensor> parts;
  for (std::int64_t i = 0; i < images.size(0); i += batch_size) {
    parts.push_back(extractor.embed(images.narrow(0, i, std::min(batch_size, images.size(0) - i))));
  }
  if (parts.empty()) throw InvalidArgument("embed: empty image batch");
  return torch::cat(parts, 0);
}

StatsAccumulator::StatsAccumulator(std::int64_t dim)
    : dim_(dim), mean_(static_cast<std::size_t>(dim), 0.0),
      m2_(static_cast<std::size_t>(dim * dim), 0.0) {
  if (dim < 1) throw InvalidArgument("StatsAccumulator: dim must be >= 1");
}

void StatsAccumulator::add(const torch::Tensor& features) {
  if (features.dim() != 2 || features.size(1) != dim_) {
    throw InvalidArgument("StatsAccumulator::add: expected (N, " + std::to_string(dim_) + ") features");
  }
  if (features.size(0) == 0) return;
  // Batch moments, then a pairwise merge.
  auto f = features.detach().to(torch::kFloat64).contiguous();
  StatsAccumulator batch(dim_);
  batch.count_ = f.size(0);
  auto mean = f.mean(0);
  auto centered = f - mean;
  auto m2 = centered.t().mm(centered).contiguous();
  std::copy_n(mean.data_ptr<double>(), dim_, batch.mean_.begin());
  std::copy_n(m2.data_ptr<double>(), dim_ * dim_, batch.m2_.begin());
  merge(batch);
}

void StatsAccumulator::merge(const StatsAccumulator& other) {
  if (other.dim_ != dim_) throw InvalidArgument("StatsAccumulator::merge: dimension mismatch");
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count_);
  const double nb = static_cast<double>(other.count_);
  const double n = na + nb;
  std::vector<double> delta(static_cast<std::size_t>(dim_));
  for (std::int64_t i = 0; i < dim_; ++i) delta[i] = other.mean_[i] - mean_[i];
  for (std::int64_t i = 0; i < dim_; ++i) {
    for (std::int64_t j = 0; j < dim_; ++j) {
      m2_[i * dim_ + j] += other.m2_[i * dim_ + j] + delta[i] * delta[j] * na * nb / n;
    }
  }
  for (std::int64_t i = 0; i < dim_; ++i) mean_[i] += delta[i] * nb / n;
  count_ += other.count_;
}

FeatureStats StatsAccumulator::finalize() const {
  if (count_ < 2) throw InvalidArgument("feature statistics need at least 2 samples");
  FeatureStats s;
  s.mean = mean_;
  s.covariance.resize(m2_.size());
  const double denom = static_cast<double>(count_ - 1);
  for (std::int64_t i = 0; i < dim_; ++i) {
    for (std::int64_t j = 0; j < dim_; ++j) {
      // Average with the transpose so the result is exactly symmetric.
      s.covariance[i * dim_ + j] = 0.5 * (m2_[i * dim_ + j] + m2_[j * dim_ + i]) / denom;
    }
  }
  s.sample_count = count_;
  return s;
}

FeatureStats compute_stats(const torch::Tensor& features) {
  if (features.dim() != 2) throw InvalidArgument("compute_stats: expected (N, d) features");
  StatsAccumulator acc(features.size(1));
  acc.add(features);
  return acc.finalize();
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  if (a.dim() != b.dim() || a.dim() == 0) throw InvalidArgument("frechet_distance: dimension mismatch");
  const auto d = a.dim();
  double mean_term = 0.0;
  for (std::int64_t i = 0; i < d; ++i) {
    const double diff = a.mean[i] - b.mean[i];
    mean_term += diff * diff;
  }
  const MatrixXd sa = to_matrix(a);
  const MatrixXd sb = to_matrix(b);
  const MatrixXd root_a = psd_sqrt(sa, "a");
  psd_sqrt(sb, "b");  // spectrum check only

  // Tr((Sa Sb)^{1/2}) = Tr((Sa^{1/2} Sb Sa^{1/2})^{1/2}); the inner product is
  // symmetric PSD, so its eigenvalues are real.
  const MatrixXd inner = root_a * sb * root_a;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalError("frechet_distance: eigendecomposition failed");
  const double trace_sqrt = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double value = mean_term + sa.trace() + sb.trace() - 2.0 * trace_sqrt;
  if (!std::isfinite(value)) throw NumericalError("frechet_distance: non-finite result");
  return std::max(0.0, value);
}

double fid_between(const torch::Tensor& images_a, const torch::Tensor& images_b,
                   const FeatureExtractor& extractor) {
  if (images_a.size(0) < extractor.dim() || images_b.size(0) < extractor.dim()) {
    std::cerr << "warning: FID with fewer samples than feature dimensions (" << extractor.dim()
              << ")\n";
  }
  return frechet_distance(compute_stats(embed(images_a, extractor)),
                          compute_stats(embed(images_b, extractor)));
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os.precision(10);
  os << "fid = " << fid << '\n'
     << "real_count = " << real_count << '\n'
     << "fake_count = " << fake_count << '\n'
     << "used_bank = " << (used_bank ? "true" : "false") << '\n'
     << "extractor = " << extractor << '\n'
     << "grid = " << grid_path.string() << '\n';
  return os.str();
}

EvalReport eval_run(const std::filesystem::path& checkpoint, const data::Dataset& dataset,
                    const FeatureExtractor& extractor, std::int64_t sample_count,
                    const EvalOptions& options) {
  if (sample_count < 2 || sample_count > dataset.size()) {
    throw InvalidArgument("eval_run: sample_count must lie in [2, dataset size = " +
                          std::to_string(dataset.size()) + "]");
  }
  auto model = load_sampler(checkpoint);
  if (model.config.resolution != dataset.resolution() || model.config.channels != dataset.channels()) {
    throw DataError("eval_run: dataset does not match the checkpoint's image shape");
  }
  Rng rng(mix_seed(options.seed, 0xe7a1));
  auto z = sample_latent(sample_count, model.config.latent_dim, rng);
  auto fake = model.sample(z, options.use_bank);

  auto order = dataset.epoch_order(options.seed, 0);
  order.resize(static_cast<std::size_t>(sample_count));
  auto real = dataset.gather(order);

  EvalReport report;
  report.fid = fid_between(real, fake, extractor);
  report.real_count = real.size(0);
  report.fake_count = fake.size(0);
  report.used_bank = options.use_bank && model.config.toggles.reverse_skip;
  report.extractor = extractor.name();
  if (!options.grid_path.empty()) {
    const auto n = std::min(options.grid_count, sample_count);
    io::write_png(options.grid_path,
                  io::make_grid(fake.narrow(0, 0, n),
                                static_cast<std::int64_t>(std::ceil(std::sqrt(static_cast<double>(n))))));
    report.grid_path = options.grid_path;
  }
  return report;
}

}  // namespace hagan::eval
