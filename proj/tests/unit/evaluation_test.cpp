#include <doctest.h>

#include <random>

#include "hagan/error.hpp"
#include "hagan/evaluation.hpp"
#include "oracles.hpp"

using namespace hagan;

TEST_SUITE("evaluation") {

TEST_CASE("frechet distance: identity, symmetry, nonnegativity") {
  torch::manual_seed(0);
  auto a = eval::compute_stats(torch::randn({200, 6}, torch::kFloat64));
  auto b = eval::compute_stats(torch::randn({200, 6}, torch::kFloat64) * 1.5 + 0.3);
  CHECK(std::abs(eval::frechet_distance(a, a)) < 1e-8);
  const double ab = eval::frechet_distance(a, b), ba = eval::frechet_distance(b, a);
  CHECK(std::abs(ab - ba) < 1e-9);
  CHECK(ab > 0);
}

TEST_CASE("one-dimensional closed form") {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> xa(50), xb(60);
    for (auto& v : xa) v = 2.0 * n(gen) + 1.0;
    for (auto& v : xb) v = 0.5 * n(gen) - 1.0;
    auto a = eval::compute_stats(torch::tensor(xa, torch::kFloat64).view({-1, 1}));
    auto b = eval::compute_stats(torch::tensor(xb, torch::kFloat64).view({-1, 1}));
    const double expected = oracle::frechet_1d(a.mean[0], std::sqrt(a.covariance[0]), b.mean[0],
                                               std::sqrt(b.covariance[0]));
    CHECK(std::abs(eval::frechet_distance(a, b) - expected) < 1e-6);
  }
}

TEST_CASE("invariant under a shared orthogonal rotation") {
  torch::manual_seed(2);
  auto xa = torch::randn({300, 5}, torch::kFloat64);
  auto xb = torch::randn({300, 5}, torch::kFloat64).matmul(torch::diag(torch::tensor({1.0, 2.0, 0.5, 1.0, 3.0}, torch::kFloat64))) + 0.2;
  auto q = std::get<0>(torch::linalg_qr(torch::randn({5, 5}, torch::kFloat64)));
  const double before = eval::frechet_distance(eval::compute_stats(xa), eval::compute_stats(xb));
  const double after = eval::frechet_distance(eval::compute_stats(xa.matmul(q)), eval::compute_stats(xb.matmul(q)));
  CHECK(std::abs(before - after) < 1e-6);
}

TEST_CASE("streaming statistics agree with the direct computation") {
  torch::manual_seed(3);
  auto x = torch::randn({97, 4}, torch::kFloat64) * 3 + 1;
  auto direct = eval::compute_stats(x);
  eval::StatsAccumulator a(4), b(4), c(4);
  a.add(x.slice(0, 0, 10));
  b.add(x.slice(0, 10, 50));
  c.add(x.slice(0, 50, 97));
  b.merge(c);
  a.merge(b);
  auto merged = a.finalize();
  CHECK(merged.sample_count == 97);
  auto cov = torch::cov(x.t());
  for (int i = 0; i < 4; ++i) {
    CHECK(merged.mean[i] == doctest::Approx(direct.mean[i]).epsilon(1e-12));
    for (int j = 0; j < 4; ++j) {
      CHECK(merged.covariance[i * 4 + j] == doctest::Approx(cov[i][j].item<double>()).epsilon(1e-10));
      CHECK(merged.covariance[i * 4 + j] == merged.covariance[j * 4 + i]);
    }
  }
}

TEST_CASE("errors") {
  auto a = eval::compute_stats(torch::randn({10, 3}, torch::kFloat64));
  auto b = eval::compute_stats(torch::randn({10, 2}, torch::kFloat64));
  CHECK_THROWS_AS(eval::frechet_distance(a, b), InvalidArgument);
  auto bad = a;
  bad.covariance[0] = -5.0;
  CHECK_THROWS_AS(eval::frechet_distance(bad, a), NumericalError);
  CHECK_THROWS_AS(eval::compute_stats(torch::randn({1, 3}, torch::kFloat64)), InvalidArgument);
}

TEST_CASE("random conv extractor is deterministic per seed") {
  eval::RandomConvExtractor e1(1, 16), e2(1, 16), e3(1, 16, 7);
  auto x = torch::rand({5, 1, 16, 16}) * 2 - 1;
  auto f1 = e1.embed(x);
  CHECK(f1.sizes() == torch::IntArrayRef({5, 64}));
  CHECK(f1.dtype() == torch::kFloat64);
  CHECK(torch::equal(f1, e2.embed(x)));
  CHECK_FALSE(torch::equal(f1, e3.embed(x)));
  CHECK(torch::allclose(eval::embed(x, e1, 2), f1, 1e-5, 1e-6));
  CHECK_THROWS_AS(e1.embed(torch::rand({2, 3, 16, 16})), InvalidArgument);
  CHECK_THROWS_AS(e1.embed(torch::rand({2, 1, 8, 8})), InvalidArgument);
}

TEST_CASE("FID separates distributions") {
  torch::manual_seed(4);
  eval::RandomConvExtractor e(1, 16);
  auto a = torch::rand({128, 1, 16, 16}) * 2 - 1;
  auto a2 = torch::rand({128, 1, 16, 16}) * 2 - 1;
  auto b = torch::rand({128, 1, 16, 16}) - 1;
  CHECK(eval::fid_between(a, a, e) == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(eval::fid_between(a, a2, e) < eval::fid_between(a, b, e));
}

}  // TEST_SUITE
