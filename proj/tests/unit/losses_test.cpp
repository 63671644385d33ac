#include <doctest.h>

#include <random>

#include "hagan/error.hpp"
#include "hagan/losses.hpp"
#include "hagan/train_config.hpp"
#include "hagan/training.hpp"
#include "oracles.hpp"

using namespace hagan;

namespace {

DiscOutput scores(std::vector<float> img, torch::Tensor pixel = {}) {
  DiscOutput o;
  o.img_score = torch::tensor(img);
  o.pixel_map = pixel;
  return o;
}

TrainConfig probe_config(int64_t resolution) {
  TrainConfig c;
  c.resolution = resolution;
  c.channels = 1;
  c.latent_dim = 8;
  c.batch_size = 3;
  c.g_base_channels = 4;
  c.d_base_channels = 4;
  c.max_channels = 16;
  c.d_image_layers = 2;
  c.aug = AugPolicy::none();
  return c;
}

void set_attention_gate(Generator& g, double value) {
  torch::NoGradGuard guard;
  for (auto& p : g->named_parameters()) {
    if (p.key().find("gamma") != std::string::npos) p.value().fill_(value);
  }
}

// Compares autograd with central differences on a spread of elements of
// every parameter tensor whose gradient is non-trivial.
void check_gradients(const std::vector<torch::Tensor>& params, const std::function<torch::Tensor()>& loss) {
  for (auto p : params) {
    if (p.grad().defined()) p.grad().zero_();
  }
  loss().backward();
  int checked = 0;
  for (auto p : params) {
    if (!p.grad().defined()) continue;
    auto grad = p.grad().clone().view(-1);
    const auto n = grad.numel();
    for (int64_t idx : {int64_t{0}, n / 3, n - 1}) {
      const double analytic = grad[idx].item<double>();
      const double numeric = oracle::central_difference(p, idx, 1e-6, [&] { return loss().item<double>(); });
      const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      CHECK(std::abs(analytic - numeric) / scale < 1e-2);
      ++checked;
    }
  }
  CHECK(checked > 0);
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("least-squares terms match hand-computed values") {
  auto real = scores({1.0f, 0.5f}, torch::full({2, 1, 2, 2}, 0.5f));
  auto fake = scores({0.0f, 1.0f}, torch::full({2, 1, 2, 2}, 0.25f));
  auto d = adv_d_loss(real, fake);
  CHECK(d.img.item<double>() == doctest::Approx((0.0 + 0.25) / 2 + (0.0 + 1.0) / 2));
  CHECK(d.pixel.item<double>() == doctest::Approx(0.25 + 0.0625));
  auto g = adv_g_loss(fake);
  CHECK(g.img.item<double>() == doctest::Approx((1.0 + 0.0) / 2));
  CHECK(g.pixel.item<double>() == doctest::Approx(0.5625));
  CHECK(adv_d_loss(scores({1.f}), scores({0.f})).pixel.item<double>() == 0.0);
}

TEST_CASE("totals apply the weights") {
  LossWeights w{0.5, 2.0, 3.0, 0.1};
  DLossParts parts{torch::tensor(1.0), torch::tensor(2.0), torch::tensor(3.0), torch::tensor(4.0)};
  CHECK(total_d_loss(parts, w).item<double>() == doctest::Approx(1.0 + 0.5 * 2.0 + 2.0 * (3.0 + 0.1 * 4.0)));
  CHECK(total_g_loss({torch::tensor(1.0), torch::tensor(2.0)}, w).item<double>() == doctest::Approx(7.0));
  CHECK(total_d_loss({torch::tensor(1.5), {}, {}, {}}, w).item<double>() == doctest::Approx(1.5));
  LossWeights zero{0, 0, 0, 0};
  CHECK(total_d_loss(parts, zero).item<double>() == 1.0);
  LossWeights bad{-1, 0, 0, 0};
  CHECK_THROWS_AS(total_d_loss(parts, bad), InvalidArgument);
}

TEST_CASE("degenerate masks: pixel consistency is exactly zero and labels are 1 / 0") {
  torch::manual_seed(3);
  auto config = probe_config(16);
  Discriminator d(config.discriminator_config());
  auto real = torch::rand({4, 1, 16, 16}) * 2 - 1;
  auto fake = torch::rand({4, 1, 16, 16}) * 2 - 1;
  auto sal = mix::SaliencyMap{torch::rand({4, 1, 16, 16}) + 1e-3};
  auto real_out = discriminate(d, real);
  auto fake_out = discriminate(d, fake);
  for (bool ones : {true, false}) {
    auto mask = mix::constant_mask(4, 16, 16, ones);
    auto label = mix::allocate_label(mask, sal, 0.5);
    auto mixed_out = discriminate(d, mix::attnmix_compose(real, fake, mask));
    auto cons = consistency_loss(mixed_out, real_out, fake_out, mask, label);
    CHECK(cons.pixel_term.item<double>() == 0.0);
    CHECK((label.lambda == (ones ? 1.0 : 0.0)).all().item<bool>());
    const auto& ref = ones ? real_out : fake_out;
    auto expected = (ref.img_score.to(torch::kFloat64) - (ones ? 1.0 : 0.0)).pow(2).mean().item<double>();
    CHECK(cons.image_term.item<double>() == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("consistency rejects labels built for another mask") {
  Rng rng(0);
  auto m1 = mix::sample_cut_mask(2, 8, 8, {}, rng);
  auto m2 = mix::sample_cut_mask(2, 8, 8, {}, rng);
  auto sal = mix::SaliencyMap{torch::ones({2, 1, 8, 8}) / 64};
  auto label = mix::allocate_label(m1, sal, 0.5);
  auto o = scores({0.f, 0.f}, torch::zeros({2, 1, 8, 8}));
  CHECK_THROWS_AS(consistency_loss(o, o, o, m2, label), InvalidArgument);
  CHECK_THROWS_AS(consistency_loss(scores({0.f}), o, o, m1, label), InvalidArgument);
}

TEST_CASE("masked L2 feature consistency matches the oracle") {
  std::mt19937_64 gen(8);
  auto mask = mix::mask_from_values(oracle::random_bit_mask(2, 8, 8, gen));
  FeaturePyramid mixf{{4, torch::randn({2, 3, 4, 4})}, {2, torch::randn({2, 5, 2, 2})}};
  FeaturePyramid realf{{4, torch::randn({2, 3, 4, 4})}, {2, torch::randn({2, 5, 2, 2})}};
  FeaturePyramid fakef{{4, torch::randn({2, 3, 4, 4})}, {2, torch::randn({2, 5, 2, 2})}};
  double expected = 0;
  for (int64_t r : {4, 2}) {
    auto m = oracle::majority(mask.values, r, r);
    double s = 0;
    for (int64_t b = 0; b < 2; ++b)
      for (int64_t y = 0; y < r; ++y)
        for (int64_t x = 0; x < r; ++x) {
          double dr = 0, df = 0;
          for (int64_t c = 0; c < mixf[r].size(1); ++c) {
            const double vm = mixf[r][b][c][y][x].item<double>();
            dr += std::pow(vm - realf[r][b][c][y][x].item<double>(), 2);
            df += std::pow(vm - fakef[r][b][c][y][x].item<double>(), 2);
          }
          const double mm = m[b][0][y][x].item<double>();
          s += mm * dr + (1 - mm) * df;
        }
    expected += s / (2.0 * r * r);
  }
  auto got = feature_consistency_loss(mixf, realf, fakef, mask).item<double>();
  CHECK(got == doctest::Approx(expected).epsilon(1e-5));
  CHECK_THROWS_AS(feature_consistency_loss(mixf, {{4, realf[4]}}, fakef, mask), InvalidArgument);
}

TEST_CASE("InfoNCE variant prefers the masked target") {
  std::mt19937_64 gen(9);
  auto mask = mix::mask_from_values(oracle::random_bit_mask(2, 4, 4, gen));
  auto fr = torch::randn({2, 6, 4, 4});
  auto ff = torch::randn({2, 6, 4, 4});
  auto m = mask.values;
  auto positive = m * fr + (1 - m) * ff;
  auto negative = m * ff + (1 - m) * fr;
  auto good = feature_consistency_loss({{4, positive}}, {{4, fr}}, {{4, ff}}, mask, FeatureConsistencyMode::InfoNce);
  auto bad = feature_consistency_loss({{4, negative}}, {{4, fr}}, {{4, ff}}, mask, FeatureConsistencyMode::InfoNce);
  CHECK(good.item<double>() < bad.item<double>());
  CHECK(parse_feature_mode(to_string(FeatureConsistencyMode::InfoNce)) == FeatureConsistencyMode::InfoNce);
}

TEST_CASE("consistency gradients reach D and never G") {
  torch::manual_seed(4);
  auto config = probe_config(16);
  config.aug = AugPolicy::defaults();
  Generator g(config.generator_config());
  Discriminator d(config.discriminator_config());
  set_attention_gate(g, 0.5);
  Rng rng(4);
  auto z = sample_latent(4, config.latent_dim, rng);
  auto real = torch::rand({4, 1, 16, 16}) * 2 - 1;
  auto gen = generate(g, z);
  auto obj = discriminator_objective(d, config, real, gen, true, rng);
  REQUIRE(obj.parts.cons.defined());
  REQUIRE(obj.parts.feature_cons.defined());
  auto g_params = g->parameters();
  auto d_params = d->parameters();
  for (const auto& term : {obj.parts.cons, obj.parts.feature_cons, obj.total}) {
    auto gg = torch::autograd::grad({term}, g_params, {}, true, false, true);
    for (const auto& t : gg) CHECK((!t.defined() || t.abs().sum().item<double>() == 0.0));
    auto dg = torch::autograd::grad({term}, d_params, {}, true, false, true);
    double mass = 0;
    for (const auto& t : dg) mass += t.defined() ? t.abs().sum().item<double>() : 0.0;
    CHECK(mass > 0);
  }
}

// Pixel and feature consistency targets are stop-gradient copies of the real
// and fake outputs, so the full objective is checked with those terms off and
// the pixel term separately against fixed targets.
TEST_CASE("finite differences: discriminator objective, float64, 8x8") {
  torch::manual_seed(5);
  auto config = probe_config(8);
  config.toggles.pixel_branch = false;
  config.weights.feature_cons_weight = 0.0;
  Generator g(config.generator_config());
  Discriminator d(config.discriminator_config());
  g->to(torch::kFloat64);
  d->to(torch::kFloat64);
  set_attention_gate(g, 0.5);
  auto z = (torch::rand({3, 8}) * 2 - 1).to(torch::kFloat64);
  auto real = (torch::rand({3, 1, 8, 8}) * 2 - 1).to(torch::kFloat64);
  const Rng base(11);
  check_gradients(d->parameters(), [&] {
    Rng r = base;
    auto gen = generate(g, z);
    return discriminator_objective(d, config, real, gen, true, r).total;
  });
}

TEST_CASE("finite differences: pixel consistency against fixed targets") {
  torch::manual_seed(7);
  std::mt19937_64 gen(7);
  auto mask = mix::mask_from_values(oracle::random_bit_mask(3, 8, 8, gen));
  auto sal = mix::SaliencyMap{torch::rand({3, 1, 8, 8}) + 1e-3};
  auto label = mix::allocate_label(mask, sal, 0.5);
  DiscOutput real_out, fake_out, mixed_out;
  real_out.img_score = torch::rand({3}, torch::kFloat64);
  fake_out.img_score = torch::rand({3}, torch::kFloat64);
  real_out.pixel_map = torch::rand({3, 1, 8, 8}, torch::kFloat64);
  fake_out.pixel_map = torch::rand({3, 1, 8, 8}, torch::kFloat64);
  auto img = torch::rand({3}, torch::kFloat64).requires_grad_();
  auto pix = torch::rand({3, 1, 8, 8}, torch::kFloat64).requires_grad_();
  check_gradients({img, pix}, [&] {
    DiscOutput m;
    m.img_score = img;
    m.pixel_map = pix;
    return consistency_loss(m, real_out, fake_out, mask, label).total();
  });
}

TEST_CASE("finite differences: generator objective, float64, 8x8") {
  torch::manual_seed(6);
  auto config = probe_config(8);
  Generator g(config.generator_config());
  Discriminator d(config.discriminator_config());
  g->to(torch::kFloat64);
  d->to(torch::kFloat64);
  set_attention_gate(g, 0.5);
  auto z = (torch::rand({3, 8}) * 2 - 1).to(torch::kFloat64);
  FeaturePyramid feats{{4, torch::randn({3, 4, 4, 4}, torch::kFloat64)}};
  auto bank = update_bank(FeatureBank::empty(config.skip_layout(), 0.1), feats, 0.1);
  auto view = snapshot_for_generation(bank);
  const Rng base(12);
  check_gradients(g->parameters(), [&] {
    Rng r = base;
    return generator_objective(d, config, generate(g, z, &view).images, false, r).total;
  });
}

}  // TEST_SUITE
