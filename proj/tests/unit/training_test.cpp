#include <doctest.h>

#include <fstream>
#include <sstream>

#include "hagan/ablation.hpp"
#include "hagan/error.hpp"
#include "hagan/training.hpp"
#include "oracles.hpp"

using namespace hagan;

namespace {

TrainConfig tiny_config() {
  auto c = desk_config(16);
  c.batch_size = 8;
  c.latent_dim = 16;
  c.g_base_channels = 8;
  c.d_base_channels = 8;
  c.max_channels = 32;
  c.total_epochs = 4;
  c.warmup_epochs = 2;
  c.checkpoint_every = 0;
  c.grid_samples = 4;
  return c;
}

const data::Dataset& tiny_data() {
  static const data::Dataset d = data::phantom_dataset(32, 16, 0);
  return d;
}

std::vector<torch::Tensor> snapshot(const std::vector<torch::Tensor>& params) {
  std::vector<torch::Tensor> out;
  for (const auto& p : params) out.push_back(p.detach().clone());
  return out;
}

bool same(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!torch::equal(a[i], b[i].detach())) return false;
  }
  return true;
}

bool all_changed(const std::vector<torch::Tensor>& before, const std::vector<torch::Tensor>& after) {
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (torch::equal(before[i], after[i].detach())) return false;
  }
  return true;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("phase schedule follows the toggles") {
  auto c = tiny_config();
  Trainer t(c);
  CHECK(t.phase_for_epoch(0) == Phase::Warmup);
  CHECK(t.phase_for_epoch(1) == Phase::Warmup);
  CHECK(t.phase_for_epoch(2) == Phase::Augmented);
  c.toggles.two_phase = false;
  CHECK(Trainer(c).phase_for_epoch(0) == Phase::Augmented);
  c.toggles.attnmix = false;
  CHECK(Trainer(c).phase_for_epoch(3) == Phase::Warmup);
}

TEST_CASE("step metrics carry phase flags and label statistics") {
  Trainer t(tiny_config());
  auto batch = tiny_data().gather({0, 1, 2, 3, 4, 5, 6, 7});
  auto w = t.train_step(batch, Phase::Warmup, 0);
  CHECK_FALSE(w.augmented);
  CHECK_FALSE(w.consistency);
  CHECK_FALSE(w.lambda_mean.has_value());
  CHECK(w.d_cons_img == 0.0);
  auto a = t.train_step(batch, Phase::Augmented, 2);
  CHECK(a.augmented);
  CHECK(a.consistency);
  REQUIRE(a.lambda_mean.has_value());
  CHECK(*a.lambda_mean >= 0.0);
  CHECK(*a.lambda_mean <= 1.0);
  CHECK(*a.lambda0_mean >= 0.15);
  CHECK(*a.lambda0_mean <= 0.85);
  CHECK(a.d_cons_img > 0.0);
  CHECK(a.d_feature > 0.0);
  CHECK(a.step == 1);
  CHECK(t.step() == 2);
  auto back = StepMetrics::from_json(a.to_json());
  CHECK(back.to_json() == a.to_json());
}

TEST_CASE("base model: only image branch and generator parameters move") {
  auto c = tiny_config();
  c.toggles = {false, false, false, false};
  Trainer t(c);
  auto& d = t.discriminator();
  auto pixel_before = snapshot(d->pixel_parameters());
  auto image_before = snapshot(d->image_parameters());
  auto g_before = snapshot(t.generator()->parameters());
  t.train_step(tiny_data().gather({0, 1, 2, 3}), t.phase_for_epoch(0), 0);
  CHECK(same(pixel_before, d->pixel_parameters()));
  CHECK(all_changed(image_before, d->image_parameters()));
  CHECK_FALSE(same(g_before, t.generator()->parameters()));
  CHECK(t.bank().is_empty());
}

TEST_CASE("reverse skip off: bank never updates and sampling ignores it") {
  auto c = tiny_config();
  c.toggles.reverse_skip = false;
  Trainer t(c);
  for (int i = 0; i < 3; ++i) t.train_step(tiny_data().gather({0, 1, 2, 3}), Phase::Augmented, 2);
  CHECK(t.bank().is_empty());
  auto z = t.grid_latent();
  CHECK(torch::equal(t.sample(z, true), t.sample(z, false)));
}

TEST_CASE("reverse skip on: bank fills and changes samples") {
  Trainer t(tiny_config());
  t.train_step(tiny_data().gather({0, 1, 2, 3}), Phase::Warmup, 0);
  CHECK(t.bank().entries.size() == t.config().skip_layout().size());
  CHECK(t.bank().step_count == 1);
}

TEST_CASE("consistency terms with zero weight leave the generator update unchanged") {
  auto c = tiny_config();
  c.weights.beta2 = 0.0;
  c.aug = AugPolicy::none();
  Trainer warm(c), aug(c);
  auto batch = tiny_data().gather({0, 1, 2, 3});
  warm.train_step(batch, Phase::Warmup, 0);
  auto m = aug.train_step(batch, Phase::Augmented, 2);
  CHECK(m.lambda_mean.has_value());
  CHECK(same(snapshot(warm.generator()->parameters()), aug.generator()->parameters()));
  CHECK(same(snapshot(warm.discriminator()->parameters()), aug.discriminator()->parameters()));
}

TEST_CASE("one discriminator step lowers its loss on a separable toy problem") {
  torch::manual_seed(0);
  DiscriminatorConfig dc;
  dc.resolution = 8;
  dc.base_channels = 4;
  dc.max_channels = 8;
  dc.image_layers = 2;
  Discriminator d(dc);
  torch::optim::Adam opt(d->parameters(), torch::optim::AdamOptions(1e-3).betas({0.5, 0.999}));
  auto real = torch::full({8, 1, 8, 8}, 0.8);
  auto fake = torch::full({8, 1, 8, 8}, -0.8);
  auto loss = [&] {
    auto l = adv_d_loss(discriminate(d, real), discriminate(d, fake));
    return l.img + l.pixel;
  };
  auto before = loss();
  opt.zero_grad();
  before.backward();
  opt.step();
  CHECK(loss().item<double>() < before.item<double>());
}

TEST_CASE("non-finite loss aborts with a diagnostic before any update") {
  Trainer t(tiny_config());
  auto batch = tiny_data().gather({0, 1, 2, 3}).clone();
  batch[0][0][0][0] = std::numeric_limits<float>::quiet_NaN();
  auto d_before = snapshot(t.discriminator()->parameters());
  try {
    t.train_step(batch, Phase::Warmup, 0);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("seed 0") != std::string::npos);
    CHECK(msg.find("step 0") != std::string::npos);
    CHECK(msg.find("d_") != std::string::npos);
  }
  CHECK(same(d_before, t.discriminator()->parameters()));
  CHECK_THROWS_AS(t.train_step(torch::zeros({2, 1, 8, 8}), Phase::Warmup, 0), InvalidArgument);
}

TEST_CASE("checkpoints round-trip exactly and continue identically") {
  oracle::TempDir dir("ckpt");
  Trainer a(tiny_config());
  auto batch = tiny_data().gather({0, 1, 2, 3, 4, 5, 6, 7});
  a.train_step(batch, Phase::Warmup, 0);
  a.train_step(batch, Phase::Augmented, 2);
  a.save(dir.path / "a.pt");
  auto b = Trainer::load(dir.path / "a.pt");
  CHECK(b.step() == 2);
  CHECK(same(snapshot(a.generator()->parameters()), b.generator()->parameters()));
  CHECK(same(snapshot(a.discriminator()->parameters()), b.discriminator()->parameters()));
  for (const auto& [r, t] : a.bank().entries) CHECK(torch::equal(t, b.bank().entries.at(r)));
  CHECK(a.rng().state() == b.rng().state());
  auto ma = a.train_step(batch, Phase::Augmented, 2);
  auto mb = b.train_step(batch, Phase::Augmented, 2);
  CHECK(ma.to_json() == mb.to_json());
  CHECK(same(snapshot(a.generator()->parameters()), b.generator()->parameters()));

  auto s = load_sampler(dir.path / "a.pt");
  CHECK(s.bank.step_count == 2);
  { std::ofstream junk(dir.path / "junk.pt"); junk << "nope"; }
  CHECK_THROWS_AS(Trainer::load(dir.path / "junk.pt"), DataError);
  CHECK_THROWS_AS(Trainer::load(dir.path / "missing.pt"), InvalidArgument);
}

TEST_CASE("train writes the fixed layout and is seed-deterministic") {
  oracle::TempDir dir("train");
  auto c = tiny_config();
  c.checkpoint_every = 2;
  auto art = train(c, tiny_data(), dir.path / "r1");
  CHECK(art.steps_per_epoch == 4);
  CHECK(art.total_steps == 16);
  CHECK(art.metrics.size() == 16);
  for (const char* p : {"config.resolved", "metrics.ndjson", "checkpoints/final.pt", "checkpoints/epoch_0002.pt",
                        "grids/final.png", "grids/epoch_0002.png"}) {
    CHECK(std::filesystem::exists(dir.path / "r1" / p));
  }
  train(c, tiny_data(), dir.path / "r2");
  CHECK(slurp(dir.path / "r1" / "metrics.ndjson") == slurp(dir.path / "r2" / "metrics.ndjson"));
  auto logged = read_metrics(dir.path / "r1" / "metrics.ndjson");
  REQUIRE(logged.size() == 16);
  for (const auto& m : logged) {
    CHECK(m.augmented == (m.epoch >= 2));
    CHECK(m.consistency == (m.epoch >= 2));
  }
  auto resolved = load_run_config(dir.path / "r1" / "config.resolved");
  CHECK(to_config_text(resolved) == to_config_text(RunConfig{c, {}}));
}

TEST_CASE("resumed run matches the uninterrupted run") {
  oracle::TempDir dir("resume");
  auto c = tiny_config();
  c.max_steps = 10;
  auto full = train(c, tiny_data(), dir.path / "full");
  auto first = c;
  first.max_steps = 5;
  auto part = train(first, tiny_data(), dir.path / "part");
  TrainOptions opts;
  opts.resume_from = part.final_checkpoint;
  auto rest = train(c, tiny_data(), dir.path / "part", opts);
  REQUIRE(rest.metrics.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& a = full.metrics[i + 5];
    const auto& b = rest.metrics[i];
    CHECK(a.step == b.step);
    CHECK(b.d_total == doctest::Approx(a.d_total).epsilon(1e-4));
    CHECK(b.g_total == doctest::Approx(a.g_total).epsilon(1e-4));
  }
  CHECK(read_metrics(dir.path / "part" / "metrics.ndjson").size() == 10);
}

TEST_CASE("boundary cases of the warmup length") {
  auto c = tiny_config();
  c.warmup_epochs = c.total_epochs;
  TrainOptions opts;
  opts.write_artifacts = false;
  for (const auto& m : train(c, tiny_data(), {}, opts).metrics) CHECK_FALSE(m.augmented);
  c.warmup_epochs = 0;
  c.total_epochs = 1;
  for (const auto& m : train(c, tiny_data(), {}, opts).metrics) CHECK(m.consistency);
}

TEST_CASE("dataset mismatch is rejected before training") {
  oracle::TempDir dir("mismatch");
  auto c = tiny_config();
  c.resolution = 32;
  CHECK_THROWS_AS(train(c, tiny_data(), dir.path / "x"), InvalidArgument);
  CHECK_FALSE(std::filesystem::exists(dir.path / "x" / "metrics.ndjson"));
}

}  // TEST_SUITE

TEST_SUITE("ablation") {

TEST_CASE("schedule accumulates one module per row") {
  auto rows = ablation_schedule();
  REQUIRE(rows.size() == 5);
  auto count = [](const ModuleToggles& t) { return int(t.attnmix) + t.reverse_skip + t.pixel_branch + t.two_phase; };
  for (int i = 0; i < 5; ++i) CHECK(count(rows[i].toggles) == i);
  CHECK(rows.front().name == "base");
  CHECK(rows.back().toggles.two_phase);
}

TEST_CASE("row configs derive epochs and warmup from the step budget") {
  AblationOptions opts;
  opts.steps = 100;
  opts.warmup_fraction = 0.5;
  auto c = ablation_config(opts, ablation_schedule().back(), 7, 64);  // 2 steps per epoch
  CHECK(c.seed == 7);
  CHECK(c.max_steps == 100);
  CHECK(c.total_epochs == 50);
  CHECK(c.warmup_epochs == 25);
  opts.warmup_fraction = 1.5;
  CHECK_THROWS_AS(ablation_config(opts, ablation_schedule().back(), 7, 64), InvalidArgument);
}

TEST_CASE("held-out phantoms are a separate draw of the same shape") {
  data::DatasetSpec spec;
  spec.resolution = 16;
  auto train_set = data::make_dataset(spec);
  auto ref = held_out_phantoms(spec, 8);
  CHECK(ref.size() == 8);
  CHECK(ref.resolution() == 16);
  CHECK_FALSE(torch::equal(ref.images(), train_set.images().slice(0, 0, 8)));
  spec.source = "dir";
  CHECK_THROWS_AS(held_out_phantoms(spec, 8), InvalidArgument);
}

TEST_CASE("a tiny sweep shares the initial FID across rows") {
  auto train_set = data::phantom_dataset(32, 16, 0);
  auto ref = data::phantom_dataset(16, 16, 5);
  AblationOptions opts;
  opts.base = tiny_config();
  opts.seeds = {0};
  opts.steps = 3;
  opts.eval_samples = 16;
  opts.rows = {0, 4};
  auto result = run_ablation(train_set, ref, opts);
  REQUIRE(result.rows.size() == 2);
  CHECK(result.rows[0].runs[0].init_fid == result.rows[1].runs[0].init_fid);
  CHECK(result.rows[1].runs[0].metrics.size() == 3);
  CHECK(result.table().find("full <= base") != std::string::npos);
  CHECK_THROWS_AS(run_ablation(train_set, data::phantom_dataset(16, 32, 5), opts), InvalidArgument);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
}

}  // TEST_SUITE
