#include "hagan/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hagan/augmentation.hpp"
#include "hagan/error.hpp"
#include "hagan/image_io.hpp"
#include "hagan/losses.hpp"
#include "hagan/masks_mixing.hpp"
#include "hagan/run_config.hpp"

namespace hagan {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr const char* kCheckpointFormat = "hagan-checkpoint";

double item(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

json opt_to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from_json(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

void set_requires_grad(const std::vector<torch::Tensor>& params, bool flag) {
  for (auto p : params) p.set_requires_grad(flag);
}

torch::Tensor sample_with(Generator& generator, const FeatureBank& bank, bool reverse_skip,
                          const torch::Tensor& z, bool use_bank) {
  torch::NoGradGuard guard;
  if (use_bank && reverse_skip) {
    auto view = snapshot_for_generation(bank);
    return generate(generator, z, &view).images;
  }
  return generate(generator, z, nullptr).images;
}

void write_bank(torch::serialize::OutputArchive& archive, const FeatureBank& bank) {
  torch::serialize::OutputArchive sub;
  sub.write("momentum", c10::IValue(bank.momentum));
  sub.write("step_count", c10::IValue(bank.step_count));
  for (const auto& [r, t] : bank.entries) sub.write("level_" + std::to_string(r), t, /*is_buffer=*/true);
  archive.write("bank", sub);
}

FeatureBank read_bank(torch::serialize::InputArchive& archive, const FeatureLayout& layout) {
  torch::serialize::InputArchive sub;
  archive.read("bank", sub);
  c10::IValue momentum, step_count;
  sub.read("momentum", momentum);
  sub.read("step_count", step_count);
  auto bank = FeatureBank::empty(layout, momentum.toDouble());
  bank.step_count = step_count.toInt();
  for (const auto& [r, c] : layout) {
    torch::Tensor t;
    if (sub.try_read("level_" + std::to_string(r), t, /*is_buffer=*/true)) bank.entries[r] = t;
  }
  return bank;
}

std::string read_string(torch::serialize::InputArchive& archive, const char* key) {
  c10::IValue v;
  archive.read(key, v);
  return v.toStringRef();
}

torch::serialize::InputArchive open_checkpoint(const fs::path& path, RunConfig& config) {
  if (!fs::exists(path)) throw InvalidArgument("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw DataError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  c10::IValue version;
  if (read_string(archive, "format") != kCheckpointFormat) {
    throw DataError(path.string() + " is not a hagan checkpoint");
  }
  archive.read("version", version);
  if (version.toInt() != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version.toInt()));
  }
  config = parse_config_text(read_string(archive, "config"));
  return archive;
}

std::string epoch_name(const char* prefix, std::int64_t epoch, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%04lld%s", prefix, static_cast<long long>(epoch), ext);
  return buf;
}

}  // namespace

std::string to_string(Phase phase) { return phase == Phase::Warmup ? "warmup" : "augmented"; }

std::string StepMetrics::to_json() const {
  json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["phase"] = to_string(phase);
  j["augmented"] = augmented;
  j["consistency"] = consistency;
  j["d_img"] = d_img;
  j["d_pixel"] = d_pixel;
  j["d_cons_img"] = d_cons_img;
  j["d_cons_pixel"] = d_cons_pixel;
  j["d_feature"] = d_feature;
  j["d_total"] = d_total;
  j["g_img"] = g_img;
  j["g_pixel"] = g_pixel;
  j["g_total"] = g_total;
  j["lambda0_mean"] = opt_to_json(lambda0_mean);
  j["lambda_mean"] = opt_to_json(lambda_mean);
  j["lambda_std"] = opt_to_json(lambda_std);
  j["time_ms"] = opt_to_json(time_ms);
  return j.dump();
}

StepMetrics StepMetrics::from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed metrics record: ") + e.what());
  }
  StepMetrics m;
  m.step = j.at("step").get<std::int64_t>();
  m.epoch = j.at("epoch").get<std::int64_t>();
  m.phase = j.at("phase").get<std::string>() == "warmup" ? Phase::Warmup : Phase::Augmented;
  m.augmented = j.at("augmented").get<bool>();
  m.consistency = j.at("consistency").get<bool>();
  m.d_img = j.at("d_img").get<double>();
  m.d_pixel = j.at("d_pixel").get<double>();
  m.d_cons_img = j.at("d_cons_img").get<double>();
  m.d_cons_pixel = j.at("d_cons_pixel").get<double>();
  m.d_feature = j.at("d_feature").get<double>();
  m.d_total = j.at("d_total").get<double>();
  m.g_img = j.at("g_img").get<double>();
  m.g_pixel = j.at("g_pixel").get<double>();
  m.g_total = j.at("g_total").get<double>();
  m.lambda0_mean = opt_from_json(j, "lambda0_mean");
  m.lambda_mean = opt_from_json(j, "lambda_mean");
  m.lambda_std = opt_from_json(j, "lambda_std");
  m.time_ms = opt_from_json(j, "time_ms");
  return m;
}

Trainer::Trainer(TrainConfig config, data::DatasetSpec data_spec)
    : config_(std::move(config)), data_spec_(std::move(data_spec)), rng_(config_.seed) {
  config_.validate();
  torch::manual_seed(config_.seed);
  generator_ = Generator(config_.generator_config());
  discriminator_ = Discriminator(config_.discriminator_config());
  const auto betas = std::make_tuple(config_.adam_beta1, config_.adam_beta2);
  opt_g_ = std::make_unique<torch::optim::Adam>(
      generator_->parameters(), torch::optim::AdamOptions(config_.lr_g).betas(betas));
  opt_d_ = std::make_unique<torch::optim::Adam>(
      discriminator_->parameters(), torch::optim::AdamOptions(config_.lr_d).betas(betas));
  bank_ = FeatureBank::empty(config_.skip_layout(), config_.effective_momentum());
}

Phase Trainer::phase_for_epoch(std::int64_t epoch) const {
  if (!config_.toggles.attnmix) return Phase::Warmup;
  if (config_.toggles.two_phase && epoch < config_.warmup_epochs) return Phase::Warmup;
  return Phase::Augmented;
}

void Trainer::check_finite(double value, const char* term) const {
  if (!std::isfinite(value)) {
    throw NumericalError("non-finite " + std::string(term) + " (" + std::to_string(value) +
                         ") at seed " + std::to_string(config_.seed) + ", step " +
                         std::to_string(step_));
  }
}

DiscriminatorObjective discriminator_objective(Discriminator& discriminator, const TrainConfig& config,
                                               const torch::Tensor& real, const GeneratorOutput& gen,
                                               bool mixing, Rng& rng) {
  const auto& t = config.toggles;
  const auto weights = config.effective_weights();
  const bool feature_cons = mixing && weights.beta2 > 0 && weights.feature_cons_weight > 0;
  const auto R = config.resolution;
  const auto batch = real.size(0);

  DiscriminatorObjective obj;
  auto d_real_in = real;
  auto d_fake_in = gen.images.detach();
  torch::Tensor mixed;
  if (mixing) {
    d_real_in = diff_augment(real, config.aug, rng);
    d_fake_in = diff_augment(d_fake_in, config.aug, rng);
    obj.mask = mix::sample_cut_mask(batch, R, R, config.mask_ratio, rng);
    auto saliency = mix::attention_to_saliency(gen.attention.detach(), R, R);
    obj.label = mix::allocate_label(obj.mask, saliency, config.alpha);
    mixed = mix::attnmix_compose(d_real_in, d_fake_in, obj.mask);
  }

  auto real_out = discriminate(discriminator, d_real_in, {t.reverse_skip || feature_cons, t.pixel_branch});
  auto fake_out = discriminate(discriminator, d_fake_in, {feature_cons, t.pixel_branch});
  auto adv = adv_d_loss(real_out, fake_out);
  obj.parts.img = adv.img;
  obj.parts.pixel = adv.pixel;
  if (mixing) {
    auto mixed_out = discriminate(discriminator, mixed, {feature_cons, t.pixel_branch});
    obj.consistency = consistency_loss(mixed_out, real_out, fake_out, obj.mask, obj.label);
    obj.parts.cons = obj.consistency.total();
    if (feature_cons) {
      obj.parts.feature_cons = feature_consistency_loss(mixed_out.features, real_out.features,
                                                        fake_out.features, obj.mask, config.feature_mode);
    }
  }
  obj.total = total_d_loss(obj.parts, weights);
  if (t.reverse_skip) obj.real_features = std::move(real_out.features);
  return obj;
}

GeneratorObjective generator_objective(Discriminator& discriminator, const TrainConfig& config,
                                       const torch::Tensor& fake, bool augment, Rng& rng) {
  auto input = augment ? diff_augment(fake, config.aug, rng) : fake;
  auto out = discriminate(discriminator, input, {false, config.toggles.pixel_branch});
  auto adv = adv_g_loss(out);
  GeneratorObjective obj;
  obj.parts = {adv.img, adv.pixel};
  obj.total = total_g_loss(obj.parts, config.effective_weights());
  return obj;
}

StepMetrics Trainer::train_step(const torch::Tensor& real, Phase phase, std::int64_t epoch) {
  const auto start = std::chrono::steady_clock::now();
  const auto R = config_.resolution;
  if (real.dim() != 4 || real.size(1) != config_.channels || real.size(2) != R || real.size(3) != R) {
    throw InvalidArgument("train_step: batch must be (B, " + std::to_string(config_.channels) + ", " +
                          std::to_string(R) + ", " + std::to_string(R) + ")");
  }
  const auto& t = config_.toggles;
  const auto weights = config_.effective_weights();
  const bool mixing = phase == Phase::Augmented && t.attnmix;
  const auto batch = real.size(0);

  StepMetrics m;
  m.step = step_;
  m.epoch = epoch;
  m.phase = phase;
  m.augmented = mixing && !config_.aug.ops.empty();
  m.consistency = mixing && weights.beta2 > 0;

  auto z = sample_latent(batch, config_.latent_dim, rng_);
  GeneratorOutput gen;
  if (t.reverse_skip) {
    auto view = snapshot_for_generation(bank_);
    gen = generate(generator_, z, &view);
  } else {
    gen = generate(generator_, z, nullptr);
  }
  auto obj = discriminator_objective(discriminator_, config_, real, gen, mixing, rng_);
  const auto& parts = obj.parts;
  if (mixing) {
    m.lambda0_mean = obj.mask.area_ratio.mean().item<double>();
    m.lambda_mean = obj.label.lambda.mean().item<double>();
    m.lambda_std = batch > 1 ? obj.label.lambda.std().item<double>() : 0.0;
    m.d_cons_img = item(obj.consistency.image_term);
    m.d_cons_pixel = item(obj.consistency.pixel_term);
    m.d_feature = item(parts.feature_cons);
  }
  auto d_total = obj.total;
  m.d_img = item(parts.img);
  m.d_pixel = item(parts.pixel);
  m.d_total = item(d_total);
  check_finite(m.d_img, "d_img");
  check_finite(m.d_pixel, "d_pixel");
  check_finite(m.d_cons_img, "d_cons_img");
  check_finite(m.d_cons_pixel, "d_cons_pixel");
  check_finite(m.d_feature, "d_feature");
  check_finite(m.d_total, "d_total");
  opt_d_->zero_grad();
  d_total.backward();
  opt_d_->step();

  if (t.reverse_skip) bank_ = update_bank(bank_, obj.real_features, bank_.momentum);

  // Generator update against the freshly updated discriminator.
  auto d_params = discriminator_->parameters();
  set_requires_grad(d_params, false);
  GeneratorObjective g_obj;
  try {
    g_obj = generator_objective(discriminator_, config_, gen.images, m.augmented, rng_);
  } catch (...) {
    set_requires_grad(d_params, true);
    throw;
  }
  set_requires_grad(d_params, true);
  const auto& g_parts = g_obj.parts;
  auto g_total = g_obj.total;
  m.g_img = item(g_parts.img);
  m.g_pixel = item(g_parts.pixel);
  m.g_total = item(g_total);
  check_finite(m.g_img, "g_img");
  check_finite(m.g_pixel, "g_pixel");
  check_finite(m.g_total, "g_total");
  opt_g_->zero_grad();
  g_total.backward();
  opt_g_->step();

  ++step_;
  if (config_.log_timing) {
    m.time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return m;
}

torch::Tensor Trainer::sample(const torch::Tensor& z, bool use_bank) {
  return sample_with(generator_, bank_, config_.toggles.reverse_skip, z, use_bank);
}

torch::Tensor Trainer::grid_latent() const { return grid_latent_for(config_); }

torch::Tensor grid_latent_for(const TrainConfig& config) {
  Rng rng(mix_seed(config.seed, 0x9d1d));
  return sample_latent(config.grid_samples, config.latent_dim, rng);
}

void Trainer::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  torch::serialize::OutputArchive archive;
  archive.write("format", c10::IValue(std::string(kCheckpointFormat)));
  archive.write("version", c10::IValue(static_cast<std::int64_t>(kCheckpointVersion)));
  archive.write("config", c10::IValue(to_config_text(RunConfig{config_, data_spec_})));
  archive.write("step", c10::IValue(step_));
  archive.write("rng", c10::IValue(rng_.state()));

  torch::serialize::OutputArchive g, d, og, od;
  generator_->save(g);
  discriminator_->save(d);
  opt_g_->save(og);
  opt_d_->save(od);
  archive.write("generator", g);
  archive.write("discriminator", d);
  archive.write("opt_generator", og);
  archive.write("opt_discriminator", od);
  write_bank(archive, bank_);
  archive.save_to(path.string());
}

Trainer Trainer::load(const fs::path& path) {
  RunConfig config;
  auto archive = open_checkpoint(path, config);
  Trainer trainer(config.train, config.data);

  c10::IValue step;
  archive.read("step", step);
  trainer.step_ = step.toInt();
  trainer.rng_.restore(read_string(archive, "rng"));

  torch::serialize::InputArchive g, d, og, od;
  archive.read("generator", g);
  archive.read("discriminator", d);
  archive.read("opt_generator", og);
  archive.read("opt_discriminator", od);
  trainer.generator_->load(g);
  trainer.discriminator_->load(d);
  trainer.opt_g_->load(og);
  trainer.opt_d_->load(od);
  trainer.bank_ = read_bank(archive, trainer.config_.skip_layout());
  return trainer;
}

torch::Tensor Sampler::sample(const torch::Tensor& z, bool use_bank) {
  return sample_with(generator, bank, config.toggles.reverse_skip, z, use_bank);
}

torch::Tensor Sampler::grid_latent() const { return grid_latent_for(config); }

Sampler load_sampler(const fs::path& checkpoint) {
  RunConfig config;
  auto archive = open_checkpoint(checkpoint, config);
  Sampler s;
  s.config = config.train;
  s.config.validate();
  s.generator = Generator(s.config.generator_config());
  torch::serialize::InputArchive g;
  archive.read("generator", g);
  s.generator->load(g);
  s.bank = read_bank(archive, s.config.skip_layout());
  return s;
}

RunConfig checkpoint_config(const fs::path& checkpoint) {
  RunConfig config;
  open_checkpoint(checkpoint, config);
  return config;
}

std::int64_t steps_per_epoch(const TrainConfig& config, std::int64_t dataset_size) {
  return std::max<std::int64_t>(1, dataset_size / config.batch_size);
}

std::int64_t total_steps(const TrainConfig& config, std::int64_t dataset_size) {
  if (config.max_steps > 0) return config.max_steps;
  return config.total_epochs * steps_per_epoch(config, dataset_size);
}

RunArtifacts train(const TrainConfig& config, const data::Dataset& dataset, const fs::path& out_dir,
                   const TrainOptions& options, const data::DatasetSpec& data_spec) {
  config.validate();
  if (dataset.resolution() != config.resolution || dataset.channels() != config.channels) {
    throw InvalidArgument("dataset is " + std::to_string(dataset.channels()) + "x" +
                          std::to_string(dataset.resolution()) + "x" + std::to_string(dataset.resolution()) +
                          " but the run expects " + std::to_string(config.channels) + "x" +
                          std::to_string(config.resolution) + "x" + std::to_string(config.resolution));
  }
  const auto batch = std::min(config.batch_size, dataset.size());

  auto trainer = options.resume_from ? Trainer::load(*options.resume_from) : Trainer(config, data_spec);
  if (options.resume_from) {
    const auto& saved = trainer.config();
    if (saved.resolution != config.resolution || saved.channels != config.channels ||
        saved.seed != config.seed || saved.batch_size != config.batch_size) {
      throw InvalidArgument("resume checkpoint was written for a different run configuration");
    }
  }
  if (options.on_start) options.on_start(trainer);

  RunArtifacts art;
  art.out_dir = out_dir;
  art.steps_per_epoch = steps_per_epoch(config, dataset.size());
  art.total_steps = total_steps(config, dataset.size());

  std::ofstream log;
  if (options.write_artifacts) {
    fs::create_directories(out_dir / "checkpoints");
    fs::create_directories(out_dir / "grids");
    save_run_config(out_dir / "config.resolved", RunConfig{config, data_spec});
    log.open(out_dir / "metrics.ndjson", options.resume_from ? std::ios::app : std::ios::trunc);
    if (!log) throw DataError("cannot open " + (out_dir / "metrics.ndjson").string());
  }

  const auto grid_z = grid_latent_for(config);
  auto write_grid = [&](const fs::path& path) {
    auto samples = trainer.sample(grid_z, true);
    auto nrow = static_cast<std::int64_t>(std::ceil(std::sqrt(static_cast<double>(samples.size(0)))));
    io::write_png(path, io::make_grid(samples, nrow));
  };

  std::vector<std::int64_t> order;
  std::int64_t order_epoch = -1;
  for (auto s = trainer.step(); s < art.total_steps; ++s) {
    const auto epoch = s / art.steps_per_epoch;
    const auto within = s % art.steps_per_epoch;
    if (epoch != order_epoch) {
      order = dataset.epoch_order(config.seed, epoch);
      order_epoch = epoch;
    }
    std::vector<std::int64_t> idx(order.begin() + within * batch, order.begin() + (within + 1) * batch);
    auto m = trainer.train_step(dataset.gather(idx), trainer.phase_for_epoch(epoch), epoch);
    if (log.is_open()) log << m.to_json() << '\n' << std::flush;
    if (options.on_step) options.on_step(m);
    art.metrics.push_back(std::move(m));

    const bool epoch_done = within + 1 == art.steps_per_epoch;
    if (options.write_artifacts && epoch_done && config.checkpoint_every > 0 &&
        (epoch + 1) % config.checkpoint_every == 0 && s + 1 < art.total_steps) {
      trainer.save(out_dir / "checkpoints" / epoch_name("epoch_", epoch + 1, ".pt"));
      write_grid(out_dir / "grids" / epoch_name("epoch_", epoch + 1, ".png"));
    }
  }

  if (options.on_finish) options.on_finish(trainer);
  if (options.write_artifacts) {
    art.final_checkpoint = out_dir / "checkpoints" / "final.pt";
    art.final_grid = out_dir / "grids" / "final.png";
    trainer.save(art.final_checkpoint);
    write_grid(art.final_grid);
  }
  return art;
}

std::vector<StepMetrics> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics log " + path.string());
  std::vector<StepMetrics> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(StepMetrics::from_json(line));
  }
  return out;
}

}  // namespace hagan
