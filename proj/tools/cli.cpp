#include "cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "hagan/ablation.hpp"
#include "hagan/data.hpp"
#include "hagan/error.hpp"
#include "hagan/evaluation.hpp"
#include "hagan/image_io.hpp"
#include "hagan/masks_mixing.hpp"
#include "hagan/run_config.hpp"
#include "hagan/training.hpp"

namespace hagan::cli {
namespace {

namespace fs = std::filesystem;

// --config FILE and repeatable --set key=value, applied in that order on top
// of the command's defaults, then any dedicated flags.
struct ConfigFlags {
  std::string path;
  std::vector<std::string> sets;
  KeyValues flags;  // filled from dedicated options after parsing

  void attach(CLI::App* app) {
    app->add_option("--config", path, "Run configuration file (key = value lines)")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "Override one configuration key, e.g. --set lr_g=2e-4");
  }

  RunConfig resolve(RunConfig config) const {
    if (!path.empty()) {
      std::ifstream in(path);
      std::stringstream text;
      text << in.rdbuf();
      apply_key_values(config, parse_key_values(text.str()));
    }
    KeyValues kv;
    for (const auto& s : sets) {
      auto eq = s.find('=');
      if (eq == std::string::npos) throw InvalidArgument("--set expects key=value, got '" + s + "'");
      kv.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    kv.insert(kv.end(), flags.begin(), flags.end());
    apply_key_values(config, kv);
    config.train.validate();
    return config;
  }
};

template <typename T>
void flag_kv(KeyValues& kv, const std::string& key, const std::optional<T>& v) {
  if (!v) return;
  std::ostringstream s;
  s << *v;
  kv.emplace_back(key, s.str());
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::int64_t grid_rows(std::int64_t n) {
  std::int64_t r = 1;
  while (r * r < n) ++r;
  return r;
}

torch::Tensor to_rgb(const torch::Tensor& img) { return img.size(0) == 3 ? img : img.repeat({3, 1, 1}); }

// ---------------------------------------------------------------- train

struct TrainArgs {
  ConfigFlags cfg;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps, epochs, warmup, resolution, batch, phantom_count;
  std::optional<std::string> data_dir, resume;
  bool desk = false;
  bool init_only = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig base;
  if (a.desk) {
    base.train = desk_config(a.resolution.value_or(16));
    base.data.resolution = base.train.resolution;
  }
  auto flags = a.cfg;
  flag_kv(flags.flags, "seed", a.seed);
  flag_kv(flags.flags, "phantom_seed", a.seed);
  flag_kv(flags.flags, "max_steps", a.steps);
  flag_kv(flags.flags, "total_epochs", a.epochs);
  flag_kv(flags.flags, "warmup_epochs", a.warmup);
  flag_kv(flags.flags, "resolution", a.resolution);
  flag_kv(flags.flags, "batch_size", a.batch);
  flag_kv(flags.flags, "phantom_count", a.phantom_count);
  if (a.data_dir) {
    flags.flags.emplace_back("data_source", "dir");
    flags.flags.emplace_back("data_dir", *a.data_dir);
  }
  const auto config = flags.resolve(base);
  const fs::path dir = a.out;

  if (a.init_only) {
    Trainer trainer(config.train, config.data);
    save_run_config(dir / "config.resolved", config);
    const auto ckpt = dir / "checkpoints" / "final.pt";
    trainer.save(ckpt);
    auto samples = trainer.sample(trainer.grid_latent(), true);
    io::write_png(dir / "grids" / "final.png", io::make_grid(samples, grid_rows(samples.size(0))));
    out << "checkpoint: " << ckpt.string() << '\n';
    return kOk;
  }

  const auto dataset = data::make_dataset(config.data);
  TrainOptions options;
  if (a.resume) options.resume_from = fs::path(*a.resume);
  const auto art = train(config.train, dataset, dir, options, config.data);
  out << "steps: " << art.total_steps << " (" << art.steps_per_epoch << " per epoch)\n";
  if (!art.metrics.empty()) {
    const auto& m = art.metrics.back();
    out << "last: d_total " << fmt("%.6f", m.d_total) << ", g_total " << fmt("%.6f", m.g_total) << '\n';
  }
  out << "checkpoint: " << art.final_checkpoint.string() << '\n';
  out << "grid: " << art.final_grid.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
  std::string checkpoint, out;
  std::optional<std::int64_t> count;
  std::optional<std::uint64_t> latent_seed;
  bool zero_bank = false;
};

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  auto sampler = load_sampler(a.checkpoint);
  torch::Tensor z;
  if (a.count || a.latent_seed) {
    const auto n = a.count.value_or(sampler.config.grid_samples);
    if (n < 1) throw InvalidArgument("--count must be >= 1");
    Rng rng(mix_seed(a.latent_seed.value_or(sampler.config.seed), 0x5a3e));
    z = sample_latent(n, sampler.config.latent_dim, rng);
  } else {
    z = sampler.grid_latent();
  }
  auto images = sampler.sample(z, !a.zero_bank);
  const fs::path dir = a.out;
  const auto png = dir / "samples.png";
  io::write_png(png, io::make_grid(images, grid_rows(images.size(0))));

  KeyValues extra{{"sample_checkpoint", a.checkpoint},
                  {"sample_count", std::to_string(images.size(0))},
                  {"sample_latent", a.count || a.latent_seed ? "seeded" : "grid"},
                  {"sample_zero_bank", a.zero_bank ? "true" : "false"}};
  if (a.latent_seed) extra.emplace_back("sample_latent_seed", std::to_string(*a.latent_seed));
  save_run_config(dir / "config.resolved", checkpoint_config(a.checkpoint), extra);
  out << "grid: " << png.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- eval-fid

struct EvalArgs {
  ConfigFlags cfg;
  std::string checkpoint, out;
  std::int64_t samples = 512;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> data_dir;
  std::optional<std::int64_t> phantom_count;
  bool zero_bank = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  auto flags = a.cfg;
  flag_kv(flags.flags, "phantom_count", a.phantom_count);
  if (a.data_dir) {
    flags.flags.emplace_back("data_source", "dir");
    flags.flags.emplace_back("data_dir", *a.data_dir);
  }
  const auto config = flags.resolve(checkpoint_config(a.checkpoint));
  const auto dataset = data::make_dataset(config.data);
  eval::RandomConvExtractor extractor(dataset.channels(), dataset.resolution());

  const fs::path dir = a.out;
  eval::EvalOptions options;
  options.use_bank = !a.zero_bank;
  options.seed = a.seed.value_or(config.train.seed);
  options.grid_path = dir / "grid.png";
  const auto report = eval::eval_run(a.checkpoint, dataset, extractor, a.samples, options);

  write_text(dir / "report.txt", report.to_text());
  save_run_config(dir / "config.resolved", config,
                  {{"eval_checkpoint", a.checkpoint},
                   {"eval_samples", std::to_string(a.samples)},
                   {"eval_seed", std::to_string(options.seed)},
                   {"eval_zero_bank", a.zero_bank ? "true" : "false"}});
  out << report.to_text();
  return kOk;
}

// ---------------------------------------------------------------- inspect-mix

struct InspectArgs {
  ConfigFlags cfg;
  std::string out;
  std::optional<std::string> checkpoint, real;
  std::uint64_t seed = 0;
  std::int64_t index = 0;
  std::string mask = "random";
  std::optional<std::int64_t> resolution;
};

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
  RunConfig base = a.checkpoint ? checkpoint_config(*a.checkpoint) : RunConfig{};
  auto flags = a.cfg;
  flag_kv(flags.flags, "resolution", a.resolution);
  const auto config = flags.resolve(base);
  const auto& tc = config.train;
  const auto R = tc.resolution;

  Generator generator{nullptr};
  FeatureBank bank;
  if (a.checkpoint) {
    auto sampler = load_sampler(*a.checkpoint);
    generator = sampler.generator;
    bank = sampler.bank;
  } else {
    torch::manual_seed(a.seed);
    generator = Generator(tc.generator_config());
    bank = FeatureBank::empty(tc.skip_layout(), tc.effective_momentum());
  }
  Rng rng(mix_seed(a.seed, 0x1a5));
  auto z = sample_latent(1, tc.latent_dim, rng);
  GeneratorOutput gen;
  {
    torch::NoGradGuard guard;
    if (tc.toggles.reverse_skip) {
      auto view = snapshot_for_generation(bank);
      gen = generate(generator, z, &view);
    } else {
      gen = generate(generator, z, nullptr);
    }
  }

  torch::Tensor real;
  if (a.real) {
    auto img = io::load_image(*a.real, R, tc.channels == 1);
    if (!img) throw DataError("cannot decode " + *a.real);
    real = img->unsqueeze(0);
  } else {
    if (a.index < 0) throw InvalidArgument("--index must be >= 0");
    auto phantoms = data::phantom_dataset(a.index + 1, R, config.data.seed);
    real = phantoms.images().slice(0, a.index, a.index + 1);
    if (tc.channels == 3) real = real.repeat({1, 3, 1, 1});
  }

  mix::BinaryMask mask;
  if (a.mask == "random") {
    mask = mix::sample_cut_mask(1, R, R, tc.mask_ratio, rng);
  } else {
    mask = mix::constant_mask(1, R, R, a.mask == "ones");
  }
  auto saliency = mix::attention_to_saliency(gen.attention, R, R);
  auto label = mix::allocate_label(mask, saliency, tc.alpha);
  auto lambda1 = mix::attention_weighted_ratio(mask, saliency);
  auto mixed = mix::attnmix_compose(real, gen.images, mask);

  // Mask as grey (real region) over black, saliency in the red channel.
  auto s = saliency.values[0];
  s = s / s.max().clamp_min(1e-12);
  auto m = mask.values[0];
  auto grey = 0.5 * m;
  auto overlay = torch::cat({torch::maximum(grey, s), grey, grey}, 0) * 2.0 - 1.0;

  auto panels = torch::stack({to_rgb(gen.images[0]), to_rgb(real[0]), to_rgb(mixed[0]), overlay});
  const fs::path dir = a.out;
  const auto png = dir / "inspect_mix.png";
  io::write_png(png, io::make_grid(panels, 4));

  KeyValues extra{{"inspect_seed", std::to_string(a.seed)}, {"inspect_mask", a.mask}};
  if (a.checkpoint) extra.emplace_back("inspect_checkpoint", *a.checkpoint);
  if (a.real) extra.emplace_back("inspect_real", *a.real);
  else extra.emplace_back("inspect_index", std::to_string(a.index));
  save_run_config(dir / "config.resolved", config, extra);

  out << "lambda0 = " << fmt("%.6f", mask.area_ratio[0].item<double>()) << '\n';
  out << "lambda1 = " << fmt("%.6f", lambda1[0].item<double>()) << '\n';
  out << "lambda = " << fmt("%.6f", label.lambda[0].item<double>()) << '\n';
  out << "grid: " << png.string() << " (fake | real | mixed | mask + saliency)\n";
  return kOk;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  ConfigFlags cfg;
  std::string out;
  std::uint64_t seed = 0;
  std::int64_t seeds = 3;
  std::int64_t steps = 2000;
  std::int64_t eval_samples = 512;
  double warmup_fraction = 0.5;
  std::vector<std::size_t> rows;
  std::optional<std::int64_t> resolution, phantom_count;
  std::int64_t reference_count = 512;
  bool keep_runs = false;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig base;
  base.train = desk_config(a.resolution.value_or(16));
  base.data.resolution = base.train.resolution;
  auto flags = a.cfg;
  base.data.phantom_count = 64;
  flag_kv(flags.flags, "phantom_count", a.phantom_count);
  flag_kv(flags.flags, "phantom_seed", std::optional<std::uint64_t>(a.seed));
  const auto config = flags.resolve(base);
  if (a.seeds < 1) throw InvalidArgument("--seeds must be >= 1");

  AblationOptions options;
  options.base = config.train;
  options.seeds.clear();
  for (std::int64_t i = 0; i < a.seeds; ++i) options.seeds.push_back(a.seed + static_cast<std::uint64_t>(i));
  options.steps = a.steps;
  options.warmup_fraction = a.warmup_fraction;
  options.eval_samples = a.eval_samples;
  options.rows = a.rows;
  const fs::path dir = a.out;
  if (a.keep_runs) options.out_dir = dir / "runs";
  options.progress = [&](const std::string& line) { err << line << std::endl; };

  if (a.reference_count < 0) throw InvalidArgument("--reference-count must be >= 0");
  const auto dataset = data::make_dataset(config.data);
  const auto reference = a.reference_count > 0 ? held_out_phantoms(config.data, a.reference_count) : dataset;
  const auto result = run_ablation(dataset, reference, options);
  const auto table = result.table();
  write_text(dir / "ablation.txt", table);

  std::string seeds;
  for (auto s : options.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
  save_run_config(dir / "config.resolved", config,
                  {{"ablation_seeds", seeds},
                   {"ablation_steps", std::to_string(a.steps)},
                   {"ablation_eval_samples", std::to_string(a.eval_samples)},
                   {"ablation_reference_count", std::to_string(a.reference_count)},
                   {"ablation_warmup_fraction", fmt("%.17g", a.warmup_fraction)}});
  out << table;
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"hagan: attention-mixed GAN training laboratory", "hagan"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "hagan 0.1.0");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes config.resolved, metrics.ndjson, "
                                                "checkpoints/ and grids/ under --out");
  train_args.cfg.attach(train_cmd);
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();
  train_cmd->add_option("--seed", train_args.seed, "Run seed (also seeds the phantom set)");
  train_cmd->add_option("--steps", train_args.steps, "Step budget; overrides --epochs");
  train_cmd->add_option("--epochs", train_args.epochs, "Total epochs");
  train_cmd->add_option("--warmup", train_args.warmup, "Warmup epochs before augmentation starts");
  train_cmd->add_option("--resolution", train_args.resolution, "Image resolution");
  train_cmd->add_option("--batch", train_args.batch, "Batch size");
  train_cmd->add_option("--data-dir", train_args.data_dir, "Train on PNG/JPEG files from this directory");
  train_cmd->add_option("--phantom-count", train_args.phantom_count, "Size of the phantom set");
  train_cmd->add_option("--resume", train_args.resume, "Continue from a checkpoint");
  train_cmd->add_flag("--desk", train_args.desk, "Start from the small CPU-scale network sizes");
  train_cmd->add_flag("--init-only", train_args.init_only,
                      "Write the untrained checkpoint and grid without training");

  SampleArgs sample_args;
  auto* sample_cmd = app.add_subcommand("sample", "Write an image grid from a checkpoint");
  sample_cmd->add_option("--checkpoint", sample_args.checkpoint, "Checkpoint file")->required();
  sample_cmd->add_option("--out", sample_args.out, "Output directory")->required();
  sample_cmd->add_option("--count", sample_args.count, "Number of samples (default: the run's grid)");
  sample_cmd->add_option("--latent-seed", sample_args.latent_seed, "Seed for fresh latents");
  sample_cmd->add_flag("--zero-bank", sample_args.zero_bank, "Generate with zero reverse-skip input");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval-fid", "FID of checkpoint samples against a dataset");
  eval_args.cfg.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--out", eval_args.out, "Output directory")->required();
  eval_cmd->add_option("--samples", eval_args.samples, "Generated and real image count")->capture_default_str();
  eval_cmd->add_option("--seed", eval_args.seed, "Latent seed (default: the run seed)");
  eval_cmd->add_option("--data-dir", eval_args.data_dir, "Compare against PNG/JPEG files from this directory");
  eval_cmd->add_option("--phantom-count", eval_args.phantom_count, "Size of the phantom set");
  eval_cmd->add_flag("--zero-bank", eval_args.zero_bank, "Generate with zero reverse-skip input");

  InspectArgs inspect_args;
  auto* inspect_cmd = app.add_subcommand("inspect-mix", "Mix one real/fake pair and print its realness labels");
  inspect_args.cfg.attach(inspect_cmd);
  inspect_cmd->add_option("--out", inspect_args.out, "Output directory")->required();
  inspect_cmd->add_option("--checkpoint", inspect_args.checkpoint, "Generator checkpoint (default: untrained)");
  inspect_cmd->add_option("--real", inspect_args.real, "Real image file (default: a phantom)");
  inspect_cmd->add_option("--index", inspect_args.index, "Phantom index")->capture_default_str();
  inspect_cmd->add_option("--seed", inspect_args.seed, "Latent, mask and weight seed")->capture_default_str();
  inspect_cmd->add_option("--mask", inspect_args.mask, "Mask kind")
      ->check(CLI::IsMember({"random", "ones", "zeros"}))
      ->capture_default_str();
  inspect_cmd->add_option("--resolution", inspect_args.resolution, "Image resolution");

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "Five-row module ablation on the phantom set; writes a FID table");
  ablate_args.cfg.attach(ablate_cmd);
  ablate_cmd->add_option("--out", ablate_args.out, "Output directory")->required();
  ablate_cmd->add_option("--seed", ablate_args.seed, "First seed")->capture_default_str();
  ablate_cmd->add_option("--seeds", ablate_args.seeds, "Number of consecutive seeds")->capture_default_str();
  ablate_cmd->add_option("--steps", ablate_args.steps, "Steps per run")->capture_default_str();
  ablate_cmd->add_option("--eval-samples", ablate_args.eval_samples, "FID sample count")->capture_default_str();
  ablate_cmd->add_option("--warmup-fraction", ablate_args.warmup_fraction,
                         "Share of epochs in warmup for the two-phase row")
      ->capture_default_str();
  ablate_cmd->add_option("--rows", ablate_args.rows, "Schedule rows to run (0 = base .. 4 = full)")
      ->delimiter(',');
  ablate_cmd->add_option("--resolution", ablate_args.resolution, "Image resolution (default 16)");
  ablate_cmd->add_option("--phantom-count", ablate_args.phantom_count, "Size of the phantom training set (default 64)");
  ablate_cmd->add_option("--reference-count", ablate_args.reference_count,
                         "Score against this many held-out phantoms (0: the training set)")
      ->capture_default_str();
  ablate_cmd->add_flag("--keep-runs", ablate_args.keep_runs, "Keep every run's artifacts under <out>/runs");

  std::vector<std::string> argv_store{"hagan"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kBadArgs;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out);
    if (*sample_cmd) return cmd_sample(sample_args, out);
    if (*eval_cmd) return cmd_eval(eval_args, out);
    if (*inspect_cmd) return cmd_inspect(inspect_args, out);
    if (*ablate_cmd) return cmd_ablate(ablate_args, out, err);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kBadArgs;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}

}  // namespace hagan::cli
