#include "hagan/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "hagan/error.hpp"

namespace hagan {

TrainConfig desk_config(std::int64_t resolution) {
  TrainConfig c;
  c.resolution = resolution;
  c.batch_size = 32;
  c.latent_dim = 64;
  c.g_base_channels = 32;
  c.d_base_channels = 32;
  c.max_channels = 128;
  c.d_image_layers = 3;
  c.log_timing = false;
  return c;
}

std::vector<AblationRow> ablation_schedule() {
  ModuleToggles t{false, false, false, false};
  std::vector<AblationRow> rows;
  rows.push_back({"base", t});
  t.attnmix = true;
  rows.push_back({"+attnmix", t});
  t.reverse_skip = true;
  rows.push_back({"+reverse_skip", t});
  t.pixel_branch = true;
  rows.push_back({"+hierarchical_d", t});
  t.two_phase = true;
  rows.push_back({"+two_phase", t});
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of an empty set");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double AblationRowResult::median_init() const {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.init_fid);
  return median(v);
}

double AblationRowResult::median_final() const {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.final_fid);
  return median(v);
}

bool AblationResult::full_not_worse_than_base() const {
  const auto schedule = ablation_schedule();
  const AblationRowResult* base = nullptr;
  const AblationRowResult* full = nullptr;
  for (const auto& r : rows) {
    if (r.row.name == schedule.front().name) base = &r;
    if (r.row.name == schedule.back().name) full = &r;
  }
  if (!base || !full || base->runs.empty() || full->runs.empty()) return false;
  return full->median_final() <= base->median_final();
}

bool AblationResult::monotone() const {
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].median_final() > rows[i - 1].median_final()) return false;
  }
  return true;
}

std::string AblationResult::table() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-18s %-8s %-8s %-8s %-8s %12s %12s  %s\n", "row", "attnmix", "skip",
                "pixel", "2phase", "init_fid", "final_fid", "per-seed final");
  out << line;
  for (const auto& r : rows) {
    const auto& t = r.row.toggles;
    std::snprintf(line, sizeof(line), "%-18s %-8s %-8s %-8s %-8s %12.4f %12.4f  ", r.row.name.c_str(),
                  t.attnmix ? "on" : "-", t.reverse_skip ? "on" : "-", t.pixel_branch ? "on" : "-",
                  t.two_phase ? "on" : "-", r.median_init(), r.median_final());
    out << line;
    for (std::size_t i = 0; i < r.runs.size(); ++i) {
      std::snprintf(line, sizeof(line), "%s%.4f", i ? " " : "", r.runs[i].final_fid);
      out << line;
    }
    out << '\n';
  }
  if (!rows.empty()) {
    out << "full <= base: " << (full_not_worse_than_base() ? "yes" : "no") << '\n';
    out << "monotone: " << (monotone() ? "yes" : "no") << '\n';
  }
  return out.str();
}

double trainer_fid(Trainer& trainer, const data::Dataset& dataset, const eval::FeatureExtractor& extractor,
                   std::int64_t count, std::uint64_t seed) {
  if (count < 2 || count > dataset.size()) {
    throw InvalidArgument("FID sample count must lie in [2, dataset size]");
  }
  Rng rng(mix_seed(seed, 0xe7a1));
  auto z = sample_latent(count, trainer.config().latent_dim, rng);
  std::vector<torch::Tensor> parts;
  for (std::int64_t i = 0; i < count; i += 256) {
    parts.push_back(trainer.sample(z.slice(0, i, std::min(count, i + 256)), true));
  }
  auto fake = torch::cat(parts, 0);
  auto real = dataset.images().slice(0, 0, count);
  return eval::fid_between(real, fake, extractor);
}

TrainConfig ablation_config(const AblationOptions& options, const AblationRow& row, std::uint64_t seed,
                            std::int64_t dataset_size) {
  if (options.steps < 1) throw InvalidArgument("ablation: steps must be >= 1");
  if (!(options.warmup_fraction >= 0 && options.warmup_fraction <= 1)) {
    throw InvalidArgument("ablation: warmup_fraction must lie in [0, 1]");
  }
  auto c = options.base;
  c.toggles = row.toggles;
  c.seed = seed;
  c.max_steps = options.steps;
  const auto spe = steps_per_epoch(c, dataset_size);
  c.total_epochs = std::max<std::int64_t>(1, (options.steps + spe - 1) / spe);
  c.warmup_epochs = static_cast<std::int64_t>(std::llround(options.warmup_fraction * c.total_epochs));
  c.checkpoint_every = 0;
  return c;
}

data::Dataset held_out_phantoms(const data::DatasetSpec& spec, std::int64_t count) {
  if (spec.source != "phantom") throw InvalidArgument("held-out reference needs a phantom data source");
  return data::phantom_dataset(count, spec.resolution, mix_seed(spec.seed, 0x4e1d));
}

AblationData desk_ablation_data(std::int64_t resolution, std::int64_t train_count, std::int64_t reference_count,
                                std::uint64_t seed) {
  data::DatasetSpec spec;
  spec.resolution = resolution;
  spec.phantom_count = train_count;
  spec.seed = seed;
  return {data::make_dataset(spec), held_out_phantoms(spec, reference_count)};
}

AblationResult run_ablation(const data::Dataset& dataset, const AblationOptions& options) {
  return run_ablation(dataset, dataset, options);
}

AblationResult run_ablation(const data::Dataset& dataset, const data::Dataset& reference,
                            const AblationOptions& options) {
  if (reference.channels() != dataset.channels() || reference.resolution() != dataset.resolution()) {
    throw InvalidArgument("ablation: reference images must match the training set's shape");
  }
  if (options.seeds.empty()) throw InvalidArgument("ablation: at least one seed is required");
  const auto schedule = ablation_schedule();
  std::vector<std::size_t> rows = options.rows;
  if (rows.empty()) {
    for (std::size_t i = 0; i < schedule.size(); ++i) rows.push_back(i);
  }
  eval::RandomConvExtractor extractor(dataset.channels(), dataset.resolution());

  AblationResult result;
  for (auto index : rows) {
    if (index >= schedule.size()) throw InvalidArgument("ablation: row index out of range");
    AblationRowResult row_result{schedule[index], {}};
    for (auto seed : options.seeds) {
      auto config = ablation_config(options, schedule[index], seed, dataset.size());
      AblationRun run;
      run.seed = seed;
      TrainOptions topts;
      topts.write_artifacts = options.out_dir.has_value();
      topts.on_start = [&](Trainer& trainer) {
        run.init_fid = trainer_fid(trainer, reference, extractor, options.eval_samples, seed);
      };
      topts.on_finish = [&](Trainer& trainer) {
        run.final_fid = trainer_fid(trainer, reference, extractor, options.eval_samples, seed);
      };
      std::filesystem::path dir;
      if (options.out_dir) {
        auto name = schedule[index].name;
        if (name.front() == '+') name.erase(0, 1);
        dir = *options.out_dir / ("row" + std::to_string(index) + "_" + name) / ("seed" + std::to_string(seed));
      }
      auto art = train(config, dataset, dir, topts);
      run.metrics = std::move(art.metrics);
      if (options.progress) {
        char line[160];
        std::snprintf(line, sizeof(line), "%s seed %llu: init %.4f final %.4f", schedule[index].name.c_str(),
                      static_cast<unsigned long long>(seed), run.init_fid, run.final_fid);
        options.progress(line);
      }
      row_result.runs.push_back(std::move(run));
    }
    result.rows.push_back(std::move(row_result));
  }
  return result;
}

}  // namespace hagan
