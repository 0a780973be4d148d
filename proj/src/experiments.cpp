#include "neighcnn/experiments.hpp"

#include <map>

#include <fmt/format.h>

#include "neighcnn/error.hpp"

namespace neighcnn {

namespace {

bool wanted(int looks, const std::vector<int>& filter) {
  return filter.empty() || std::find(filter.begin(), filter.end(), looks) != filter.end();
}

void append_patches(const DatasetManifest& manifest, const ManifestEntry& entry,
                    const PatchOptions& options, std::vector<SpecklePair>& out) {
  const SpecklePair pair = load_pair(manifest, entry);
  auto patches = extract_patches(pair, options.patch_size, options.stride, options.max_per_image,
                                 mix_seed(entry.seed));
  for (auto& p : patches) out.push_back(std::move(p));
}

}  // namespace

TrainingSet load_training_set(const DatasetManifest& manifest, const std::vector<int>& looks,
                              const PatchOptions& patches) {
  TrainingSet set;
  for (const ManifestEntry& e : manifest.entries) {
    if (!wanted(e.looks, looks)) continue;
    if (e.split == Split::train) append_patches(manifest, e, patches, set.train);
    if (e.split == Split::validation) append_patches(manifest, e, patches, set.validation);
  }
  if (set.train.empty()) throw DataError("manifest has no training entries for the selected looks");
  if (set.validation.empty()) {
    throw DataError("manifest has no validation entries for the selected looks");
  }
  return set;
}

std::vector<EvalItem> load_eval_items(const DatasetManifest& manifest, Split split,
                                      const std::vector<int>& looks) {
  std::vector<EvalItem> items;
  for (const ManifestEntry& e : manifest.select(split, looks)) {
    SpecklePair pair = load_pair(manifest, e);
    items.push_back({e.looks, std::move(pair.clean), std::move(pair.speckled)});
  }
  if (items.empty()) {
    throw DataError("manifest has no " + to_string(split) + " entries for the selected looks");
  }
  return items;
}

std::string method_label(const LossComponents& c) {
  std::string out;
  auto append = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  append(c.euclidean, "L_Eu");
  append(c.perceptual, "L_Per");
  append(c.neighbourhood, "L_N");
  return out;
}

std::vector<LossConfig> ablation_combos(const LossConfig& base) {
  const LossComponents sets[] = {
      {false, true, false}, {true, false, false}, {false, true, true},
      {true, false, true},  {true, true, false},  {true, true, true},
  };
  std::vector<LossConfig> out;
  for (const auto& c : sets) {
    LossConfig cfg = base;
    cfg.enabled = c;
    out.push_back(cfg);
  }
  return out;
}

AblationOutcome run_ablation(const std::vector<LossConfig>& combos, const ExperimentSetup& setup,
                             const TrainingSet& data, const std::vector<EvalItem>& test,
                             const FeatureExtractor& extractor, const ProgressCallback& progress) {
  if (combos.size() < 2) throw InvalidArgument("ablation needs at least two loss combinations");
  AblationOutcome out;
  std::vector<Model> models;
  std::map<std::string, int> seen;
  for (const LossConfig& combo : combos) {
    std::string label = method_label(combo.enabled);
    const int n = ++seen[label];
    if (n > 1) label += fmt::format("#{}", n);

    Trainer trainer(Model::build(setup.model, setup.init_seed), combo, setup.train, extractor);
    trainer.fit(data, [&](const Trainer&, const EpochRecord& rec) {
      if (progress) progress(label, rec);
    });
    out.labels.push_back(label);
    out.histories.push_back(trainer.history());
    models.push_back(trainer.best_model());
  }
  std::vector<LabeledDespeckler> methods;
  for (std::size_t i = 0; i < models.size(); ++i) {
    Model* m = &models[i];
    methods.push_back({out.labels[i], [m](const Tensor& x) { return despeckle(*m, x); }});
  }
  out.report = evaluate_set(test, methods);
  return out;
}

std::vector<DepthPoint> run_depth_sweep(const std::vector<int>& depths,
                                        const ExperimentSetup& setup, const LossConfig& loss,
                                        const TrainingSet& data, const std::vector<EvalItem>& test,
                                        const FeatureExtractor& extractor,
                                        const ProgressCallback& progress) {
  if (depths.empty()) throw InvalidArgument("depth sweep needs at least one depth");
  if (test.empty()) throw InvalidArgument("depth sweep needs test images");
  std::vector<DepthPoint> points;
  for (int depth : depths) {
    NeighCNNConfig cfg = setup.model;
    cfg.depth = depth;
    cfg.validate();
    const std::string run = fmt::format("depth {}", depth);
    Trainer trainer(Model::build(cfg, setup.init_seed), loss, setup.train, extractor);
    trainer.fit(data, [&](const Trainer&, const EpochRecord& rec) {
      if (progress) progress(run, rec);
    });
    Model best = trainer.best_model();
    const std::string label = fmt::format("depth{}", depth);
    const MetricReport report =
        evaluate_set(test, {{label, [&best](const Tensor& x) { return despeckle(best, x); }}});
    // Sample-weighted mean over the looks present in `test`.
    double sum = 0.0;
    std::size_t count = 0;
    for (const MetricRow& r : report.rows) {
      if (r.method != label) continue;
      sum += r.psnr_db * static_cast<double>(r.count);
      count += r.count;
    }
    points.push_back({depth, sum / static_cast<double>(count)});
  }
  return points;
}

std::string depth_sweep_csv(const std::vector<DepthPoint>& points) {
  std::string out = "depth,mean_psnr_db\n";
  for (const auto& p : points) out += fmt::format("{},{}\n", p.depth, format_metric(p.mean_psnr_db));
  return out;
}

}  // namespace neighcnn
