#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "neighcnn/dataset.hpp"
#include "neighcnn/metrics.hpp"
#include "neighcnn/trainer.hpp"

namespace neighcnn {

struct PatchOptions {
  std::size_t patch_size = 32;
  std::size_t stride = 32;
  // Per image; all patches when unset.
  std::optional<std::size_t> max_per_image;
};

// Train and validation patches for the selected looks (all looks when empty),
// interleaved in manifest order. Patch subsets are seeded per entry.
TrainingSet load_training_set(const DatasetManifest& manifest, const std::vector<int>& looks,
                              const PatchOptions& patches);

// Whole images of one split for evaluation.
std::vector<EvalItem> load_eval_items(const DatasetManifest& manifest, Split split,
                                      const std::vector<int>& looks = {});

// Column label such as "L_Eu+L_Per+L_N".
std::string method_label(const LossComponents& components);

// The six loss combinations of the ablation table, sharing the weights of
// `base`: Per, Eu, Per+N, Eu+N, Eu+Per, Eu+Per+N.
std::vector<LossConfig> ablation_combos(const LossConfig& base = {});

struct ExperimentSetup {
  NeighCNNConfig model;
  TrainConfig train;
  std::uint64_t init_seed = 0;
};

using ProgressCallback = std::function<void(const std::string& run, const EpochRecord&)>;

struct AblationOutcome {
  MetricReport report;
  std::vector<std::string> labels;
  std::vector<TrainHistory> histories;
};

// One training per combo, each started from the same initialization seed and
// data; the best-validation model of each run is scored next to Noisy.
// Repeated combos get a "#k" suffix so every column stays distinct.
AblationOutcome run_ablation(const std::vector<LossConfig>& combos, const ExperimentSetup& setup,
                             const TrainingSet& data, const std::vector<EvalItem>& test,
                             const FeatureExtractor& extractor,
                             const ProgressCallback& progress = {});

struct DepthPoint {
  int depth = 0;
  double mean_psnr_db = 0.0;
};

// One training per depth; mean despeckled PSNR over `test`.
std::vector<DepthPoint> run_depth_sweep(const std::vector<int>& depths,
                                        const ExperimentSetup& setup, const LossConfig& loss,
                                        const TrainingSet& data, const std::vector<EvalItem>& test,
                                        const FeatureExtractor& extractor,
                                        const ProgressCallback& progress = {});

// depth,mean_psnr_db
std::string depth_sweep_csv(const std::vector<DepthPoint>& points);

}  // namespace neighcnn
