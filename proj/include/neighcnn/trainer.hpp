#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "neighcnn/adam.hpp"
#include "neighcnn/checkpoint.hpp"
#include "neighcnn/losses.hpp"
#include "neighcnn/network.hpp"
#include "neighcnn/speckle.hpp"

namespace neighcnn {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 16;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int max_epochs = 100;
  int patience = 10;
  // An epoch improves when val < best * (1 - min_delta).
  double min_delta = 1e-5;
  std::uint64_t seed = 0;

  void validate() const;
  AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;
  // Sample-weighted training means of the enabled components.
  std::optional<double> euclidean;
  std::optional<double> perceptual;
  std::optional<double> neighbourhood;
  bool improved = false;
  double seconds = 0.0;

  // One JSON object on a single line. Wall time is left out with
  // include_time = false so that stored trajectories stay deterministic.
  std::string to_json(bool include_time = true) const;
  static EpochRecord from_json(const std::string& line);
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_validation_loss = std::numeric_limits<double>::infinity();
  int stop_epoch = 0;

  std::string to_jsonl(bool include_time = true) const;
  static std::vector<EpochRecord> parse_jsonl(const std::string& text);
};

struct TrainingSet {
  std::vector<SpecklePair> train;
  std::vector<SpecklePair> validation;
};

// Mean total loss over `pairs` in infer mode, weighted by sample.
double evaluate_loss(Model& model, const std::vector<SpecklePair>& pairs, const LossConfig& loss,
                     const FeatureExtractor& extractor, std::size_t batch_size);

// Model checkpoint: parameters under their own names (BN running statistics
// included) and the model / loss configs as metadata.
Checkpoint model_checkpoint(const Model& model, const LossConfig& loss);
void put_model_metadata(Checkpoint& ckpt, const NeighCNNConfig& model, const LossConfig& loss);
NeighCNNConfig model_config_from(const Checkpoint& ckpt);
LossConfig loss_config_from(const Checkpoint& ckpt);
// Parameters named `prefix + name`.
Model model_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix = "");

// Shortest decimal form that parses back to the same double.
std::string format_exact(double value);

class Trainer {
 public:
  using EpochCallback = std::function<void(const Trainer&, const EpochRecord&)>;

  Trainer(Model model, LossConfig loss, TrainConfig config, FeatureExtractor extractor);

  // One pass over the shuffled training patches followed by validation and
  // early-stopping bookkeeping. The shuffle depends only on (seed, epoch).
  EpochRecord run_epoch(const TrainingSet& data);

  bool finished() const;

  // Runs epochs until max_epochs or patience is exhausted.
  const TrainHistory& fit(const TrainingSet& data, const EpochCallback& on_epoch = {});

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  // Parameters at the lowest validation loss seen so far.
  const Model& best_model() const { return best_; }
  const TrainHistory& history() const { return history_; }
  const TrainConfig& config() const { return config_; }
  TrainConfig& mutable_config() { return config_; }
  const LossConfig& loss_config() const { return loss_; }
  const Adam& optimizer() const { return adam_; }
  int epochs_completed() const { return epoch_; }
  int epochs_since_improvement() const { return since_improvement_; }

  // Everything needed to continue bit-identically: current and best
  // parameters, Adam moments, counters and the loss trajectory.
  Checkpoint state() const;
  // Training configuration and progress come from `state`; `extractor` must
  // match the one used originally.
  static Trainer resume(const Checkpoint& state, FeatureExtractor extractor);

 private:
  Model model_;
  Model best_;
  LossConfig loss_;
  TrainConfig config_;
  FeatureExtractor extractor_;
  Adam adam_;
  TrainHistory history_;
  int epoch_ = 0;
  int since_improvement_ = 0;
};

}  // namespace neighcnn
