#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "neighcnn/autograd.hpp"
#include "neighcnn/ops.hpp"

namespace neighcnn {

struct NeighCNNConfig {
  int depth = 12;
  int filters = 64;
  int kernel_size = 3;

  void validate() const;
  friend bool operator==(const NeighCNNConfig&, const NeighCNNConfig&) = default;
};

struct ForwardResult {
  Var residual;      // predicted additive speckle component
  Var despeckled;    // speckled - residual, unclamped
  Tensor clamped;    // despeckled clipped to [0,1]; filled in infer mode only
};

// Residual despeckler: conv+ReLU, (depth-2) x conv+BN+ReLU, conv; the stack
// predicts the residual, which a subtraction skip removes from the input.
class Model {
 public:
  // He-normal conv kernels, zero biases and BN shifts, unit BN scales, BN
  // running statistics (0, 1). Deterministic in `seed`.
  static Model build(const NeighCNNConfig& config, std::uint64_t seed);

  // Rebuilds a model from named parameters (e.g. a checkpoint); every
  // expected name must be present with the right shape.
  static Model from_parameters(const NeighCNNConfig& config, const std::vector<Parameter>& params);

  ForwardResult forward(const Tensor& speckled, Mode mode);

  const NeighCNNConfig& config() const { return config_; }

  // All parameters in layer order, including BN running statistics
  // (non-trainable).
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter*> trainable_parameters();
  std::size_t trainable_count() const;

  const Parameter& parameter(const std::string& name) const;
  Parameter& parameter(const std::string& name);

  // Number of layers carrying batch normalization.
  std::size_t batch_norm_layers() const;

  void zero_all_parameters();

  BatchNormOptions bn_options;

 private:
  struct Layer {
    std::size_t weight, bias;
    bool has_bn = false;
    std::size_t gamma = 0, beta = 0, running_mean = 0, running_var = 0;
    bool relu = false;
  };

  static std::vector<Layer> layout(const NeighCNNConfig& config, std::vector<Parameter>* params);

  NeighCNNConfig config_;
  std::vector<Parameter> params_;
  std::vector<Layer> layers_;
};

// Denoises one image or a batch in infer mode, returning the clamped output.
Tensor despeckle(Model& model, const Tensor& speckled);

enum class PoolKind { average, max };

// Frozen multi-scale feature extractor for the perceptual loss. V_0 is the
// input itself; block k applies its convolutions (each followed by ReLU) and a
// 2x2 pool. Weights never receive gradients.
class FeatureExtractor {
 public:
  struct Conv {
    Tensor weight;  // [Cout, Cin, k, k]
    Tensor bias;    // [Cout]
  };
  struct Block {
    std::vector<Conv> convs;
    PoolKind pool = PoolKind::average;
  };

  FeatureExtractor() = default;
  explicit FeatureExtractor(std::vector<Block> blocks);

  // n blocks; block k is a 3x3 conv with 8 * 2^(k-1) output channels, ReLU
  // and 2x2 average pooling, He-initialized from `seed`.
  static FeatureExtractor tiny_random(int n, std::uint64_t seed);

  // Block stack stored in the checkpoint format: tensors
  // block<k>.conv<j>.weight / .bias (k, j from 1) and metadata key
  // extractor.pool = avg | max. A first convolution expecting 3 input channels
  // is folded to 1 channel by summing over its input channels, which equals
  // feeding the grayscale image replicated to RGB. With n >= 0 only the first
  // n blocks are kept.
  static FeatureExtractor from_file(const std::filesystem::path& path, int n = -1);

  int blocks() const { return static_cast<int>(blocks_.size()); }
  const std::vector<Block>& block_stack() const { return blocks_; }

  // Required divisor of the image extents: 2^blocks.
  std::size_t divisor() const { return std::size_t{1} << blocks_.size(); }

  // V_0 .. V_n for `image` [B,1,H,W]; the first `count` blocks when count >= 0.
  std::vector<Var> extract(const Var& image, int count = -1) const;

 private:
  std::vector<Block> blocks_;
};

}  // namespace neighcnn
