#include "neighcnn/network.hpp"

#include <cmath>
#include <random>

#include "neighcnn/checkpoint.hpp"
#include "neighcnn/error.hpp"

namespace neighcnn {

namespace {

Tensor he_normal(const Shape& shape, std::mt19937_64& engine) {
  const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  Tensor t(shape);
  for (double& v : t.data()) v = dist(engine);
  return t;
}

std::string layer_name(const char* kind, std::size_t layer, const char* field) {
  return std::string(kind) + std::to_string(layer) + "." + field;
}

}  // namespace

void NeighCNNConfig::validate() const {
  if (depth < 2) throw InvalidArgument("network depth must be >= 2, got " + std::to_string(depth));
  if (filters < 1) throw InvalidArgument("filter count must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw InvalidArgument("kernel size must be odd");
}

std::vector<Model::Layer> Model::layout(const NeighCNNConfig& config,
                                        std::vector<Parameter>* params) {
  config.validate();
  const std::size_t k = static_cast<std::size_t>(config.kernel_size);
  const std::size_t f = static_cast<std::size_t>(config.filters);
  std::vector<Layer> layers;
  for (int i = 1; i <= config.depth; ++i) {
    const std::size_t idx = static_cast<std::size_t>(i);
    const bool first = i == 1, last = i == config.depth;
    const std::size_t cin = first ? 1 : f;
    const std::size_t cout = last ? 1 : f;
    Layer layer;
    layer.weight = params->size();
    params->emplace_back(layer_name("conv", idx, "weight"), Tensor(Shape{cout, cin, k, k}));
    layer.bias = params->size();
    params->emplace_back(layer_name("conv", idx, "bias"), Tensor(Shape{cout}));
    if (!first && !last) {
      layer.has_bn = true;
      layer.gamma = params->size();
      params->emplace_back(layer_name("bn", idx, "gamma"), Tensor(Shape{cout}, 1.0));
      layer.beta = params->size();
      params->emplace_back(layer_name("bn", idx, "beta"), Tensor(Shape{cout}));
      layer.running_mean = params->size();
      params->emplace_back(layer_name("bn", idx, "running_mean"), Tensor(Shape{cout}), false);
      layer.running_var = params->size();
      params->emplace_back(layer_name("bn", idx, "running_var"), Tensor(Shape{cout}, 1.0), false);
    }
    layer.relu = !last;
    layers.push_back(layer);
  }
  return layers;
}

Model Model::build(const NeighCNNConfig& config, std::uint64_t seed) {
  Model m;
  m.config_ = config;
  m.layers_ = layout(config, &m.params_);
  std::mt19937_64 engine(seed);
  for (const Layer& layer : m.layers_) {
    Parameter& w = m.params_[layer.weight];
    w.value = he_normal(w.value.shape(), engine);
  }
  return m;
}

Model Model::from_parameters(const NeighCNNConfig& config, const std::vector<Parameter>& params) {
  Model m;
  m.config_ = config;
  m.layers_ = layout(config, &m.params_);
  for (Parameter& p : m.params_) {
    auto it = std::find_if(params.begin(), params.end(),
                           [&](const Parameter& q) { return q.name == p.name; });
    if (it == params.end()) throw DataError("missing parameter " + p.name);
    if (!(it->value.shape() == p.value.shape())) {
      throw DataError("parameter " + p.name + " has shape " + it->value.shape().str() +
                      ", expected " + p.value.shape().str());
    }
    p.value = it->value;
    p.zero_grad();
  }
  return m;
}

ForwardResult Model::forward(const Tensor& speckled, Mode mode) {
  const Shape& s = speckled.shape();
  if (s.rank() != 4 || s[1] != 1) {
    throw ShapeError("model input must be [B,1,H,W], got " + s.str());
  }
  const std::size_t k = static_cast<std::size_t>(config_.kernel_size);
  if (s[2] < k || s[3] < k) throw ShapeError("model input smaller than the kernel: " + s.str());

  const std::size_t pad = k / 2;
  Var input = constant(speckled);
  Var h = input;
  for (const Layer& layer : layers_) {
    h = conv2d(h, neighcnn::parameter(params_[layer.weight]), neighcnn::parameter(params_[layer.bias]), pad);
    if (layer.has_bn) {
      h = batch_norm(h, neighcnn::parameter(params_[layer.gamma]), neighcnn::parameter(params_[layer.beta]),
                     params_[layer.running_mean].value, params_[layer.running_var].value, mode,
                     bn_options);
    }
    if (layer.relu) h = relu(h);
  }
  ForwardResult result;
  result.residual = h;
  result.despeckled = sub(input, h);
  if (mode == Mode::infer) result.clamped = clamp(result.despeckled.value(), 0.0, 1.0);
  return result;
}

std::vector<Parameter*> Model::trainable_parameters() {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) {
    if (p.trainable) out.push_back(&p);
  }
  return out;
}

std::size_t Model::trainable_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) {
    if (p.trainable) n += p.value.numel();
  }
  return n;
}

const Parameter& Model::parameter(const std::string& name) const {
  for (const Parameter& p : params_) {
    if (p.name == name) return p;
  }
  throw InvalidArgument("model has no parameter " + name);
}

Parameter& Model::parameter(const std::string& name) {
  return const_cast<Parameter&>(std::as_const(*this).parameter(name));
}

std::size_t Model::batch_norm_layers() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += l.has_bn ? 1 : 0;
  return n;
}

void Model::zero_all_parameters() {
  for (Parameter& p : params_) {
    if (p.trainable) p.value = Tensor(p.value.shape());
  }
}

Tensor despeckle(Model& model, const Tensor& speckled) {
  NoGradGuard no_grad;
  return model.forward(speckled, Mode::infer).clamped;
}

// ---- feature extractor -----------------------------------------------------

FeatureExtractor::FeatureExtractor(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
  std::size_t channels = 1;
  for (const Block& b : blocks_) {
    if (b.convs.empty()) throw InvalidArgument("feature extractor block without convolutions");
    for (const Conv& c : b.convs) {
      const Shape& w = c.weight.shape();
      if (w.rank() != 4 || w[1] != channels || w[2] != w[3] || w[2] % 2 == 0) {
        throw DataError("malformed feature extractor weight " + w.str());
      }
      if (!(c.bias.shape() == Shape{w[0]})) throw DataError("malformed feature extractor bias");
      channels = w[0];
    }
  }
}

FeatureExtractor FeatureExtractor::tiny_random(int n, std::uint64_t seed) {
  if (n < 0) throw InvalidArgument("feature extractor needs n >= 0");
  std::mt19937_64 engine(seed);
  std::vector<Block> blocks;
  std::size_t cin = 1;
  for (int k = 1; k <= n; ++k) {
    const std::size_t cout = std::size_t{8} << (k - 1);
    Block b;
    b.convs.push_back({he_normal(Shape{cout, cin, 3, 3}, engine), Tensor(Shape{cout})});
    b.pool = PoolKind::average;
    blocks.push_back(std::move(b));
    cin = cout;
  }
  return FeatureExtractor(std::move(blocks));
}

FeatureExtractor FeatureExtractor::from_file(const std::filesystem::path& path, int n) {
  const Checkpoint ckpt = Checkpoint::load(path);
  const std::string pool = ckpt.meta_or("extractor.pool", "max");
  if (pool != "avg" && pool != "max") throw DataError("extractor.pool must be avg or max");
  std::vector<Block> blocks;
  for (int k = 1; n < 0 || k <= n; ++k) {
    const std::string prefix = "block" + std::to_string(k) + ".";
    if (!ckpt.has(prefix + "conv1.weight")) break;
    Block b;
    b.pool = pool == "avg" ? PoolKind::average : PoolKind::max;
    for (int j = 1; ckpt.has(prefix + "conv" + std::to_string(j) + ".weight"); ++j) {
      const std::string base = prefix + "conv" + std::to_string(j);
      Conv c{ckpt.get(base + ".weight"), ckpt.get(base + ".bias")};
      const Shape& w = c.weight.shape();
      if (k == 1 && j == 1 && w.rank() == 4 && w[1] == 3) {
        Tensor folded(Shape{w[0], 1, w[2], w[3]});
        for (std::size_t o = 0; o < w[0]; ++o) {
          for (std::size_t ch = 0; ch < 3; ++ch) {
            for (std::size_t t = 0; t < w[2] * w[3]; ++t) {
              folded[o * w[2] * w[3] + t] += c.weight[(o * 3 + ch) * w[2] * w[3] + t];
            }
          }
        }
        c.weight = std::move(folded);
      }
      b.convs.push_back(std::move(c));
    }
    blocks.push_back(std::move(b));
  }
  if (n > 0 && static_cast<int>(blocks.size()) < n) {
    throw DataError("extractor file " + path.string() + " has " + std::to_string(blocks.size()) +
                    " blocks, " + std::to_string(n) + " requested");
  }
  return FeatureExtractor(std::move(blocks));
}

std::vector<Var> FeatureExtractor::extract(const Var& image, int count) const {
  const Shape& s = image.shape();
  if (s.rank() != 4 || s[1] != 1) throw ShapeError("extractor input must be [B,1,H,W], got " + s.str());
  const std::size_t used = count < 0 ? blocks_.size() : static_cast<std::size_t>(count);
  if (used > blocks_.size()) {
    throw InvalidArgument("requested " + std::to_string(used) + " feature blocks, extractor has " +
                          std::to_string(blocks_.size()));
  }
  const std::size_t div = std::size_t{1} << used;
  if (s[2] % div != 0 || s[3] % div != 0) {
    throw ShapeError("image extents " + s.str() + " not divisible by " + std::to_string(div));
  }
  std::vector<Var> features{image};
  Var h = image;
  for (std::size_t k = 0; k < used; ++k) {
    for (const Conv& c : blocks_[k].convs) {
      const std::size_t pad = c.weight.dim(2) / 2;
      h = relu(conv2d(h, constant(c.weight), constant(c.bias), pad));
    }
    h = blocks_[k].pool == PoolKind::average ? avg_pool2x2(h) : max_pool2x2(h);
    features.push_back(h);
  }
  return features;
}

}  // namespace neighcnn
