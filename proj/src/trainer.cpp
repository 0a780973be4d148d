#include "neighcnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "neighcnn/error.hpp"

namespace neighcnn {

using json = nlohmann::json;

void TrainConfig::validate() const {
  // lr = 0 is allowed: it freezes the parameters, which is useful as a control.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("learning rate must be a finite value >= 0");
  }
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (max_epochs < 1) throw InvalidArgument("max epochs must be >= 1");
  if (patience < 1) throw InvalidArgument("patience must be >= 1");
  if (!(min_delta >= 0.0 && min_delta < 1.0)) throw InvalidArgument("min delta must lie in [0, 1)");
  adam().validate();
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> json_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::string EpochRecord::to_json(bool include_time) const {
  json j;
  j["epoch"] = epoch;
  j["train_loss"] = train_loss;
  j["validation_loss"] = validation_loss;
  j["euclidean"] = optional_json(euclidean);
  j["perceptual"] = optional_json(perceptual);
  j["neighbourhood"] = optional_json(neighbourhood);
  j["improved"] = improved;
  if (include_time) j["seconds"] = seconds;
  return j.dump();
}

EpochRecord EpochRecord::from_json(const std::string& line) {
  try {
    const json j = json::parse(line);
    EpochRecord r;
    r.epoch = j.at("epoch").get<int>();
    r.train_loss = j.at("train_loss").get<double>();
    r.validation_loss = j.at("validation_loss").get<double>();
    r.euclidean = json_optional(j, "euclidean");
    r.perceptual = json_optional(j, "perceptual");
    r.neighbourhood = json_optional(j, "neighbourhood");
    r.improved = j.value("improved", false);
    r.seconds = j.value("seconds", 0.0);
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed history record: ") + e.what());
  }
}

std::string TrainHistory::to_jsonl(bool include_time) const {
  std::string out;
  for (const auto& e : epochs) out += e.to_json(include_time) + "\n";
  return out;
}

std::vector<EpochRecord> TrainHistory::parse_jsonl(const std::string& text) {
  std::vector<EpochRecord> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(EpochRecord::from_json(line));
  }
  return out;
}

std::string format_exact(double value) { return fmt::format("{}", value); }

namespace {

struct Batch {
  Tensor clean;
  Tensor speckled;
};

Batch make_batch(const std::vector<SpecklePair>& pairs, std::span<const std::size_t> order) {
  std::vector<Tensor> clean, speckled;
  clean.reserve(order.size());
  speckled.reserve(order.size());
  for (std::size_t i : order) {
    clean.push_back(pairs[i].clean);
    speckled.push_back(pairs[i].speckled);
  }
  return {stack_batch(clean), stack_batch(speckled)};
}

double parse_double(const Checkpoint& c, const std::string& key) {
  try {
    return std::stod(c.meta(key));
  } catch (const std::logic_error&) {
    throw DataError("checkpoint metadata " + key + " is not a number");
  }
}

long long parse_int(const Checkpoint& c, const std::string& key) {
  try {
    return std::stoll(c.meta(key));
  } catch (const std::logic_error&) {
    throw DataError("checkpoint metadata " + key + " is not an integer");
  }
}

}  // namespace

double evaluate_loss(Model& model, const std::vector<SpecklePair>& pairs, const LossConfig& loss,
                     const FeatureExtractor& extractor, std::size_t batch_size) {
  if (pairs.empty()) throw InvalidArgument("evaluate_loss: no samples");
  if (batch_size < 1) throw InvalidArgument("evaluate_loss: batch size must be >= 1");
  NoGradGuard no_grad;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  double weighted = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - start);
    const Batch b = make_batch(pairs, std::span(order).subspan(start, n));
    const ForwardResult f = model.forward(b.speckled, Mode::infer);
    const LossValue l = total_loss(f.despeckled, constant(b.clean), loss, extractor);
    weighted += l.total.value().item() * static_cast<double>(n);
  }
  return weighted / static_cast<double>(pairs.size());
}

void put_model_metadata(Checkpoint& ckpt, const NeighCNNConfig& model, const LossConfig& loss) {
  ckpt.metadata["model.depth"] = std::to_string(model.depth);
  ckpt.metadata["model.filters"] = std::to_string(model.filters);
  ckpt.metadata["model.kernel_size"] = std::to_string(model.kernel_size);
  ckpt.metadata["loss.alpha"] = format_exact(loss.alpha);
  ckpt.metadata["loss.beta"] = format_exact(loss.beta);
  ckpt.metadata["loss.blocks"] = std::to_string(loss.blocks);
  ckpt.metadata["loss.components"] = loss.label();
  ckpt.metadata["created_by"] = "neighcnn";
}

Checkpoint model_checkpoint(const Model& model, const LossConfig& loss) {
  Checkpoint ckpt;
  put_model_metadata(ckpt, model.config(), loss);
  ckpt.metadata["kind"] = "model";
  for (const Parameter& p : model.parameters()) ckpt.put(p.name, p.value);
  return ckpt;
}

NeighCNNConfig model_config_from(const Checkpoint& ckpt) {
  NeighCNNConfig c;
  c.depth = static_cast<int>(parse_int(ckpt, "model.depth"));
  c.filters = static_cast<int>(parse_int(ckpt, "model.filters"));
  c.kernel_size = static_cast<int>(parse_int(ckpt, "model.kernel_size"));
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("checkpoint model config: ") + e.what());
  }
  return c;
}

LossConfig loss_config_from(const Checkpoint& ckpt) {
  LossConfig c;
  c.alpha = parse_double(ckpt, "loss.alpha");
  c.beta = parse_double(ckpt, "loss.beta");
  c.blocks = static_cast<int>(parse_int(ckpt, "loss.blocks"));
  try {
    c.enabled = parse_components(ckpt.meta("loss.components"));
    c.validate();
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("checkpoint loss config: ") + e.what());
  }
  return c;
}

Model model_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix) {
  const NeighCNNConfig config = model_config_from(ckpt);
  std::vector<Parameter> params;
  for (const auto& t : ckpt.tensors()) {
    if (t.name.rfind(prefix, 0) != 0) continue;
    params.emplace_back(t.name.substr(prefix.size()), t.tensor);
  }
  return Model::from_parameters(config, params);
}

Trainer::Trainer(Model model, LossConfig loss, TrainConfig config, FeatureExtractor extractor)
    : model_(std::move(model)),
      best_(model_),
      loss_(loss),
      config_(config),
      extractor_(std::move(extractor)),
      adam_(config.adam()) {
  loss_.validate();
  config_.validate();
  if (loss_.enabled.perceptual && loss_.blocks > extractor_.blocks()) {
    throw InvalidArgument(fmt::format("perceptual loss uses {} blocks but the extractor has {}",
                                      loss_.blocks, extractor_.blocks()));
  }
}

bool Trainer::finished() const {
  return epoch_ >= config_.max_epochs || since_improvement_ >= config_.patience;
}

EpochRecord Trainer::run_epoch(const TrainingSet& data) {
  if (data.train.empty()) throw InvalidArgument("training split is empty");
  if (data.validation.empty()) throw InvalidArgument("validation split is empty");
  const auto started = std::chrono::steady_clock::now();
  const int epoch = epoch_ + 1;
  adam_.set_learning_rate(config_.learning_rate);

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 engine(mix_seed(config_.seed ^ mix_seed(static_cast<std::uint64_t>(epoch))));
  std::shuffle(order.begin(), order.end(), engine);

  auto params = model_.trainable_parameters();
  double total = 0.0, eu = 0.0, per = 0.0, nb = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size, ++batch_index) {
    const std::size_t n = std::min(config_.batch_size, order.size() - start);
    const Batch b = make_batch(data.train, std::span(order).subspan(start, n));
    try {
      for (Parameter* p : params) p->zero_grad();
      const ForwardResult f = model_.forward(b.speckled, Mode::train);
      const LossValue l = total_loss(f.despeckled, constant(b.clean), loss_, extractor_);
      backward(l.total);
      for (Parameter* p : params) require_finite(p->grad, p->name.c_str());
      adam_.step(params);
      for (Parameter* p : params) require_finite(p->value, p->name.c_str());
      const double w = static_cast<double>(n);
      total += l.total.value().item() * w;
      if (l.euclidean) eu += *l.euclidean * w;
      if (l.perceptual) per += *l.perceptual * w;
      if (l.neighbourhood) nb += *l.neighbourhood * w;
    } catch (const NumericError& e) {
      throw NumericError(
          fmt::format("training diverged at epoch {}, batch {}: {}", epoch, batch_index, e.what()));
    }
  }
  const double count = static_cast<double>(order.size());

  EpochRecord rec;
  rec.epoch = epoch;
  rec.train_loss = total / count;
  if (loss_.enabled.euclidean) rec.euclidean = eu / count;
  if (loss_.enabled.perceptual) rec.perceptual = per / count;
  if (loss_.enabled.neighbourhood) rec.neighbourhood = nb / count;
  try {
    rec.validation_loss =
        evaluate_loss(model_, data.validation, loss_, extractor_, config_.batch_size);
  } catch (const NumericError& e) {
    throw NumericError(fmt::format("validation loss is not finite at epoch {}: {}", epoch, e.what()));
  }

  const double best = history_.best_validation_loss;
  rec.improved = !std::isfinite(best) || rec.validation_loss < best * (1.0 - config_.min_delta);
  if (rec.improved) {
    history_.best_validation_loss = rec.validation_loss;
    history_.best_epoch = epoch;
    best_ = model_;
    since_improvement_ = 0;
  } else {
    ++since_improvement_;
  }
  epoch_ = epoch;
  history_.stop_epoch = epoch;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  history_.epochs.push_back(rec);
  return rec;
}

const TrainHistory& Trainer::fit(const TrainingSet& data, const EpochCallback& on_epoch) {
  while (!finished()) {
    const EpochRecord rec = run_epoch(data);
    if (on_epoch) on_epoch(*this, rec);
  }
  return history_;
}

Checkpoint Trainer::state() const {
  Checkpoint ckpt;
  put_model_metadata(ckpt, model_.config(), loss_);
  ckpt.metadata["kind"] = "training-state";
  ckpt.metadata["train.learning_rate"] = format_exact(config_.learning_rate);
  ckpt.metadata["train.batch_size"] = std::to_string(config_.batch_size);
  ckpt.metadata["train.beta1"] = format_exact(config_.beta1);
  ckpt.metadata["train.beta2"] = format_exact(config_.beta2);
  ckpt.metadata["train.epsilon"] = format_exact(config_.epsilon);
  ckpt.metadata["train.max_epochs"] = std::to_string(config_.max_epochs);
  ckpt.metadata["train.patience"] = std::to_string(config_.patience);
  ckpt.metadata["train.min_delta"] = format_exact(config_.min_delta);
  ckpt.metadata["train.seed"] = std::to_string(config_.seed);
  ckpt.metadata["train.epoch"] = std::to_string(epoch_);
  ckpt.metadata["train.since_improvement"] = std::to_string(since_improvement_);
  ckpt.metadata["train.best_epoch"] = std::to_string(history_.best_epoch);
  ckpt.metadata["train.best_validation_loss"] = format_exact(history_.best_validation_loss);
  ckpt.metadata["train.history"] = history_.to_jsonl(false);
  for (const Parameter& p : model_.parameters()) ckpt.put(p.name, p.value);
  for (const Parameter& p : best_.parameters()) ckpt.put("best." + p.name, p.value);
  adam_.save(ckpt);
  return ckpt;
}

Trainer Trainer::resume(const Checkpoint& state, FeatureExtractor extractor) {
  if (state.meta_or("kind", "") != "training-state") {
    throw DataError("checkpoint does not hold a resumable training state");
  }
  TrainConfig config;
  config.learning_rate = parse_double(state, "train.learning_rate");
  config.batch_size = static_cast<std::size_t>(parse_int(state, "train.batch_size"));
  config.beta1 = parse_double(state, "train.beta1");
  config.beta2 = parse_double(state, "train.beta2");
  config.epsilon = parse_double(state, "train.epsilon");
  config.max_epochs = static_cast<int>(parse_int(state, "train.max_epochs"));
  config.patience = static_cast<int>(parse_int(state, "train.patience"));
  config.min_delta = parse_double(state, "train.min_delta");
  config.seed = std::stoull(state.meta("train.seed"));

  Model current = model_from_checkpoint(state);
  Trainer t(std::move(current), loss_config_from(state), config, std::move(extractor));
  t.best_ = model_from_checkpoint(state, "best.");
  t.adam_.load(state);
  t.epoch_ = static_cast<int>(parse_int(state, "train.epoch"));
  t.since_improvement_ = static_cast<int>(parse_int(state, "train.since_improvement"));
  t.history_.best_epoch = static_cast<int>(parse_int(state, "train.best_epoch"));
  t.history_.best_validation_loss = parse_double(state, "train.best_validation_loss");
  t.history_.epochs = TrainHistory::parse_jsonl(state.meta_or("train.history", ""));
  t.history_.stop_epoch = t.epoch_;
  return t;
}

}  // namespace neighcnn
