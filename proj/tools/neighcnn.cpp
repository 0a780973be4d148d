// neighcnn command-line front end: dataset generation, training, inference,
// evaluation, ablation, depth sweep and the gradient-check suite.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "neighcnn/checkpoint.hpp"
#include "neighcnn/dataset.hpp"
#include "neighcnn/error.hpp"
#include "neighcnn/experiments.hpp"
#include "neighcnn/gradcheck_suite.hpp"
#include "neighcnn/image_io.hpp"
#include "neighcnn/metrics.hpp"
#include "neighcnn/parallel.hpp"
#include "neighcnn/trainer.hpp"

namespace fs = std::filesystem;
using namespace neighcnn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed: " + path.string());
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// "2,3,4" or "7..16" (inclusive) or a mix: "1,5..7".
std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  try {
    while (std::getline(ss, part, ',')) {
      if (part.empty()) continue;
      const auto dots = part.find("..");
      if (dots == std::string::npos) {
        out.push_back(std::stoi(part));
      } else {
        const int lo = std::stoi(part.substr(0, dots)), hi = std::stoi(part.substr(dots + 2));
        if (hi < lo) throw InvalidArgument("empty range '" + part + "'");
        for (int v = lo; v <= hi; ++v) out.push_back(v);
      }
    }
  } catch (const std::logic_error&) {
    throw InvalidArgument("cannot parse integer list '" + text + "'");
  }
  return out;
}

// ---- shared option groups ---------------------------------------------------

struct ModelOptions {
  NeighCNNConfig model;
  std::uint64_t init_seed = 0;
  CLI::Option* depth = nullptr;
  CLI::Option* filters = nullptr;

  void add(CLI::App& app) {
    depth = app.add_option("--depth", model.depth, "Convolutional layers")->capture_default_str();
    filters = app.add_option("--filters", model.filters, "Filters per hidden layer")
                  ->capture_default_str();
    app.add_option("--kernel", model.kernel_size, "Kernel size (odd)")->capture_default_str();
    app.add_option("--init-seed", init_seed, "Weight initialization seed")->capture_default_str();
  }
};

struct LossOptions {
  LossConfig loss;
  std::string components = "eu+per+n";
  std::string extractor = "tiny";
  std::uint64_t extractor_seed = 0;

  void add(CLI::App& app, bool with_components = true) {
    if (with_components) {
      app.add_option("--loss", components,
                     "Loss components joined by '+': eu|euclidean, per|perceptual, n|neighbourhood, all")
          ->capture_default_str();
    }
    app.add_option("--alpha", loss.alpha, "Perceptual weight")->capture_default_str();
    app.add_option("--beta", loss.beta, "Neighbourhood weight")->capture_default_str();
    app.add_option("--blocks", loss.blocks, "Feature blocks in the perceptual term")
        ->capture_default_str();
    app.add_option("--extractor", extractor,
                   "Feature extractor: 'tiny' (seeded random blocks) or a checkpoint file")
        ->capture_default_str();
    app.add_option("--extractor-seed", extractor_seed, "Seed of the tiny extractor")
        ->capture_default_str();
  }

  LossConfig resolved() const {
    LossConfig c = loss;
    c.enabled = parse_components(components);
    c.validate();
    return c;
  }

  FeatureExtractor build_extractor() const {
    if (extractor == "tiny") return FeatureExtractor::tiny_random(loss.blocks, extractor_seed);
    return FeatureExtractor::from_file(extractor, loss.blocks);
  }

  void put_metadata(Checkpoint& ckpt) const {
    ckpt.metadata["extractor.kind"] = extractor == "tiny" ? "tiny" : "file";
    ckpt.metadata["extractor.seed"] = std::to_string(extractor_seed);
    if (extractor != "tiny") ckpt.metadata["extractor.path"] = extractor;
  }
};

FeatureExtractor extractor_from(const Checkpoint& ckpt) {
  const LossConfig loss = loss_config_from(ckpt);
  const std::string kind = ckpt.meta_or("extractor.kind", "tiny");
  if (kind == "tiny") {
    return FeatureExtractor::tiny_random(loss.blocks, std::stoull(ckpt.meta_or("extractor.seed", "0")));
  }
  return FeatureExtractor::from_file(ckpt.meta("extractor.path"), loss.blocks);
}

struct TrainOptions {
  TrainConfig train;
  PatchOptions patches{64, 64, std::nullopt};
  std::size_t max_patches = 0;
  std::string looks;
  CLI::Option* patch = nullptr;
  CLI::Option* stride = nullptr;

  void add(CLI::App& app) {
    app.add_option("--lr", train.learning_rate, "Adam learning rate")->capture_default_str();
    app.add_option("--batch", train.batch_size, "Mini-batch size")->capture_default_str();
    app.add_option("--adam-beta1", train.beta1)->capture_default_str();
    app.add_option("--adam-beta2", train.beta2)->capture_default_str();
    app.add_option("--adam-epsilon", train.epsilon)->capture_default_str();
    app.add_option("--epochs", train.max_epochs, "Maximum epochs")->capture_default_str();
    app.add_option("--patience", train.patience, "Epochs without validation improvement")
        ->capture_default_str();
    app.add_option("--min-delta", train.min_delta, "Relative improvement threshold")
        ->capture_default_str();
    app.add_option("--seed", train.seed, "Shuffle seed")->capture_default_str();
    patch = app.add_option("--patch", patches.patch_size, "Training patch size")->capture_default_str();
    stride = app.add_option("--stride", patches.stride, "Patch stride")->capture_default_str();
    app.add_option("--max-patches", max_patches, "Patches kept per image (0 = all)")
        ->capture_default_str();
    app.add_option("--looks", looks, "Looks to train on, e.g. 2,4 (default: all)");
  }

  PatchOptions resolved_patches() const {
    PatchOptions p = patches;
    if (max_patches > 0) p.max_per_image = max_patches;
    return p;
  }
};

// The desk preset fills in whatever was not given explicitly.
void apply_desk_preset(ModelOptions& m, TrainOptions& t) {
  if (m.depth->count() == 0) m.model.depth = 6;
  if (m.filters->count() == 0) m.model.filters = 16;
  if (t.patch->count() == 0) t.patches.patch_size = 32;
  if (t.stride->count() == 0) t.patches.stride = 32;
}

void log_epoch(const std::string& run, const EpochRecord& r) {
  std::string parts;
  if (r.euclidean) parts += fmt::format(" eu={:.6g}", *r.euclidean);
  if (r.perceptual) parts += fmt::format(" per={:.6g}", *r.perceptual);
  if (r.neighbourhood) parts += fmt::format(" n={:.6g}", *r.neighbourhood);
  fmt::print(stderr, "{}epoch {:3d}  train={:.6g} val={:.6g}{}{}  ({:.1f}s)\n",
             run.empty() ? "" : "[" + run + "] ", r.epoch, r.train_loss, r.validation_loss, parts,
             r.improved ? " *" : "", r.seconds);
}

// ---- gen-data ----------------------------------------------------------------

struct GenDataArgs {
  std::string clean_dir;
  std::string out_dir;
  std::string preset = "desk";
  std::string looks, test_looks;
  std::size_t train_pairs = 0, test_pairs = 0, size = 0;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  std::size_t synthesize = 0;
};

int run_gen_data(const GenDataArgs& a) {
  GenerationRequest req;
  if (a.preset == "paper") {
    req = GenerationRequest::full_scale();
  } else if (a.preset == "desk") {
    req = GenerationRequest::desk();
  } else if (a.preset != "none") {
    throw InvalidArgument("unknown preset '" + a.preset + "' (paper | desk | none)");
  }
  if (!a.looks.empty()) req.looks = parse_int_list(a.looks);
  if (!a.test_looks.empty()) req.test_looks = parse_int_list(a.test_looks);
  if (a.train_pairs > 0) req.train_pairs_per_look = a.train_pairs;
  if (a.test_pairs > 0) req.test_pairs_per_look = a.test_pairs;
  if (a.size > 0) req.image_size = a.size;
  req.validation_fraction = a.validation_fraction;
  req.seed = a.seed;
  req.validate();

  const fs::path out = a.out_dir;
  if (a.clean_dir.empty() == (a.synthesize == 0)) {
    throw InvalidArgument("give exactly one of --clean-dir or --synthesize-clean");
  }
  if (a.synthesize == 0) {
    const DatasetManifest m = generate_dataset(a.clean_dir, out, req);
    fmt::print("wrote {} entries to {}\n", m.entries.size(), out.string());
    return kExitOk;
  }

  // Synthetic scenes are staged inside the output directory and removed once
  // the dataset has copied them.
  if (a.synthesize < req.clean_images_needed()) {
    throw InvalidArgument(fmt::format("--synthesize-clean {} is fewer than the {} images needed",
                                      a.synthesize, req.clean_images_needed()));
  }
  const bool created = !fs::exists(out);
  const fs::path staging = out / ".synthetic-source";
  try {
    write_synthetic_clean_set(staging, a.synthesize, req.image_size, mix_seed(a.seed ^ 0x5ce0e5ull));
    const DatasetManifest m = generate_dataset(staging, out, req);
    fs::remove_all(staging);
    fmt::print("wrote {} entries to {}\n", m.entries.size(), out.string());
  } catch (...) {
    std::error_code ec;
    if (created) {
      fs::remove_all(out, ec);
    } else {
      fs::remove_all(staging, ec);
    }
    throw;
  }
  return kExitOk;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string preset = "none";
  bool resume = false;
  ModelOptions model;
  LossOptions loss;
  TrainOptions train;
};

int run_train(TrainArgs& a) {
  if (a.preset == "desk") {
    apply_desk_preset(a.model, a.train);
  } else if (a.preset != "none") {
    throw InvalidArgument("unknown preset '" + a.preset + "' (desk | none)");
  }
  const fs::path out = a.out;
  const fs::path state_path = out / "state.ncnn";
  const fs::path model_path = out / "model.ncnn";
  const fs::path history_path = out / "history.jsonl";

  const DatasetManifest manifest = DatasetManifest::load(a.data);
  const TrainingSet data =
      load_training_set(manifest, parse_int_list(a.train.looks), a.train.resolved_patches());
  fmt::print(stderr, "{} training / {} validation patches\n", data.train.size(),
             data.validation.size());

  std::optional<Trainer> trainer;
  std::vector<EpochRecord> prior;
  Checkpoint extractor_meta;
  if (a.resume) {
    const Checkpoint state = Checkpoint::load(state_path);
    trainer.emplace(Trainer::resume(state, extractor_from(state)));
    // Only the epoch budget may change on resume.
    trainer->mutable_config().max_epochs = std::max(trainer->config().max_epochs, a.train.train.max_epochs);
    for (const auto& key : {"extractor.kind", "extractor.seed", "extractor.path"}) {
      if (state.metadata.count(key)) extractor_meta.metadata[key] = state.meta(key);
    }
    prior = fs::exists(history_path) ? TrainHistory::parse_jsonl(read_text(history_path))
                                     : trainer->history().epochs;
    std::erase_if(prior, [&](const EpochRecord& r) { return r.epoch > trainer->epochs_completed(); });
    fmt::print(stderr, "resuming after epoch {}\n", trainer->epochs_completed());
  } else {
    const LossConfig loss = a.loss.resolved();
    a.model.model.validate();
    trainer.emplace(Model::build(a.model.model, a.model.init_seed), loss, a.train.train,
                    a.loss.build_extractor());
    a.loss.put_metadata(extractor_meta);
  }
  fs::create_directories(out);

  std::vector<EpochRecord> history = prior;
  auto save_all = [&](const Trainer& t) {
    Checkpoint state = t.state();
    Checkpoint best = model_checkpoint(t.best_model(), t.loss_config());
    for (const auto& [k, v] : extractor_meta.metadata) {
      state.metadata[k] = v;
      best.metadata[k] = v;
    }
    state.save(state_path);
    best.save(model_path);
    std::string text;
    for (const auto& r : history) text += r.to_json() + "\n";
    write_text(history_path, text);
  };

  while (!trainer->finished()) {
    const EpochRecord rec = trainer->run_epoch(data);
    history.push_back(rec);
    log_epoch("", rec);
    save_all(*trainer);
  }
  const TrainHistory& h = trainer->history();
  fmt::print("stopped after epoch {}; best validation loss {:.6g} at epoch {}\n", h.stop_epoch,
             h.best_validation_loss, h.best_epoch);
  fmt::print("model: {}\n", model_path.string());
  return kExitOk;
}

// ---- despeckle ---------------------------------------------------------------

struct DespeckleArgs {
  std::string model;
  std::vector<std::string> inputs;
  std::string out;
};

int run_despeckle(const DespeckleArgs& a) {
  Model model = model_from_checkpoint(Checkpoint::load(a.model));
  const fs::path out = a.out;
  std::vector<std::pair<fs::path, Tensor>> loaded;
  for (const auto& in : a.inputs) loaded.emplace_back(in, read_image(in));
  fs::create_directories(out);
  for (const auto& [path, image] : loaded) {
    // The raster keeps the unclamped estimate; the PNG preview is clipped.
    Tensor result;
    {
      NoGradGuard no_grad;
      result = model.forward(image, Mode::infer).despeckled.value();
    }
    const std::string stem = path.stem().string();
    write_raster(out / (stem + ".spkl"), result);
    write_png8(out / (stem + ".png"), result);
    fmt::print("{} -> {}\n", path.string(), (out / (stem + ".spkl")).string());
  }
  return kExitOk;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> models;
  std::vector<std::string> labels;
  std::string data;
  std::string looks;
  std::string split = "test";
  std::string out;
};

int run_eval(const EvalArgs& a) {
  if (!a.labels.empty() && a.labels.size() != a.models.size()) {
    throw InvalidArgument("give one --label per --model");
  }
  const DatasetManifest manifest = DatasetManifest::load(a.data);
  const auto items = load_eval_items(manifest, parse_split(a.split), parse_int_list(a.looks));
  std::vector<Model> models;
  for (const auto& m : a.models) models.push_back(model_from_checkpoint(Checkpoint::load(m)));
  std::vector<LabeledDespeckler> methods;
  for (std::size_t i = 0; i < models.size(); ++i) {
    std::string label = a.labels.empty() ? (models.size() == 1 ? std::string("NeighCNN")
                                                               : fs::path(a.models[i]).stem().string())
                                         : a.labels[i];
    Model* m = &models[i];
    methods.push_back({label, [m](const Tensor& x) { return despeckle(*m, x); }});
  }
  const MetricReport report = evaluate_set(items, methods);
  const std::string table = report.to_table("Quantitative evaluation (" + a.split + " split)");
  fmt::print("{}", table);
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "metrics.csv", report.to_csv());
    write_text(fs::path(a.out) / "metrics.txt", table);
  }
  return kExitOk;
}

// ---- ablate / sweep-depth ----------------------------------------------------

struct ExperimentArgs {
  std::string data;
  std::string out;
  std::string preset = "none";
  std::string combos;
  std::string depths = "7..16";
  std::string eval_looks;
  ModelOptions model;
  LossOptions loss;
  TrainOptions train;
};

struct ExperimentInputs {
  ExperimentSetup setup;
  TrainingSet data;
  std::vector<EvalItem> test;
  FeatureExtractor extractor;
};

ExperimentInputs prepare_experiment(ExperimentArgs& a, const std::vector<int>& train_looks,
                                    const std::vector<int>& eval_looks) {
  if (a.preset == "desk") {
    apply_desk_preset(a.model, a.train);
  } else if (a.preset != "none") {
    throw InvalidArgument("unknown preset '" + a.preset + "' (desk | none)");
  }
  a.model.model.validate();
  a.train.train.validate();
  const DatasetManifest manifest = DatasetManifest::load(a.data);
  ExperimentInputs in;
  in.setup = {a.model.model, a.train.train, a.model.init_seed};
  in.data = load_training_set(manifest, train_looks, a.train.resolved_patches());
  in.test = load_eval_items(manifest, Split::test, eval_looks);
  in.extractor = a.loss.build_extractor();
  return in;
}

int run_ablate(ExperimentArgs& a) {
  std::vector<LossConfig> combos;
  if (a.combos.empty()) {
    combos = ablation_combos(a.loss.loss);
  } else {
    std::stringstream ss(a.combos);
    std::string part;
    while (std::getline(ss, part, ',')) {
      LossConfig c = a.loss.loss;
      c.enabled = parse_components(part);
      c.validate();
      combos.push_back(c);
    }
  }
  const auto looks = parse_int_list(a.train.looks);
  ExperimentInputs in = prepare_experiment(a, looks, parse_int_list(a.eval_looks));
  const AblationOutcome result =
      run_ablation(combos, in.setup, in.data, in.test, in.extractor, log_epoch);
  const std::string table = result.report.to_table("Loss ablation");
  fmt::print("{}", table);
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "ablation.csv", result.report.to_csv());
  write_text(fs::path(a.out) / "ablation.txt", table);
  for (std::size_t i = 0; i < result.labels.size(); ++i) {
    std::string name = result.labels[i];
    std::replace(name.begin(), name.end(), '+', '_');
    std::replace(name.begin(), name.end(), '#', '_');
    write_text(fs::path(a.out) / ("history_" + name + ".jsonl"), result.histories[i].to_jsonl());
  }
  return kExitOk;
}

int run_sweep(ExperimentArgs& a, int look) {
  const LossConfig loss = a.loss.resolved();
  ExperimentInputs in = prepare_experiment(a, {look}, {look});
  const auto points = run_depth_sweep(parse_int_list(a.depths), in.setup, loss, in.data, in.test,
                                      in.extractor, log_epoch);
  const std::string csv = depth_sweep_csv(points);
  fmt::print("{}", csv);
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "depth_sweep.csv", csv);
  return kExitOk;
}

// ---- gradcheck ---------------------------------------------------------------

int run_gradcheck(const SuiteOptions& options, const std::string& filter) {
  const auto start = std::chrono::steady_clock::now();
  const auto results = run_gradcheck_suite(options, filter);
  if (results.empty()) throw InvalidArgument("no gradient check matches '" + filter + "'");
  int failed = 0;
  for (const auto& r : results) {
    fmt::print("{}  {:<28} max_rel_err={:.3e}  tol={:.0e}\n", r.report.passed ? "PASS" : "FAIL",
               r.name, r.report.max_relative_error, r.tolerance);
    if (!r.report.passed) ++failed;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  fmt::print("{} of {} checks passed in {:.1f}s\n", results.size() - failed, results.size(), secs);
  return failed == 0 ? kExitOk : kExitNumeric;
}

// Expands `<subcommand> ... --config FILE` into `--key=value` arguments placed
// ahead of the command-line ones. Keys also given on the command line are
// dropped, so flags win over the file. Returns the arguments in the reversed
// order CLI11 parses them from.
std::vector<std::string> with_config_file(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::optional<std::string> path;
  std::size_t config_at = 0;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      config_at = i;
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      config_at = i;
    }
  }
  if (path) {
    std::ifstream in(*path);
    if (!in) throw DataError("cannot read config file " + *path);
    auto given = [&](const std::string& key) {
      const std::string flag = "--" + key;
      for (const auto& a : args) {
        if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
      }
      return false;
    };
    std::vector<std::string> expanded;
    for (const CLI::ConfigItem& item : CLI::ConfigBase().from_config(in)) {
      if (!item.parents.empty() || item.name == "++" || item.name == "--") continue;
      if (item.name == "config" || given(item.name)) continue;
      for (const auto& v : item.inputs) expanded.push_back("--" + item.name + "=" + v);
    }
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(config_at),
               args.begin() + static_cast<std::ptrdiff_t>(
                                  args[config_at] == "--config" ? config_at + 2 : config_at + 1));
    args.insert(args.begin() + 1, expanded.begin(), expanded.end());
  }
  std::reverse(args.begin(), args.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  configure_threads_from_env();

  CLI::App app{"neighcnn: multiplicative speckle simulation and residual CNN despeckling"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  auto with_config = [](CLI::App* sub) {
    // Read by with_config_file() before parsing.
    sub->add_option("--config")
        ->type_name("FILE")
        ->description("Flat key=value file; keys are option names without dashes");
    return sub;
  };

  GenDataArgs gen;
  auto* gen_cmd = with_config(app.add_subcommand("gen-data", "Generate a speckled dataset"));
  gen_cmd->add_option("--clean-dir", gen.clean_dir, "Directory of clean PNG/PGM images");
  gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory")->required();
  gen_cmd->add_option("--preset", gen.preset, "paper | desk | none")->capture_default_str();
  gen_cmd->add_option("--looks", gen.looks, "Training looks, e.g. 2..8,10");
  gen_cmd->add_option("--test-looks", gen.test_looks, "Test looks (default: training looks)");
  gen_cmd->add_option("--train-pairs", gen.train_pairs, "Train+validation pairs per look");
  gen_cmd->add_option("--test-pairs", gen.test_pairs, "Test pairs per look");
  gen_cmd->add_option("--size", gen.size, "Image size (centre crop)");
  gen_cmd->add_option("--validation-fraction", gen.validation_fraction)->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Global seed")->capture_default_str();
  gen_cmd->add_option("--synthesize-clean", gen.synthesize,
                      "Use N procedurally synthesized clean scenes instead of --clean-dir");

  TrainArgs train;
  auto* train_cmd = with_config(app.add_subcommand("train", "Train a despeckling model"));
  train_cmd->add_option("--data", train.data, "Dataset directory or manifest.csv")->required();
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--preset", train.preset, "desk | none")->capture_default_str();
  train_cmd->add_flag("--resume", train.resume, "Continue from <out>/state.ncnn");
  train.model.add(*train_cmd);
  train.loss.add(*train_cmd);
  train.train.add(*train_cmd);

  DespeckleArgs desp;
  auto* desp_cmd = with_config(app.add_subcommand("despeckle", "Despeckle images with a model"));
  desp_cmd->add_option("--model", desp.model, "Model checkpoint")->required();
  desp_cmd->add_option("--out", desp.out, "Output directory")->required();
  desp_cmd->add_option("inputs", desp.inputs, "PNG / PGM / SPKL images")->required();

  EvalArgs eval;
  auto* eval_cmd = with_config(app.add_subcommand("eval", "Score models on a dataset split"));
  eval_cmd->add_option("--model", eval.models, "Model checkpoint (repeatable)");
  eval_cmd->add_option("--label", eval.labels, "Column label per model");
  eval_cmd->add_option("--data", eval.data, "Dataset directory or manifest.csv")->required();
  eval_cmd->add_option("--looks", eval.looks, "Looks to score (default: all)");
  eval_cmd->add_option("--split", eval.split, "test | validation | train")->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "Directory for metrics.csv / metrics.txt");

  ExperimentArgs abl;
  auto* abl_cmd = with_config(app.add_subcommand("ablate", "Loss-combination ablation"));
  abl_cmd->add_option("--data", abl.data, "Dataset directory or manifest.csv")->required();
  abl_cmd->add_option("--out", abl.out, "Output directory")->required();
  abl_cmd->add_option("--preset", abl.preset, "desk | none")->capture_default_str();
  abl_cmd->add_option("--combos", abl.combos,
                      "Comma-separated combos, e.g. eu,eu+n,eu+per+n (default: all six)");
  abl_cmd->add_option("--eval-looks", abl.eval_looks, "Test looks to score (default: all)");
  abl.model.add(*abl_cmd);
  abl.loss.add(*abl_cmd, false);
  abl.train.add(*abl_cmd);

  ExperimentArgs sweep;
  int sweep_look = 4;
  auto* sweep_cmd = with_config(app.add_subcommand("sweep-depth", "PSNR versus network depth"));
  sweep_cmd->add_option("--data", sweep.data, "Dataset directory or manifest.csv")->required();
  sweep_cmd->add_option("--out", sweep.out, "Output directory")->required();
  sweep_cmd->add_option("--preset", sweep.preset, "desk | none")->capture_default_str();
  sweep_cmd->add_option("--depths", sweep.depths, "Depth list, e.g. 7..16")->capture_default_str();
  sweep_cmd->add_option("--look", sweep_look, "Look count used for training and scoring")
      ->capture_default_str();
  sweep.model.add(*sweep_cmd);
  sweep.loss.add(*sweep_cmd);
  sweep.train.add(*sweep_cmd);

  SuiteOptions grad;
  std::string grad_filter;
  auto* grad_cmd = with_config(app.add_subcommand("gradcheck", "Finite-difference gradient suite"));
  grad_cmd->add_option("--tolerance", grad.tolerance, "Relative error bound for single ops")
      ->capture_default_str();
  grad_cmd->add_option("--network-tolerance", grad.network_tolerance,
                       "Relative error bound for the end-to-end network")
      ->capture_default_str();
  grad_cmd->add_option("--seed", grad.seed)->capture_default_str();
  grad_cmd->add_option("--filter", grad_filter, "Run checks whose name contains this text");
  grad_cmd->add_option("--corrupt", grad.corrupt_analytic,
                       "Scale analytic gradients (negative control)")
      ->group("");

  std::vector<std::string> args;
  try {
    args = with_config_file(argc, argv);
  } catch (const DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kExitData;
  }
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(train);
    if (*desp_cmd) return run_despeckle(desp);
    if (*eval_cmd) return run_eval(eval);
    if (*abl_cmd) return run_ablate(abl);
    if (*sweep_cmd) return run_sweep(sweep, sweep_look);
    if (*grad_cmd) return run_gradcheck(grad, grad_filter);
  } catch (const NumericError& e) {
    fmt::print(stderr, "numeric failure: {}\n", e.what());
    return kExitNumeric;
  } catch (const InvalidArgument& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
