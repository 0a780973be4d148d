// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <fmt/core.h>

#include <chrono>
#include <cstring>
#include <cmath>
#include <functional>
#include <random>

#include "neighcnn/dataset.hpp"
#include "neighcnn/experiments.hpp"
#include "neighcnn/gradcheck_suite.hpp"
#include "neighcnn/losses.hpp"
#include "neighcnn/metrics.hpp"
#include "neighcnn/speckle.hpp"
#include "neighcnn/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace neighcnn;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double rel(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

Outcome gamma_moments() {
  std::string detail;
  bool ok = true;
  for (int L : {1, 2, 5, 10, 15, 20}) {
    const Tensor n = sample_gamma_noise(Shape{1000000}, LookCount(L), 7000 + L);
    const double mean = pairwise_sum(n.data()) / 1e6;
    double ss = 0.0;
    for (double v : n.data()) ss += (v - mean) * (v - mean);
    const double var = ss / (1e6 - 1.0);
    const double var_err = std::abs(var - 1.0 / L) * L;
    ok = ok && std::abs(mean - 1.0) < 0.01 && var_err < 0.05;
    detail += fmt::format(" L={}:mean={:.4f},var_rel_err={:.3f}", L, mean, var_err);
  }
  return {ok, detail};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto results = run_gradcheck_suite(SuiteOptions{});
  const double secs = seconds_since(t0);
  bool ok = secs < 120.0;
  double worst_op = 0.0, network = 0.0;
  std::string failed;
  for (const auto& r : results) {
    if (!r.report.passed) {
      ok = false;
      failed += " " + r.name;
    }
    if (r.name.rfind("network", 0) == 0) {
      network = r.report.max_relative_error;
      ok = ok && r.tolerance <= 1e-3;
    } else {
      worst_op = std::max(worst_op, r.report.max_relative_error);
      ok = ok && r.tolerance <= 1e-4;
    }
  }
  return {ok, fmt::format("{} checks, worst op rel err {:.2e}, network {:.2e}, {:.1f}s{}",
                          results.size(), worst_op, network, secs,
                          failed.empty() ? "" : "; failed:" + failed)};
}

Outcome loss_oracles() {
  std::mt19937_64 rng(4242);
  const FeatureExtractor ex = FeatureExtractor::tiny_random(3, 17);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Shape s{1 + static_cast<std::size_t>(trial % 4), 1, 8, 8 * (1 + static_cast<std::size_t>(trial % 2))};
    const Tensor p = oracle::random_uniform(s, rng), c = oracle::random_uniform(s, rng);
    const int n = 1 + trial % 3;
    worst = std::max(worst, rel(euclidean_loss(constant(p), constant(c)).value().item(),
                                oracle::euclidean(p, c)));
    worst = std::max(worst, rel(neighbourhood_loss(constant(p)).value().item(),
                                oracle::neighbourhood(p)));
    worst = std::max(worst, rel(perceptual_loss(constant(p), constant(c), ex, n).value().item(),
                                oracle::perceptual(p, c, ex, n)));
  }
  const Tensor checker(Shape{1, 1, 2, 2}, std::vector<double>{0, 1, 1, 0});
  const double nb = neighbourhood_loss(constant(checker)).value().item();
  const bool exact = nb == 2.0 * std::sqrt(2.0);
  return {worst < 1e-12 && exact,
          fmt::format("worst rel err {:.2e} over 150 comparisons; 2x2 checkerboard = {:.17g}",
                      worst, nb)};
}

Outcome metric_checks() {
  const Tensor a(Shape{1, 1, 8, 8}, 0.3), b(Shape{1, 1, 8, 8}, 0.4);
  const double p = psnr(a, b);
  bool ok = std::abs(p - 20.0) < 1e-9;
  std::mt19937_64 rng(99);
  double self = 0.0, windowed = 0.0;
  for (int i = 0; i < 10; ++i) {
    const Tensor x = oracle::random_uniform(Shape{1, 1, 24, 21}, rng);
    Tensor y = x;
    const Tensor n = oracle::random_normal(x.shape(), rng, 0.1);
    for (std::size_t k = 0; k < y.numel(); ++k) y[k] = std::clamp(y[k] + n[k], 0.0, 1.0);
    self = std::max({self, std::abs(ssim(x, x) - 1.0), std::abs(uqi(x, x) - 1.0)});
    windowed = std::max({windowed, std::abs(ssim(x, y) - oracle::ssim(x, y)),
                         std::abs(uqi(x, y) - oracle::uqi(x, y))});
  }
  ok = ok && self <= 1e-9 && windowed < 1e-8;
  return {ok, fmt::format("PSNR(MSE=0.01) = {:.12f} dB; |index(x,x)-1| <= {:.1e}; "
                          "windowed oracle gap {:.1e}",
                          p, self, windowed)};
}

// Desk-sized data shared by the training criteria.
struct DeskData {
  TempDir dir;
  DatasetManifest manifest;
  double gen_seconds = 0.0;
};

DeskData& desk_data() {
  static DeskData d;
  if (d.manifest.entries.empty()) {
    const auto t0 = Clock::now();
    const GenerationRequest req = GenerationRequest::desk();
    write_synthetic_clean_set(d.dir.path / "clean", req.clean_images_needed(), req.image_size, 71);
    d.manifest = generate_dataset(d.dir.path / "clean", d.dir.path / "data", req);
    d.gen_seconds = seconds_since(t0);
  }
  return d;
}

double column_psnr(const MetricReport& r, const std::string& method) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& row : r.rows) {
    if (row.method != method) continue;
    sum += row.psnr_db * static_cast<double>(row.count);
    n += row.count;
  }
  return sum / static_cast<double>(n);
}

Outcome desk_training() {
  DeskData& d = desk_data();
  const auto t0 = Clock::now();
  const TrainingSet data = load_training_set(d.manifest, {4}, PatchOptions{32, 32});
  const auto test = load_eval_items(d.manifest, Split::test, {4});
  TrainConfig cfg;
  cfg.max_epochs = 20;
  cfg.patience = 20;
  cfg.seed = 5;
  Trainer t(Model::build({6, 16, 3}, 3), LossConfig{}, cfg, FeatureExtractor::tiny_random(3, 0));
  const auto& h = t.fit(data);
  Model best = t.best_model();
  const MetricReport r =
      evaluate_set(test, {{"NeighCNN", [&best](const Tensor& x) { return despeckle(best, x); }}});
  const double secs = seconds_since(t0) + d.gen_seconds;
  const double noisy = column_psnr(r, "Noisy"), ours = column_psnr(r, "NeighCNN");
  const bool fell = h.epochs.size() >= 5 && h.epochs[4].train_loss < h.epochs[0].train_loss;
  return {secs <= 1800.0 && ours - noisy >= 2.0 && fell,
          fmt::format("{} train / {} validation patches, {} epochs in {:.0f}s; test PSNR "
                      "{:.2f} dB vs noisy {:.2f} dB (+{:.2f}); loss epoch1 {:.4f} -> epoch5 {:.4f}",
                      data.train.size(), data.validation.size(), h.epochs.size(), secs, ours,
                      noisy, ours - noisy, h.epochs[0].train_loss,
                      h.epochs.size() >= 5 ? h.epochs[4].train_loss : NAN)};
}

Outcome ablation() {
  DeskData& d = desk_data();
  const TrainingSet data = load_training_set(d.manifest, {4}, PatchOptions{32, 32});
  const auto test = load_eval_items(d.manifest, Split::test, {4});
  TrainConfig cfg;
  cfg.max_epochs = 20;
  cfg.patience = 20;
  cfg.seed = 5;
  std::vector<LossConfig> combos(3);
  combos[0].enabled = {true, false, false};
  combos[1].enabled = {true, false, true};
  combos[2].enabled = {true, true, true};
  const AblationOutcome out = run_ablation(combos, {{6, 16, 3}, cfg, 3}, data, test,
                                           FeatureExtractor::tiny_random(3, 0));
  const std::string table = out.report.to_table("Loss ablation");
  std::fputs(table.c_str(), stdout);
  const std::vector<std::string> want{"Noisy", "L_Eu", "L_Eu+L_N", "L_Eu+L_Per+L_N"};
  bool ok = out.report.methods() == want && out.report.looks() == std::vector<int>{4};
  for (const char* metric : {"PSNR", "SSIM", "UQI"}) ok = ok && table.find(metric) != std::string::npos;
  const double noisy = out.report.row(4, "Noisy").psnr_db;
  std::string detail = fmt::format("Noisy {:.2f} dB", noisy);
  for (std::size_t i = 1; i < want.size(); ++i) {
    const double v = out.report.row(4, want[i]).psnr_db;
    ok = ok && v > noisy;
    detail += fmt::format(", {} {:.2f} dB", want[i], v);
  }
  return {ok, detail};
}

Outcome monotonicity() {
  std::vector<double> means;
  for (int L : {1, 2, 5, 10, 15, 20}) {
    double sum = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Tensor clean = synthesize_scene(64, 500 + s);
      const SpecklePair p = apply_speckle(
          clean, sample_gamma_noise(clean.shape(), LookCount(L), mix_seed(s * 131 + L)),
          LookCount(L));
      sum += psnr(clamp(p.speckled, 0.0, 1.0), clean);
    }
    means.push_back(sum / 20.0);
  }
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (i > 0) ok = ok && means[i] > means[i - 1];
    detail += fmt::format("{}{:.2f}", i ? " < " : "mean speckled PSNR ", means[i]);
  }
  return {ok, detail + " dB"};
}

Outcome determinism() {
  TempDir dir;
  GenerationRequest req;
  req.looks = {2, 4};
  req.train_pairs_per_look = 12;
  req.test_pairs_per_look = 3;
  req.image_size = 32;
  req.seed = 13;
  write_synthetic_clean_set(dir.path / "clean", req.clean_images_needed(), 32, 5);
  const DatasetManifest m1 = generate_dataset(dir.path / "clean", dir.path / "d1", req);
  generate_dataset(dir.path / "clean", dir.path / "d2", req);
  const bool data_same = same_tree(dir.path / "d1", dir.path / "d2");

  const TrainingSet data = load_training_set(m1, {}, PatchOptions{16, 16});
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 4;
  cfg.max_epochs = 3;
  cfg.seed = 8;
  LossConfig loss;
  loss.blocks = 2;
  const auto ex = FeatureExtractor::tiny_random(2, 1);
  Trainer a(Model::build({4, 4, 3}, 2), loss, cfg, ex);
  Trainer b(Model::build({4, 4, 3}, 2), loss, cfg, ex);
  a.fit(data);
  b.fit(data);
  const bool traj_same = a.history().to_jsonl(false) == b.history().to_jsonl(false);
  const Checkpoint ca = model_checkpoint(a.best_model(), loss);
  const bool ckpt_same = ca.encode() == model_checkpoint(b.best_model(), loss).encode() &&
                         a.state().encode() == b.state().encode();

  ca.save(dir.path / "m.ncnn");
  const Checkpoint back = Checkpoint::load(dir.path / "m.ncnn");
  bool round_trip = back.encode() == ca.encode() && back.tensors().size() == ca.tensors().size();
  for (std::size_t i = 0; round_trip && i < ca.tensors().size(); ++i) {
    const auto& x = ca.tensors()[i].tensor.data();
    const auto& y = back.tensors()[i].tensor.data();
    round_trip = x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * 8) == 0;
  }
  return {data_same && traj_same && ckpt_same && round_trip,
          fmt::format("datasets {}, loss trajectories {}, checkpoints {}, round trip {}",
                      data_same ? "identical" : "DIFFER", traj_same ? "identical" : "DIFFER",
                      ckpt_same ? "identical" : "DIFFER", round_trip ? "bit-exact" : "BROKEN")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 gamma noise moments", gamma_moments},
      {"2 finite-difference gradient suite", gradient_suite},
      {"3 loss oracles", loss_oracles},
      {"4 image quality metrics", metric_checks},
      {"5 desk-scale training", desk_training},
      {"6 loss ablation", ablation},
      {"7 PSNR monotone in looks", monotonicity},
      {"8 determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    fmt::print("[{}] criterion {}: {}\n", o.pass ? "PASS" : "FAIL", name, o.detail);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
