#include <gtest/gtest.h>

#include <cmath>

#include "neighcnn/adam.hpp"
#include "neighcnn/error.hpp"
#include "neighcnn/experiments.hpp"
#include "neighcnn/speckle.hpp"
#include "neighcnn/trainer.hpp"

using namespace neighcnn;

TEST(Adam, TwoScalarStepsByHand) {
  const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  std::vector<double> theta{1.0}, m{0.0}, v{0.0};
  adam_update(theta, std::vector<double>{0.5}, m, v, 1, cfg);
  // m = 0.05, v = 0.00025, mhat = 0.5, vhat = 0.25.
  double want = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
  EXPECT_NEAR(theta[0], want, 1e-12);
  adam_update(theta, std::vector<double>{-0.2}, m, v, 2, cfg);
  const double m2 = 0.9 * 0.05 + 0.1 * -0.2;
  const double v2 = 0.999 * 0.00025 + 0.001 * 0.04;
  const double mhat = m2 / (1 - 0.81), vhat = v2 / (1 - 0.998001);
  want -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  EXPECT_NEAR(m[0], m2, 1e-15);
  EXPECT_NEAR(v[0], v2, 1e-15);
  EXPECT_NEAR(theta[0], want, 1e-12);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Parameter p("w", Tensor(Shape{3}, std::vector<double>{0.3, -1.0, 2.0}));
  p.grad = Tensor(Shape{3});
  const Tensor before = p.value;
  Adam adam(AdamConfig{0.01});
  for (int i = 0; i < 5; ++i) adam.step({&p});
  EXPECT_EQ(p.value, before);
  EXPECT_EQ(adam.steps(), 5);
}

TEST(Adam, MinimisesSquare) {
  Parameter p("theta", Tensor(Shape{1}, 1.0));
  Adam adam(AdamConfig{0.05});
  for (int i = 0; i < 100; ++i) {
    p.grad = Tensor(Shape{1}, 2.0 * p.value[0]);
    adam.step({&p});
  }
  EXPECT_LT(std::abs(p.value[0]), 0.1);
}

TEST(Adam, SkipsFrozenAndRoundTrips) {
  Parameter a("a", Tensor(Shape{2}, 1.0)), f("f", Tensor(Shape{2}, 1.0), false);
  a.grad = Tensor(Shape{2}, 1.0);
  f.grad = Tensor(Shape{2}, 1.0);
  Adam adam(AdamConfig{0.1});
  adam.step({&a, &f});
  EXPECT_EQ(f.value, Tensor(Shape{2}, 1.0));
  EXPECT_NE(a.value, Tensor(Shape{2}, 1.0));

  Checkpoint c;
  adam.save(c);
  Adam other(AdamConfig{0.1});
  other.load(Checkpoint::decode(c.encode()));
  Parameter b = a;
  adam.step({&a});
  other.step({&b});
  EXPECT_EQ(a.value, b.value);
  EXPECT_THROW(AdamConfig{-1.0}.validate(), InvalidArgument);
  EXPECT_THROW((AdamConfig{0.1, 1.0}.validate()), InvalidArgument);
}

namespace {

std::vector<SpecklePair> pairs(std::size_t n, std::uint64_t seed, std::size_t size = 16) {
  std::vector<SpecklePair> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor clean = synthesize_scene(size, seed * 100 + i);
    const LookCount looks(1 + static_cast<int>(i % 4));
    out.push_back(apply_speckle(clean, sample_gamma_noise(clean.shape(), looks, seed + 31 * i),
                                looks));
  }
  return out;
}

TrainingSet small_set() { return {pairs(10, 1), pairs(4, 2)}; }

std::vector<EvalItem> eval_items(std::size_t n) {
  std::vector<EvalItem> items;
  for (const SpecklePair& p : pairs(n, 3)) items.push_back({4, p.clean, p.speckled});
  return items;
}

NeighCNNConfig tiny_model(int depth = 3) { return {depth, 4, 3}; }

TrainConfig quick(int epochs) {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.batch_size = 4;
  c.max_epochs = epochs;
  c.patience = epochs;
  c.seed = 11;
  return c;
}

LossConfig loss_cfg() {
  LossConfig l;
  l.blocks = 2;
  return l;
}

}  // namespace

TEST(Trainer, ConfigValidation) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = TrainConfig{};
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = TrainConfig{};
  c.learning_rate = 0;
  EXPECT_NO_THROW(c.validate());
}

TEST(Trainer, IdenticalSeedsIdenticalRuns) {
  const auto ex = FeatureExtractor::tiny_random(2, 5);
  const TrainingSet data = small_set();
  Trainer a(Model::build(tiny_model(), 9), loss_cfg(), quick(3), ex);
  Trainer b(Model::build(tiny_model(), 9), loss_cfg(), quick(3), ex);
  a.fit(data);
  b.fit(data);
  EXPECT_EQ(a.history().to_jsonl(false), b.history().to_jsonl(false));
  EXPECT_EQ(model_checkpoint(a.best_model(), loss_cfg()).encode(),
            model_checkpoint(b.best_model(), loss_cfg()).encode());
  EXPECT_EQ(a.state().encode(), b.state().encode());

  TrainConfig other = quick(3);
  other.seed = 12;
  Trainer c(Model::build(tiny_model(), 9), loss_cfg(), other, ex);
  c.fit(data);
  EXPECT_NE(a.history().to_jsonl(false), c.history().to_jsonl(false));
}

TEST(Trainer, LossDecreasesOnSmallSet) {
  const auto ex = FeatureExtractor::tiny_random(2, 5);
  Trainer t(Model::build(tiny_model(), 9), loss_cfg(), quick(5), ex);
  const auto& h = t.fit(small_set());
  ASSERT_EQ(h.epochs.size(), 5u);
  EXPECT_LT(h.epochs[4].train_loss, h.epochs[0].train_loss);
  for (const auto& e : h.epochs) {
    ASSERT_TRUE(e.euclidean && e.perceptual && e.neighbourhood);
    const double total = *e.euclidean + 1e-4 * *e.perceptual + 1e-3 * *e.neighbourhood;
    EXPECT_NEAR(e.train_loss, total, 1e-9 * total);
  }
}

TEST(Trainer, ZeroLearningRateChangesNothing) {
  const auto ex = FeatureExtractor::tiny_random(2, 5);
  const TrainingSet data = small_set();
  // Depth 2 has no batch norm, so no running statistics move either.
  Model model = Model::build(tiny_model(2), 4);
  const double before = evaluate_loss(model, data.validation, loss_cfg(), ex, 4);
  TrainConfig cfg = quick(3);
  cfg.learning_rate = 0.0;
  Trainer t(model, loss_cfg(), cfg, ex);
  t.fit(data);
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    EXPECT_EQ(t.model().parameters()[i].value, model.parameters()[i].value);
  }
  for (const auto& e : t.history().epochs) EXPECT_EQ(e.validation_loss, before);

  // With batch norm the trainable parameters still stay put.
  Model bn = Model::build(tiny_model(4), 4);
  Trainer tb(bn, loss_cfg(), cfg, ex);
  tb.fit(data);
  for (std::size_t i = 0; i < bn.parameters().size(); ++i) {
    if (bn.parameters()[i].trainable)
      EXPECT_EQ(tb.model().parameters()[i].value, bn.parameters()[i].value);
  }
}

TEST(Trainer, EarlyStoppingBookkeeping) {
  const auto ex = FeatureExtractor::tiny_random(2, 5);
  TrainConfig cfg = quick(10);
  cfg.learning_rate = 0.0;
  cfg.patience = 2;
  Trainer t(Model::build(tiny_model(2), 4), loss_cfg(), cfg, ex);
  const auto& h = t.fit(small_set());
  // Only the first epoch improves on +inf.
  ASSERT_EQ(h.epochs.size(), 3u);
  EXPECT_TRUE(h.epochs[0].improved);
  EXPECT_FALSE(h.epochs[1].improved);
  EXPECT_EQ(h.best_epoch, 1);
  EXPECT_EQ(h.stop_epoch, 3);
  EXPECT_EQ(h.best_validation_loss, h.epochs[0].validation_loss);
  EXPECT_TRUE(t.finished());
}

TEST(Trainer, BestModelTracksLowestValidation) {
  const auto ex = FeatureExtractor::tiny_random(2, 5);
  const TrainingSet data = small_set();
  Trainer t(Model::build(tiny_model(), 9), loss_cfg(), quick(4), ex);
  const auto& h = t.fit(data);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : h.epochs) best = std::min(best, e.validation_loss);
  EXPECT_EQ(h.best_validation_loss, best);
  Model m = t.best_model();
  EXPECT_EQ(evaluate_loss(m, data.validation, loss_cfg(), ex, 4), best);
}

TEST(Trainer, EmptySplitsRejected) {
  const auto ex = FeatureExtractor::tiny_random(2, 5);
  Trainer t(Model::build(tiny_model(), 9), loss_cfg(), quick(2), ex);
  EXPECT_THROW(t.run_epoch({{}, pairs(2, 1)}), InvalidArgument);
  EXPECT_THROW(t.run_epoch({pairs(2, 1), {}}), InvalidArgument);
}

TEST(Trainer, ResumeMatchesUninterrupted) {
  const auto ex = FeatureExtractor::tiny_random(2, 5);
  const TrainingSet data = small_set();
  Trainer full(Model::build(tiny_model(), 9), loss_cfg(), quick(4), ex);
  full.fit(data);

  TrainConfig half = quick(4);
  Trainer part(Model::build(tiny_model(), 9), loss_cfg(), half, ex);
  part.run_epoch(data);
  part.run_epoch(data);
  Trainer resumed = Trainer::resume(Checkpoint::decode(part.state().encode()), ex);
  EXPECT_EQ(resumed.epochs_completed(), 2);
  resumed.fit(data);

  const auto& a = full.history().epochs;
  const auto& b = resumed.history().epochs;
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i].train_loss, b[i].train_loss, 1e-9);
    EXPECT_NEAR(a[i].validation_loss, b[i].validation_loss, 1e-9);
  }
  const auto& pa = full.model().parameters();
  const auto& pb = resumed.model().parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t j = 0; j < pa[i].value.numel(); ++j) {
      ASSERT_NEAR(pa[i].value[j], pb[i].value[j], 1e-9) << pa[i].name;
    }
  }
  EXPECT_EQ(resumed.optimizer().steps(), full.optimizer().steps());
}

TEST(Trainer, HistoryJsonRoundTrip) {
  EpochRecord r;
  r.epoch = 3;
  r.train_loss = 0.1 + 0.2;
  r.validation_loss = 1.0 / 3.0;
  r.euclidean = 0.125;
  r.improved = true;
  r.seconds = 1.5;
  const EpochRecord back = EpochRecord::from_json(r.to_json());
  EXPECT_EQ(back.epoch, 3);
  EXPECT_EQ(back.train_loss, r.train_loss);
  EXPECT_EQ(back.validation_loss, r.validation_loss);
  EXPECT_EQ(back.euclidean, r.euclidean);
  EXPECT_FALSE(back.perceptual.has_value());
  EXPECT_TRUE(back.improved);
  EXPECT_EQ(r.to_json(false).find("seconds"), std::string::npos);
  TrainHistory h;
  h.epochs = {r, r};
  EXPECT_EQ(TrainHistory::parse_jsonl(h.to_jsonl()).size(), 2u);
}

TEST(Trainer, ModelCheckpointRoundTrip) {
  const Model m = Model::build(tiny_model(4), 2);
  LossConfig l = loss_cfg();
  l.enabled.perceptual = false;
  const Checkpoint c = Checkpoint::decode(model_checkpoint(m, l).encode());
  EXPECT_EQ(model_config_from(c), m.config());
  EXPECT_EQ(loss_config_from(c).enabled, l.enabled);
  EXPECT_EQ(loss_config_from(c).alpha, l.alpha);
  const Model back = model_from_checkpoint(c);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    EXPECT_EQ(back.parameters()[i].value, m.parameters()[i].value);
    EXPECT_EQ(back.parameters()[i].trainable, m.parameters()[i].trainable);
  }
  EXPECT_EQ(std::stod(format_exact(0.1 + 0.2)), 0.1 + 0.2);
}

TEST(Experiments, AblationCombosAndLabels) {
  const auto combos = ablation_combos();
  ASSERT_EQ(combos.size(), 6u);
  std::vector<std::string> labels;
  for (const auto& c : combos) labels.push_back(method_label(c.enabled));
  EXPECT_EQ(labels, (std::vector<std::string>{"L_Per", "L_Eu", "L_Per+L_N", "L_Eu+L_N",
                                              "L_Eu+L_Per", "L_Eu+L_Per+L_N"}));
}

TEST(Experiments, IdenticalCombosGiveIdenticalColumns) {
  const auto ex = FeatureExtractor::tiny_random(2, 5);
  ExperimentSetup setup{tiny_model(), quick(2), 9};
  const auto test = eval_items(3);
  LossConfig eu = loss_cfg();
  eu.enabled = {true, false, false};
  const AblationOutcome out = run_ablation({eu, eu}, setup, small_set(), test, ex);
  ASSERT_EQ(out.labels, (std::vector<std::string>{"L_Eu", "L_Eu#2"}));
  const MetricRow& a = out.report.row(4, "L_Eu");
  const MetricRow& b = out.report.row(4, "L_Eu#2");
  EXPECT_EQ(a.psnr_db, b.psnr_db);
  EXPECT_EQ(a.ssim, b.ssim);
  EXPECT_EQ(a.uqi, b.uqi);
  EXPECT_EQ(out.histories[0].to_jsonl(false), out.histories[1].to_jsonl(false));
  EXPECT_THROW(run_ablation({eu}, setup, small_set(), test, ex), InvalidArgument);
}

TEST(Experiments, SingleDepthMatchesEvaluateSet) {
  const auto ex = FeatureExtractor::tiny_random(2, 5);
  ExperimentSetup setup{tiny_model(), quick(2), 9};
  const auto test = eval_items(3);
  const TrainingSet data = small_set();
  const auto points = run_depth_sweep({3}, setup, loss_cfg(), data, test, ex);
  ASSERT_EQ(points.size(), 1u);
  EXPECT_EQ(points[0].depth, 3);

  Trainer t(Model::build(tiny_model(3), 9), loss_cfg(), setup.train, ex);
  t.fit(data);
  Model best = t.best_model();
  const MetricReport r =
      evaluate_set(test, {{"m", [&best](const Tensor& x) { return despeckle(best, x); }}});
  EXPECT_EQ(points[0].mean_psnr_db, r.row(4, "m").psnr_db);
  EXPECT_EQ(depth_sweep_csv(points),
            "depth,mean_psnr_db\n3," + format_metric(points[0].mean_psnr_db) + "\n");
}
