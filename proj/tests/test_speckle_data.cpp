#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "neighcnn/dataset.hpp"
#include "neighcnn/error.hpp"
#include "neighcnn/image_io.hpp"
#include "neighcnn/speckle.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace neighcnn;
namespace fs = std::filesystem;

namespace {

void moments(const Tensor& t, double& mean, double& var) {
  const double n = static_cast<double>(t.numel());
  mean = pairwise_sum(t.data()) / n;
  double s = 0.0;
  for (double v : t.data()) s += (v - mean) * (v - mean);
  var = s / (n - 1.0);
}

}  // namespace

TEST(Speckle, LookCountValidated) {
  EXPECT_THROW(LookCount(0), InvalidArgument);
  EXPECT_EQ(LookCount(3).value(), 3);
}

TEST(Speckle, GammaMomentsModerateSample) {
  for (int L : {1, 2, 4, 16}) {
    const Tensor n = sample_gamma_noise(Shape{200000}, LookCount(L), 100 + L);
    double mean, var;
    moments(n, mean, var);
    EXPECT_NEAR(mean, 1.0, 0.01) << "L=" << L;
    EXPECT_NEAR(var, 1.0 / L, 0.05 / L) << "L=" << L;
    for (double v : n.data()) ASSERT_GT(v, 0.0);
  }
}

TEST(Speckle, GammaSingleLookIsExponential) {
  // Exponential(1): P(N > 1) = e^-1.
  const Tensor n = sample_gamma_noise(Shape{200000}, LookCount(1), 9);
  double above = 0;
  for (double v : n.data()) above += v > 1.0;
  EXPECT_NEAR(above / 200000.0, std::exp(-1.0), 0.005);
}

TEST(Speckle, GammaDeterministicInSeed) {
  const Shape s{1, 1, 16, 16};
  EXPECT_EQ(sample_gamma_noise(s, LookCount(4), 5), sample_gamma_noise(s, LookCount(4), 5));
  EXPECT_NE(sample_gamma_noise(s, LookCount(4), 5), sample_gamma_noise(s, LookCount(4), 6));
}

TEST(Speckle, ApplyAndResidual) {
  const Tensor clean(Shape{1, 1, 2, 2}, std::vector<double>{0.0, 0.5, 1.0, 0.25});
  const Tensor noise(Shape{1, 1, 2, 2}, std::vector<double>{2.0, 0.5, 1.5, 1.0});
  const SpecklePair p = apply_speckle(clean, noise, LookCount(3));
  EXPECT_EQ(p.speckled.values(), (std::vector<double>{0.0, 0.25, 1.5, 0.25}));
  EXPECT_EQ(speckle_residual(p).values(), (std::vector<double>{0.0, -0.25, 0.5, 0.0}));
  EXPECT_EQ(p.looks, 3);
  Tensor bad = clean;
  bad[0] = 1.5;
  EXPECT_THROW(apply_speckle(bad, noise, LookCount(1)), InvalidArgument);
  Tensor neg = noise;
  neg[1] = -0.1;
  EXPECT_THROW(apply_speckle(clean, neg, LookCount(1)), InvalidArgument);
}

TEST(Speckle, ZeroCleanStaysZero) {
  const Tensor clean(Shape{1, 1, 8, 8});
  const SpecklePair p = apply_speckle(clean, sample_gamma_noise(clean.shape(), LookCount(2), 1),
                                      LookCount(2));
  EXPECT_EQ(p.speckled, clean);
}

TEST(Speckle, PatchesTileAndMatchCrops) {
  std::mt19937_64 rng(3);
  const Tensor clean = oracle::random_uniform(Shape{1, 1, 256, 256}, rng);
  const SpecklePair pair =
      apply_speckle(clean, sample_gamma_noise(clean.shape(), LookCount(2), 4), LookCount(2));
  const auto patches = extract_patches(pair, 64, 64);
  ASSERT_EQ(patches.size(), 16u);
  for (std::size_t p = 0; p < patches.size(); ++p) {
    const std::size_t y0 = (p / 4) * 64, x0 = (p % 4) * 64;
    for (std::size_t y = 0; y < 64; ++y)
      for (std::size_t x = 0; x < 64; ++x) {
        ASSERT_EQ(patches[p].clean.at(0, 0, y, x), clean.at(0, 0, y0 + y, x0 + x));
        ASSERT_EQ(patches[p].speckled.at(0, 0, y, x), pair.speckled.at(0, 0, y0 + y, x0 + x));
      }
  }
  const auto whole = extract_patches(pair, 256, 7);
  ASSERT_EQ(whole.size(), 1u);
  EXPECT_EQ(whole[0].clean, clean);
  EXPECT_THROW(extract_patches(pair, 300, 1), ShapeError);
}

TEST(Speckle, PatchSubsetSeededAndOrdered) {
  std::mt19937_64 rng(3);
  const Tensor clean = oracle::random_uniform(Shape{1, 1, 64, 64}, rng);
  const SpecklePair pair{clean, clean, 1};
  const auto all = extract_patches(pair, 16, 16);
  const auto a = extract_patches(pair, 16, 16, 5, 42);
  const auto b = extract_patches(pair, 16, 16, 5, 42);
  ASSERT_EQ(a.size(), 5u);
  std::size_t last = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].clean, b[i].clean);
    std::size_t idx = 0;
    while (!(all[idx].clean == a[i].clean)) ++idx;
    if (i > 0) EXPECT_GT(idx, last);
    last = idx;
  }
}

TEST(Speckle, SynthesizedSceneInRange) {
  const Tensor s = synthesize_scene(64, 8);
  EXPECT_EQ(s.shape(), (Shape{1, 1, 64, 64}));
  double lo = 1, hi = 0;
  for (double v : s.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    EXPECT_DOUBLE_EQ(std::round(v * 255.0), v * 255.0);
  }
  EXPECT_GE(lo, 0.0);
  EXPECT_LE(hi, 1.0);
  EXPECT_GT(hi - lo, 0.1);
  EXPECT_EQ(s, synthesize_scene(64, 8));
}

TEST(ImageIo, RasterRoundTripAndHeader) {
  TempDir dir;
  std::mt19937_64 rng(2);
  const Tensor img = round_to_float(oracle::random_uniform(Shape{1, 1, 5, 7}, rng, 0.0, 3.0));
  const fs::path p = dir.path / "a.spkl";
  write_raster(p, img);
  EXPECT_EQ(fs::file_size(p), 16u + 4u * 35u);
  EXPECT_EQ(read_raster(p), img);
  EXPECT_EQ(read_image(p), img);
  std::ifstream in(p, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "SPKL");
}

TEST(ImageIo, RasterRejectsBadFiles) {
  TempDir dir;
  const fs::path p = dir.path / "bad.spkl";
  std::ofstream(p, std::ios::binary) << "SPKL\x02";
  EXPECT_THROW(read_raster(p), DataError);
  EXPECT_THROW(read_raster(dir.path / "missing.spkl"), DataError);
}

TEST(ImageIo, PngAndPgmRoundTrip) {
  TempDir dir;
  Tensor img(Shape{1, 1, 4, 6});
  for (std::size_t i = 0; i < img.numel(); ++i) img[i] = static_cast<double>(i * 10) / 255.0;
  write_png8(dir.path / "a.png", img);
  write_pgm8(dir.path / "a.pgm", img);
  EXPECT_EQ(read_image(dir.path / "a.png"), img);
  EXPECT_EQ(read_image(dir.path / "a.pgm"), img);
}

TEST(Dataset, FullScalePlanCounts) {
  GenerationRequest req = GenerationRequest::full_scale();
  const DatasetManifest m = plan_dataset(req);
  EXPECT_EQ(req.looks.size(), 12u);
  // 12 looks x (229 train/validation + 80 test) entries.
  EXPECT_EQ(m.entries.size(), 12u * (229u + 80u));
  EXPECT_EQ(m.select(Split::test).size(), 12u * 80u);
  EXPECT_EQ(m.select(Split::validation, {4}).size(), 23u);
  EXPECT_EQ(m.select(Split::train, {4}).size(), 206u);
  EXPECT_EQ(m.image_size, 256u);
}

TEST(Dataset, SeedsDistinctAndSplitsDisjoint) {
  const DatasetManifest m = plan_dataset(GenerationRequest::desk());
  std::set<std::uint64_t> seeds;
  std::set<std::string> train_clean, test_clean;
  for (const auto& e : m.entries) {
    seeds.insert(e.seed);
    (e.split == Split::test ? test_clean : train_clean).insert(e.clean_path);
  }
  EXPECT_EQ(seeds.size(), m.entries.size());
  for (const auto& c : test_clean) EXPECT_EQ(train_clean.count(c), 0u) << c;
}

TEST(Dataset, GenerateIsDeterministicAndReloads) {
  TempDir dir;
  write_synthetic_clean_set(dir.path / "src", 12, 24, 1);
  GenerationRequest req;
  req.looks = {2, 5};
  req.train_pairs_per_look = 8;
  req.test_pairs_per_look = 4;
  req.image_size = 16;
  req.seed = 7;
  const DatasetManifest a = generate_dataset(dir.path / "src", dir.path / "a", req);
  const DatasetManifest b = generate_dataset(dir.path / "src", dir.path / "b", req);
  EXPECT_EQ(a.entries, b.entries);
  EXPECT_TRUE(same_tree(dir.path / "a", dir.path / "b"));

  const DatasetManifest loaded = DatasetManifest::load(dir.path / "a");
  EXPECT_EQ(loaded.entries, a.entries);
  EXPECT_EQ(loaded.seed, 7u);
  std::ifstream csv(dir.path / "a" / "manifest.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "clean_path,speckled_path,look,seed,split");

  for (const auto& e : loaded.entries) {
    const SpecklePair p = load_pair(loaded, e);
    EXPECT_EQ(p.clean.shape(), (Shape{1, 1, 16, 16}));
    EXPECT_EQ(regenerate_speckled(p.clean, e), p.speckled);
  }
}

TEST(Dataset, FailuresLeaveNoOutput) {
  TempDir dir;
  GenerationRequest req = GenerationRequest::desk();
  EXPECT_THROW(generate_dataset(dir.path / "missing", dir.path / "out", req), DataError);
  EXPECT_FALSE(fs::exists(dir.path / "out"));
  write_synthetic_clean_set(dir.path / "few", 3, 64, 1);
  EXPECT_THROW(generate_dataset(dir.path / "few", dir.path / "out", req), DataError);
  EXPECT_FALSE(fs::exists(dir.path / "out"));
  write_synthetic_clean_set(dir.path / "small", 240, 32, 1);
  EXPECT_THROW(generate_dataset(dir.path / "small", dir.path / "out", req), DataError);
  EXPECT_FALSE(fs::exists(dir.path / "out"));
}

TEST(Dataset, RequestValidation) {
  GenerationRequest req = GenerationRequest::desk();
  req.looks = {0};
  EXPECT_THROW(req.validate(), InvalidArgument);
  req = GenerationRequest::desk();
  req.validation_fraction = 1.0;
  EXPECT_THROW(req.validate(), InvalidArgument);
}

TEST(Dataset, SplitNames) {
  for (Split s : {Split::train, Split::validation, Split::test}) {
    EXPECT_EQ(parse_split(to_string(s)), s);
  }
  EXPECT_THROW(parse_split("holdout"), InvalidArgument);
}
