#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "neighcnn/speckle.hpp"

namespace neighcnn {

enum class Split { train, validation, test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

struct ManifestEntry {
  std::string clean_path;     // relative to the manifest directory
  std::string speckled_path;  // relative to the manifest directory
  int looks = 1;
  std::uint64_t seed = 0;
  Split split = Split::train;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

// Index of a generated dataset. On disk: `manifest.csv` with header
// clean_path,speckled_path,look,seed,split plus `dataset.json` holding the
// global seed and image size.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  std::size_t image_size = 0;
  std::filesystem::path root;

  static constexpr const char* kCsvName = "manifest.csv";
  static constexpr const char* kMetaName = "dataset.json";
  static constexpr const char* kCsvHeader = "clean_path,speckled_path,look,seed,split";

  void save() const;
  // Accepts the manifest directory or the path of manifest.csv.
  static DatasetManifest load(const std::filesystem::path& location);

  std::vector<ManifestEntry> select(Split split, const std::vector<int>& looks = {}) const;
  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
};

struct GenerationRequest {
  std::vector<int> looks;       // training / validation looks
  std::vector<int> test_looks;  // defaults to `looks` when empty
  std::size_t train_pairs_per_look = 0;  // train + validation
  std::size_t test_pairs_per_look = 0;
  double validation_fraction = 0.1;
  std::size_t image_size = 0;
  std::uint64_t seed = 0;

  // 12 looks {2..8, 10, 15, 20, 25, 30}, 229 train and 80 test pairs per look,
  // 256x256 images. Selected by `--preset paper` on the command line.
  static GenerationRequest full_scale();
  // L = 4, 200 train and 40 test pairs of 64x64 images.
  static GenerationRequest desk();

  const std::vector<int>& effective_test_looks() const;
  std::size_t validation_pairs_per_look() const;
  // Train/validation and test images are disjoint; every look reuses them.
  std::size_t clean_images_needed() const { return train_pairs_per_look + test_pairs_per_look; }
  void validate() const;
};

// Sorted list of .png / .pgm files in `dir`.
std::vector<std::filesystem::path> list_clean_images(const std::filesystem::path& dir);

// Entries that generate_dataset would write, without touching the disk.
DatasetManifest plan_dataset(const GenerationRequest& request);

// Centre-crops the first clean_images_needed() images of `clean_dir` into
// out_dir/clean, writes speckled rasters (plus 8-bit previews) under
// out_dir/speckled, and saves the manifest. Inputs are fully validated before
// anything is written; on failure a newly created out_dir is removed.
DatasetManifest generate_dataset(const std::filesystem::path& clean_dir,
                                 const std::filesystem::path& out_dir,
                                 const GenerationRequest& request);

// Speckled image for `entry` recomputed from its clean image and seed, at the
// float32 precision of the raster.
Tensor regenerate_speckled(const Tensor& clean, const ManifestEntry& entry);

SpecklePair load_pair(const DatasetManifest& manifest, const ManifestEntry& entry);

// Writes `count` synthesized scenes as clean_NNNN.png into `dir`.
void write_synthetic_clean_set(const std::filesystem::path& dir, std::size_t count,
                               std::size_t size, std::uint64_t seed);

}  // namespace neighcnn
