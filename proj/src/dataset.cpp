#include "neighcnn/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "neighcnn/error.hpp"
#include "neighcnn/image_io.hpp"

namespace neighcnn {

namespace fs = std::filesystem;

std::string to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::validation:
      return "validation";
    case Split::test:
      return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "validation") return Split::validation;
  if (text == "test") return Split::test;
  throw InvalidArgument("unknown split '" + text + "' (train | validation | test)");
}

// ---- manifest --------------------------------------------------------------

void DatasetManifest::save() const {
  fs::create_directories(root);
  std::ostringstream csv;
  csv << kCsvHeader << '\n';
  for (const auto& e : entries) {
    if (e.clean_path.find(',') != std::string::npos || e.speckled_path.find(',') != std::string::npos) {
      throw DataError("manifest paths may not contain commas");
    }
    csv << e.clean_path << ',' << e.speckled_path << ',' << e.looks << ',' << e.seed << ','
        << to_string(e.split) << '\n';
  }
  {
    std::ofstream out(root / kCsvName, std::ios::binary | std::ios::trunc);
    out << csv.str();
    if (!out) throw DataError("cannot write " + (root / kCsvName).string());
  }
  nlohmann::json meta = {{"seed", seed}, {"image_size", image_size}};
  std::ofstream out(root / kMetaName, std::ios::binary | std::ios::trunc);
  out << meta.dump(2) << '\n';
  if (!out) throw DataError("cannot write " + (root / kMetaName).string());
}

DatasetManifest DatasetManifest::load(const fs::path& location) {
  DatasetManifest m;
  fs::path csv_path = location;
  if (fs::is_directory(location)) {
    csv_path = location / kCsvName;
  }
  m.root = csv_path.parent_path();
  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot open manifest " + csv_path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw DataError("manifest header must be '" + std::string(kCsvHeader) + "': " + csv_path.string());
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 5) {
      throw DataError(csv_path.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
    }
    ManifestEntry e;
    e.clean_path = fields[0];
    e.speckled_path = fields[1];
    try {
      e.looks = std::stoi(fields[2]);
      e.seed = std::stoull(fields[3]);
    } catch (const std::exception&) {
      throw DataError(csv_path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
    try {
      e.split = parse_split(fields[4]);
    } catch (const InvalidArgument& err) {
      throw DataError(csv_path.string() + ":" + std::to_string(lineno) + ": " + err.what());
    }
    m.entries.push_back(std::move(e));
  }
  if (std::ifstream meta_in(m.root / kMetaName); meta_in) {
    try {
      const auto meta = nlohmann::json::parse(meta_in);
      m.seed = meta.at("seed").get<std::uint64_t>();
      m.image_size = meta.at("image_size").get<std::size_t>();
    } catch (const nlohmann::json::exception& ex) {
      throw DataError("malformed " + (m.root / kMetaName).string() + ": " + ex.what());
    }
  }
  return m;
}

std::vector<ManifestEntry> DatasetManifest::select(Split split, const std::vector<int>& looks) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split != split) continue;
    if (!looks.empty() && std::find(looks.begin(), looks.end(), e.looks) == looks.end()) continue;
    out.push_back(e);
  }
  return out;
}

// ---- generation ------------------------------------------------------------

GenerationRequest GenerationRequest::full_scale() {
  GenerationRequest r;
  r.looks = {2, 3, 4, 5, 6, 7, 8, 10, 15, 20, 25, 30};
  r.train_pairs_per_look = 229;
  r.test_pairs_per_look = 80;
  r.image_size = 256;
  return r;
}

GenerationRequest GenerationRequest::desk() {
  GenerationRequest r;
  r.looks = {4};
  r.train_pairs_per_look = 200;
  r.test_pairs_per_look = 40;
  r.image_size = 64;
  return r;
}

const std::vector<int>& GenerationRequest::effective_test_looks() const {
  return test_looks.empty() ? looks : test_looks;
}

std::size_t GenerationRequest::validation_pairs_per_look() const {
  return static_cast<std::size_t>(
      std::lround(validation_fraction * static_cast<double>(train_pairs_per_look)));
}

void GenerationRequest::validate() const {
  if (looks.empty() && test_looks.empty()) throw InvalidArgument("no looks requested");
  for (int l : looks) LookCount{l};
  for (int l : test_looks) LookCount{l};
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw InvalidArgument("validation fraction must be in [0, 1)");
  }
  if (image_size < 2) throw InvalidArgument("image size must be >= 2");
  if (train_pairs_per_look + test_pairs_per_look == 0) throw InvalidArgument("no pairs requested");
}

namespace {

std::string look_dir(int looks) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "L%02d", looks);
  return buf;
}

std::string indexed(const std::string& stem, std::size_t index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%04zu", index);
  return stem + buf + ext;
}

Tensor centre_crop(const Tensor& img, std::size_t size) {
  const std::size_t h = img.dim(2), w = img.dim(3);
  const std::size_t y0 = (h - size) / 2, x0 = (w - size) / 2;
  Tensor out(Shape{1, 1, size, size});
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) out[y * size + x] = img[(y0 + y) * w + x0 + x];
  }
  return out;
}

struct PlannedEntry {
  ManifestEntry entry;
  std::size_t clean_index;
};

std::vector<PlannedEntry> plan_entries(const GenerationRequest& request) {
  request.validate();
  std::vector<PlannedEntry> planned;
  const std::size_t n_train = request.train_pairs_per_look;
  const std::size_t n_val = request.validation_pairs_per_look();
  std::uint64_t counter = 0;
  auto add = [&](int looks, Split split, std::size_t clean_index) {
    ManifestEntry e;
    e.clean_path = "clean/" + indexed("clean", clean_index, ".png");
    e.speckled_path =
        "speckled/" + look_dir(looks) + "/" + indexed(to_string(split), clean_index, ".spkl");
    e.looks = looks;
    e.seed = mix_seed(request.seed + counter++);
    e.split = split;
    planned.push_back({std::move(e), clean_index});
  };
  // The last n_val train images of every look form the validation split.
  for (int looks : request.looks) {
    for (std::size_t i = 0; i < n_train; ++i) {
      add(looks, i + n_val >= n_train ? Split::validation : Split::train, i);
    }
  }
  for (int looks : request.effective_test_looks()) {
    for (std::size_t i = 0; i < request.test_pairs_per_look; ++i) add(looks, Split::test, n_train + i);
  }
  return planned;
}

}  // namespace

DatasetManifest plan_dataset(const GenerationRequest& request) {
  DatasetManifest m;
  m.seed = request.seed;
  m.image_size = request.image_size;
  for (auto& p : plan_entries(request)) m.entries.push_back(std::move(p.entry));
  return m;
}

std::vector<fs::path> list_clean_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("clean image directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& item : fs::directory_iterator(dir)) {
    if (!item.is_regular_file()) continue;
    auto ext = item.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".pgm") files.push_back(item.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

Tensor regenerate_speckled(const Tensor& clean, const ManifestEntry& entry) {
  const Tensor noise = sample_gamma_noise(clean.shape(), LookCount(entry.looks), entry.seed);
  return round_to_float(apply_speckle(clean, noise, LookCount(entry.looks)).speckled);
}

DatasetManifest generate_dataset(const fs::path& clean_dir, const fs::path& out_dir,
                                 const GenerationRequest& request) {
  const auto planned = plan_entries(request);
  DatasetManifest m;
  m.seed = request.seed;
  m.image_size = request.image_size;
  m.root = out_dir;
  for (const auto& p : planned) m.entries.push_back(p.entry);

  const auto files = list_clean_images(clean_dir);
  const std::size_t needed = request.clean_images_needed();
  if (files.size() < needed) {
    throw DataError("need " + std::to_string(needed) + " clean images in " + clean_dir.string() +
                    ", found " + std::to_string(files.size()));
  }
  std::vector<Tensor> cleans;
  cleans.reserve(needed);
  for (std::size_t i = 0; i < needed; ++i) {
    Tensor img = read_gray8(files[i]);
    if (img.dim(2) < request.image_size || img.dim(3) < request.image_size) {
      throw DataError("clean image " + files[i].string() + " is smaller than " +
                      std::to_string(request.image_size) + "x" + std::to_string(request.image_size));
    }
    cleans.push_back(centre_crop(img, request.image_size));
  }

  const bool created = !fs::exists(out_dir);
  try {
    fs::create_directories(out_dir / "clean");
    for (std::size_t i = 0; i < needed; ++i) {
      write_png8(out_dir / "clean" / indexed("clean", i, ".png"), cleans[i]);
    }
    std::set<int> all_looks(request.looks.begin(), request.looks.end());
    for (int l : request.effective_test_looks()) all_looks.insert(l);
    for (int l : all_looks) fs::create_directories(out_dir / "speckled" / look_dir(l));

    for (const auto& [e, idx] : planned) {
      const Tensor speckled = regenerate_speckled(cleans[idx], e);
      const fs::path raster = out_dir / e.speckled_path;
      write_raster(raster, speckled);
      auto preview = raster;
      preview.replace_extension(".png");
      write_png8(preview, speckled);
    }
    m.save();
  } catch (...) {
    if (created) {
      std::error_code ec;
      fs::remove_all(out_dir, ec);
    }
    throw;
  }
  return m;
}

SpecklePair load_pair(const DatasetManifest& manifest, const ManifestEntry& entry) {
  SpecklePair pair;
  pair.clean = read_gray8(manifest.resolve(entry.clean_path));
  pair.speckled = read_raster(manifest.resolve(entry.speckled_path));
  pair.looks = entry.looks;
  require_same_shape(pair.clean.shape(), pair.speckled.shape(), "manifest pair");
  return pair;
}

void write_synthetic_clean_set(const fs::path& dir, std::size_t count, std::size_t size,
                               std::uint64_t seed) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < count; ++i) {
    write_png8(dir / indexed("clean", i, ".png"), synthesize_scene(size, mix_seed(seed ^ (0xC1EAull + i))));
  }
}

}  // namespace neighcnn
