#include "neighcnn/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "neighcnn/error.hpp"
#include "neighcnn/serialize.hpp"

namespace neighcnn {

namespace fs = std::filesystem;

namespace {

void require_image(const Tensor& image, const char* what) {
  const Shape& s = image.shape();
  if (s.rank() != 4 || s[0] != 1 || s[1] != 1) {
    throw ShapeError(std::string(what) + ": expected a [1,1,H,W] image, got " + s.str());
  }
}

std::vector<std::uint8_t> to_bytes(const Tensor& image) {
  std::vector<std::uint8_t> bytes(image.numel());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0));
  }
  return bytes;
}

Tensor from_bytes(const std::vector<std::uint8_t>& bytes, std::size_t h, std::size_t w) {
  Tensor out(Shape{1, 1, h, w});
  for (std::size_t i = 0; i < bytes.size(); ++i) out[i] = bytes[i] / 255.0;
  return out;
}

std::array<char, 4> peek_magic(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() < 2) throw DataError("file too short: " + path.string());
  return magic;
}

Tensor read_png(const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw DataError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&img);
    throw DataError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  return from_bytes(bytes, img.height, img.width);
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
  std::string token;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      if (!token.empty()) break;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(c);
  }
  return token;
}

Tensor read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string magic = pgm_token(in);
  if (magic != "P5" && magic != "P2") throw DataError("not a PGM file: " + path.string());
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(pgm_token(in));
    h = std::stoul(pgm_token(in));
    maxval = std::stoul(pgm_token(in));
  } catch (const std::exception&) {
    throw DataError("malformed PGM header: " + path.string());
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) {
    throw DataError("unsupported PGM (need 8-bit): " + path.string());
  }
  std::vector<std::uint8_t> bytes(w * h);
  if (magic == "P5") {
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
      throw DataError("truncated PGM: " + path.string());
    }
  } else {
    for (auto& b : bytes) {
      const std::string tok = pgm_token(in);
      if (tok.empty()) throw DataError("truncated PGM: " + path.string());
      b = static_cast<std::uint8_t>(std::stoul(tok));
    }
  }
  Tensor out(Shape{1, 1, h, w});
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    out[i] = std::round(bytes[i] * 255.0 / static_cast<double>(maxval)) / 255.0;
  }
  return out;
}

}  // namespace

void write_raster(const fs::path& path, const Tensor& image) {
  require_image(image, "write_raster");
  const std::size_t h = image.dim(2), w = image.dim(3);
  ByteWriter out;
  out.bytes("SPKL", 4);
  out.u16(kRasterVersion);
  out.u32(static_cast<std::uint32_t>(h));
  out.u32(static_cast<std::uint32_t>(w));
  out.u16(0);
  for (double v : image.data()) out.f32(static_cast<float>(v));
  out.save(path);
}

Tensor read_raster(const fs::path& path) {
  ByteReader in = ByteReader::open(path);
  if (in.string(4) != "SPKL") throw DataError("not a SPKL raster: " + path.string());
  const std::uint16_t version = in.u16();
  if (version != kRasterVersion) {
    throw DataError("unsupported SPKL version " + std::to_string(version) + " in " + path.string());
  }
  const std::size_t h = in.u32(), w = in.u32();
  in.u16();
  if (h == 0 || w == 0) throw DataError("empty SPKL raster: " + path.string());
  Tensor out(Shape{1, 1, h, w});
  for (double& v : out.data()) v = in.f32();
  if (!in.at_end()) throw DataError("trailing bytes in SPKL raster: " + path.string());
  return out;
}

Tensor read_gray8(const fs::path& path) {
  const auto magic = peek_magic(path);
  if (static_cast<unsigned char>(magic[0]) == 0x89 && magic[1] == 'P') return read_png(path);
  if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '2')) return read_pgm(path);
  throw DataError("unrecognised image format: " + path.string());
}

void write_png8(const fs::path& path, const Tensor& image) {
  require_image(image, "write_png8");
  auto bytes = to_bytes(image);
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.dim(3));
  img.height = static_cast<png_uint_32>(image.dim(2));
  img.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw DataError("cannot write PNG " + path.string() + ": " + img.message);
  }
}

void write_pgm8(const fs::path& path, const Tensor& image) {
  require_image(image, "write_pgm8");
  auto bytes = to_bytes(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P5\n" << image.dim(3) << ' ' << image.dim(2) << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write " + path.string());
}

Tensor read_image(const fs::path& path) {
  const auto magic = peek_magic(path);
  if (std::string(magic.data(), 4) == "SPKL") return read_raster(path);
  return read_gray8(path);
}

Tensor round_to_float(const Tensor& image) {
  Tensor out = image;
  for (double& v : out.data()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

}  // namespace neighcnn
