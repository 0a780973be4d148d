#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace neighcnn {

// Little-endian binary encoder backing the raster and checkpoint formats.
class ByteWriter {
 public:
  void bytes(const void* data, std::size_t n);
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);

  const std::vector<std::uint8_t>& buffer() const { return buf_; }

  // Writes to a sibling temporary file and renames it over `path`, so a
  // reader never observes a half-written file.
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> data, std::string source = "buffer");
  static ByteReader open(const std::filesystem::path& path);

  std::string string(std::size_t n);
  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  bool at_end() const { return pos_ == data_.size(); }

 private:
  const std::uint8_t* take(std::size_t n);

  std::vector<std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string source_;
};

}  // namespace neighcnn
