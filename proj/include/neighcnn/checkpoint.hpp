#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "neighcnn/tensor.hpp"

namespace neighcnn {

// Binary container for named tensors plus string metadata.
//
//   "NCNN"            magic
//   u16               format version
//   u32               metadata count, then per entry:
//                       u16 key length, key, u32 value length, value
//   u32               tensor count, then per tensor:
//                       u16 name length, name, u8 dtype (0 = f64, 1 = f32),
//                       u8 rank, rank x u32 extents, raw little-endian values
//
// Metadata is written in key order, so identical contents give identical
// bytes.
inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { f64 = 0, f32 = 1 };

struct NamedTensor {
  std::string name;
  Tensor tensor;
  DType dtype = DType::f64;
};

class Checkpoint {
 public:
  std::map<std::string, std::string> metadata;

  // Adds a tensor; names must be unique.
  void put(const std::string& name, const Tensor& tensor, DType dtype = DType::f64);
  bool has(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  const std::vector<NamedTensor>& tensors() const { return tensors_; }

  const std::string& meta(const std::string& key) const;
  std::string meta_or(const std::string& key, const std::string& fallback) const;

  std::vector<std::uint8_t> encode() const;
  static Checkpoint decode(std::vector<std::uint8_t> bytes, const std::string& source = "buffer");

  // Atomic replace of `path`.
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<NamedTensor> tensors_;
};

}  // namespace neighcnn
