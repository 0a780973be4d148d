#include "neighcnn/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include "neighcnn/error.hpp"
#include "neighcnn/serialize.hpp"

namespace neighcnn {

void Checkpoint::put(const std::string& name, const Tensor& tensor, DType dtype) {
  if (name.empty() || name.size() > 0xFFFF) throw InvalidArgument("invalid tensor name");
  if (has(name)) throw InvalidArgument("duplicate tensor name in checkpoint: " + name);
  Tensor stored = tensor;
  if (dtype == DType::f32) {
    for (double& v : stored.data()) v = static_cast<double>(static_cast<float>(v));
  }
  tensors_.push_back({name, std::move(stored), dtype});
}

bool Checkpoint::has(const std::string& name) const {
  return std::any_of(tensors_.begin(), tensors_.end(),
                     [&](const NamedTensor& t) { return t.name == name; });
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t.tensor;
  }
  throw DataError("checkpoint has no tensor named '" + name + "'");
}

const std::string& Checkpoint::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) throw DataError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

std::string Checkpoint::meta_or(const std::string& key, const std::string& fallback) const {
  auto it = metadata.find(key);
  return it == metadata.end() ? fallback : it->second;
}

std::vector<std::uint8_t> Checkpoint::encode() const {
  ByteWriter out;
  out.bytes("NCNN", 4);
  out.u16(kCheckpointVersion);
  out.u32(static_cast<std::uint32_t>(metadata.size()));
  for (const auto& [key, value] : metadata) {
    out.u16(static_cast<std::uint16_t>(key.size()));
    out.bytes(key.data(), key.size());
    out.u32(static_cast<std::uint32_t>(value.size()));
    out.bytes(value.data(), value.size());
  }
  out.u32(static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& t : tensors_) {
    out.u16(static_cast<std::uint16_t>(t.name.size()));
    out.bytes(t.name.data(), t.name.size());
    out.u8(static_cast<std::uint8_t>(t.dtype));
    out.u8(static_cast<std::uint8_t>(t.tensor.rank()));
    for (std::size_t d : t.tensor.shape().dims()) out.u32(static_cast<std::uint32_t>(d));
    for (double v : t.tensor.data()) {
      if (t.dtype == DType::f32) {
        out.f32(static_cast<float>(v));
      } else {
        out.f64(v);
      }
    }
  }
  return out.buffer();
}

Checkpoint Checkpoint::decode(std::vector<std::uint8_t> bytes, const std::string& source) {
  ByteReader in(std::move(bytes), source);
  if (in.string(4) != "NCNN") throw DataError("not a checkpoint: " + source);
  const std::uint16_t version = in.u16();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint " + source + " has format version " + std::to_string(version) +
                    ", expected " + std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  const std::uint32_t n_meta = in.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string key = in.string(in.u16());
    std::string value = in.string(in.u32());
    ckpt.metadata.emplace(std::move(key), std::move(value));
  }
  const std::uint32_t n_tensors = in.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = in.string(in.u16());
    const auto dtype = in.u8();
    if (dtype > 1) throw DataError("unknown dtype for tensor " + name + " in " + source);
    const std::size_t rank = in.u8();
    if (rank > Shape::kMaxRank) throw DataError("tensor " + name + " has rank > 4 in " + source);
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = in.u32();
    Tensor t;
    try {
      t = Tensor(Shape(dims));
    } catch (const ShapeError& e) {
      throw DataError("tensor " + name + " in " + source + ": " + e.what());
    }
    for (double& v : t.data()) v = dtype == 1 ? static_cast<double>(in.f32()) : in.f64();
    if (ckpt.has(name)) throw DataError("duplicate tensor " + name + " in " + source);
    ckpt.tensors_.push_back({std::move(name), std::move(t), static_cast<DType>(dtype)});
  }
  if (!in.at_end()) throw DataError("trailing bytes in checkpoint " + source);
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  ByteWriter out;
  const auto bytes = encode();
  out.bytes(bytes.data(), bytes.size());
  out.save(path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(std::move(data), path.string());
}

}  // namespace neighcnn
