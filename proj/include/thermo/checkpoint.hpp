#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "thermo/error.hpp"
#include "thermo/model.hpp"
#include "thermo/train.hpp"
#include "thermo/version.hpp"

// Checkpoint container: magic "THML", u16 format version, the model
// definition and train config, then one record per tensor (name, dtype tag,
// rank, dims, raw payload), all little-endian, closed by a CRC-32 of every
// preceding byte.

namespace thermo {

inline std::uint32_t crc32(const void* data, std::size_t len,
                           std::uint32_t seed = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int bit = 0; bit < 8; ++bit) c = (c >> 1) ^ (c & 1 ? 0xedb88320u : 0u);
      t[i] = c;
    }
    return t;
  }();
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint32_t crc = ~seed;
  for (std::size_t i = 0; i < len; ++i) crc = (crc >> 8) ^ table[(crc ^ p[i]) & 0xff];
  return ~crc;
}

class CheckpointError : public DataError {
 public:
  explicit CheckpointError(const std::string& what) : DataError(what) {}
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    buf_.append(static_cast<const char*>(p), n);
  }
  std::string& str() { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& buf, std::size_t limit)
      : buf_(buf), limit_(limit) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint16_t u16() {
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(u8()) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string string(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return limit_ - pos_; }

 private:
  void need(std::size_t n) {
    if (limit_ - pos_ < n) {
      throw CheckpointError("checkpoint truncated: need " + std::to_string(n) +
                            " more bytes at offset " + std::to_string(pos_));
    }
  }
  const std::string& buf_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

template <std::floating_point T>
constexpr std::uint8_t dtype_tag() {
  return std::is_same_v<T, float> ? 0 : 1;
}

template <std::floating_point T>
void write_tensor(ByteWriter& w, const std::string& name, const Tensor<T>& t) {
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.u8(dtype_tag<T>());
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d = 0; d < t.rank(); ++d) w.u64(t.dim(d));
  for (std::size_t i = 0; i < t.size(); ++i) {
    if constexpr (std::is_same_v<T, float>) w.f32(t[i]);
    else w.f64(t[i]);
  }
}

template <std::floating_point T>
std::pair<std::string, Tensor<T>> read_tensor(ByteReader& r) {
  const std::uint16_t name_len = r.u16();
  std::string name = r.string(name_len);
  const std::uint8_t dtype = r.u8();
  if (dtype != dtype_tag<T>()) {
    throw CheckpointError("checkpoint tensor " + name + " has dtype tag " +
                          std::to_string(dtype) + ", expected " +
                          std::to_string(dtype_tag<T>()));
  }
  const std::uint8_t rank = r.u8();
  Shape shape(rank);
  for (std::uint8_t d = 0; d < rank; ++d) shape[d] = r.u64();
  Tensor<T> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if constexpr (std::is_same_v<T, float>) t[i] = r.f32();
    else t[i] = r.f64();
  }
  return {std::move(name), std::move(t)};
}

}  // namespace detail

template <std::floating_point T>
std::string serialize_checkpoint(const Model<T>& model, const TrainConfig& config) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u16(static_cast<std::uint16_t>(kCheckpointVersion));

  const ModelDef& def = model.def();
  w.u32(static_cast<std::uint32_t>(def.in_channels));
  w.u32(static_cast<std::uint32_t>(def.in_height));
  w.u32(static_cast<std::uint32_t>(def.in_width));
  w.u32(static_cast<std::uint32_t>(def.conv_filters.size()));
  for (std::size_t f : def.conv_filters) w.u32(static_cast<std::uint32_t>(f));
  for (std::uint8_t b : def.batch_norm) w.u8(b);
  w.u32(static_cast<std::uint32_t>(def.dense_out));
  w.f64(def.bn_epsilon);
  w.f64(def.bn_momentum);

  w.f64(config.learning_rate);
  w.u32(static_cast<std::uint32_t>(config.batch_size));
  w.u32(static_cast<std::uint32_t>(config.epochs));
  w.u32(static_cast<std::uint32_t>(config.steps_per_epoch));
  w.u64(config.seed);
  w.f64(config.threshold);
  w.u8(0);  // optimizer tag: adam

  const auto tensors = model.named_tensors();
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) detail::write_tensor(w, name, *tensor);

  const std::uint32_t crc = crc32(w.str().data(), w.str().size());
  w.u32(crc);
  return std::move(w.str());
}

template <std::floating_point T>
struct LoadedCheckpoint {
  Model<T> model;
  TrainConfig config;
};

template <std::floating_point T>
LoadedCheckpoint<T> deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 10) {
    throw CheckpointError("checkpoint truncated: file is only " +
                          std::to_string(bytes.size()) + " bytes");
  }
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError("bad checkpoint magic, expected THML");
  }
  const std::uint32_t stored_crc =
      static_cast<std::uint8_t>(bytes[bytes.size() - 4]) |
      static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[bytes.size() - 3])) << 8 |
      static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[bytes.size() - 2])) << 16 |
      static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[bytes.size() - 1])) << 24;
  if (crc32(bytes.data(), bytes.size() - 4) != stored_crc) {
    throw CheckpointError("checkpoint CRC mismatch: file is corrupted");
  }

  detail::ByteReader r(bytes, bytes.size() - 4);
  r.string(4);  // magic
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unknown checkpoint format version " + std::to_string(version));
  }

  ModelDef def;
  def.in_channels = r.u32();
  def.in_height = r.u32();
  def.in_width = r.u32();
  const std::uint32_t blocks = r.u32();
  def.conv_filters.assign(blocks, 0);
  for (auto& f : def.conv_filters) f = r.u32();
  def.batch_norm.assign(blocks, 0);
  for (auto& b : def.batch_norm) b = r.u8();
  def.dense_out = r.u32();
  def.bn_epsilon = r.f64();
  def.bn_momentum = r.f64();

  TrainConfig config;
  config.learning_rate = r.f64();
  config.batch_size = r.u32();
  config.epochs = r.u32();
  config.steps_per_epoch = r.u32();
  config.seed = r.u64();
  config.threshold = r.f64();
  const std::uint8_t optimizer = r.u8();
  if (optimizer != 0) {
    throw CheckpointError("unknown optimizer tag " + std::to_string(optimizer));
  }

  const std::uint32_t count = r.u32();
  std::map<std::string, Tensor<T>> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, tensor] = detail::read_tensor<T>(r);
    if (!tensors.emplace(std::move(name), std::move(tensor)).second) {
      throw CheckpointError("checkpoint has a duplicate tensor record");
    }
  }
  if (r.remaining() != 0) {
    throw CheckpointError("checkpoint has " + std::to_string(r.remaining()) +
                          " unexpected trailing bytes");
  }

  LoadedCheckpoint<T> out{Model<T>::zeros(def), config};
  out.model.load_named(tensors);
  return out;
}

template <std::floating_point T>
void save_checkpoint(const Model<T>& model, const TrainConfig& config,
                     const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model, config);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write on checkpoint: " + path.string());
}

template <std::floating_point T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint<T>(bytes);
}

}  // namespace thermo
