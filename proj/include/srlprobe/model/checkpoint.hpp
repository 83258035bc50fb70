#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "srlprobe/core/error.hpp"
#include "srlprobe/model/params.hpp"

namespace srlprobe::model {

// Layout (all integers and floats little-endian):
//   "EPRB" | u32 version
//   config: u32 n_layers, d_model, n_heads, ff_mult, vocab, max_seq | f32 dropout | u8 tied
//   u32 tensor count, then per tensor:
//     u32 name length | name bytes | u8 dtype (0 = f32) | u32 ndim | u64 dims[ndim] | f32 payload
//   metadata: u64 seed | u32 epoch | u32 len + regime | u64 corpus hash | u32 len + extra (JSON text)
inline constexpr std::array<char, 4> kCheckpointMagic = {'E', 'P', 'R', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::uint32_t epoch = 0;
  std::string regime;
  std::uint64_t corpus_hash = 0;
  std::string extra;  // free-form JSON

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
  TransformerParams<float> params;
  CheckpointMeta meta;
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& bytes() const noexcept { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string data) : data_(std::move(data)) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
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
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    auto n = u32();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const noexcept { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw ValidationError("checkpoint: truncated file");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic.data(), 4);
  w.u32(kCheckpointVersion);
  const auto& c = ck.params.config;
  w.u32(static_cast<std::uint32_t>(c.n_layers));
  w.u32(static_cast<std::uint32_t>(c.d_model));
  w.u32(static_cast<std::uint32_t>(c.n_heads));
  w.u32(static_cast<std::uint32_t>(c.ff_mult));
  w.u32(static_cast<std::uint32_t>(c.vocab));
  w.u32(static_cast<std::uint32_t>(c.max_seq));
  w.f32(c.dropout);
  w.u8(c.tie_embeddings ? 1 : 0);
  std::uint32_t count = 0;
  visit_tensors([&](const std::string&, TensorKind, const auto&) { ++count; }, ck.params);
  w.u32(count);
  visit_tensors([&](const std::string& name, TensorKind, const auto& t) {
    w.str(name);
    w.u8(0);
    const bool is_matrix = t.ColsAtCompileTime == Eigen::Dynamic && t.RowsAtCompileTime == Eigen::Dynamic;
    if (is_matrix) {
      w.u32(2);
      w.u64(static_cast<std::uint64_t>(t.rows()));
      w.u64(static_cast<std::uint64_t>(t.cols()));
    } else {
      w.u32(1);
      w.u64(static_cast<std::uint64_t>(t.size()));
    }
    for (Eigen::Index i = 0; i < t.size(); ++i) w.f32(t.data()[i]);
  }, ck.params);
  w.u64(ck.meta.seed);
  w.u32(ck.meta.epoch);
  w.str(ck.meta.regime);
  w.u64(ck.meta.corpus_hash);
  w.str(ck.meta.extra);
  return w.bytes();
}

inline Checkpoint deserialize_checkpoint(std::string bytes) {
  detail::ByteReader r(std::move(bytes));
  if (r.raw(4) != std::string(kCheckpointMagic.data(), 4)) throw ValidationError("checkpoint: bad magic");
  if (auto v = r.u32(); v != kCheckpointVersion) {
    throw ValidationError("checkpoint: unsupported version " + std::to_string(v));
  }
  ModelConfig c;
  c.n_layers = static_cast<int>(r.u32());
  c.d_model = static_cast<int>(r.u32());
  c.n_heads = static_cast<int>(r.u32());
  c.ff_mult = static_cast<int>(r.u32());
  c.vocab = static_cast<int>(r.u32());
  c.max_seq = static_cast<int>(r.u32());
  c.dropout = r.f32();
  c.tie_embeddings = r.u8() != 0;
  c.validate();
  Checkpoint ck;
  ck.params = TransformerParams<float>::zeros(c);
  std::uint32_t expected = 0;
  visit_tensors([&](const std::string&, TensorKind, const auto&) { ++expected; }, ck.params);
  if (r.u32() != expected) throw ValidationError("checkpoint: tensor count does not match config");
  visit_tensors([&](const std::string& name, TensorKind, auto& t) {
    if (r.str() != name) throw ValidationError("checkpoint: unexpected tensor, wanted " + name);
    if (r.u8() != 0) throw ValidationError("checkpoint: unsupported dtype for " + name);
    auto ndim = r.u32();
    std::uint64_t n = 1;
    std::vector<std::uint64_t> dims;
    for (std::uint32_t k = 0; k < ndim; ++k) {
      dims.push_back(r.u64());
      n *= dims.back();
    }
    if (n != static_cast<std::uint64_t>(t.size()) || (ndim == 2 && dims[0] != static_cast<std::uint64_t>(t.rows()))) {
      throw ValidationError("checkpoint: shape mismatch for " + name);
    }
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = r.f32();
  }, ck.params);
  ck.meta.seed = r.u64();
  ck.meta.epoch = r.u32();
  ck.meta.regime = r.str();
  ck.meta.corpus_hash = r.u64();
  ck.meta.extra = r.str();
  if (!r.done()) throw ValidationError("checkpoint: trailing bytes");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  const auto bytes = serialize_checkpoint(ck);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("checkpoint: cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("checkpoint: write failed for " + path);
  }
  std::rename(tmp.c_str(), path.c_str());
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace srlprobe::model
