// SPDX-License-Identifier: Apache-2.0
#include "beamfuse/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "beamfuse/error.hpp"

namespace beamfuse {

namespace {

constexpr char kMagic[4] = {'B', 'F', 'M', '1'};

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw DataError("model file truncated at byte " + std::to_string(pos_));
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const ModelParams& model) {
  model.validate();
  std::vector<std::uint8_t> out;
  Writer w(out);
  w.bytes(kMagic, 4);
  w.u32(static_cast<std::uint32_t>(model.dims.vocab_src));
  w.u32(static_cast<std::uint32_t>(model.dims.vocab_tgt));
  w.u32(static_cast<std::uint32_t>(model.dims.embed_dim));
  w.u32(static_cast<std::uint32_t>(model.dims.state_dim));
  w.u64(model.seed);
  for (const TensorView& t : model.tensors()) {
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u64(static_cast<std::uint64_t>(t.size()));
    for (Index i = 0; i < t.size(); ++i) w.f32(t.data[i]);
  }
  return out;
}

ModelParams deserialize_model(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw DataError("not a BFM1 model file (bad magic)");
  ModelDims dims;
  dims.vocab_src = r.u32();
  dims.vocab_tgt = r.u32();
  dims.embed_dim = r.u32();
  dims.state_dim = r.u32();
  const std::uint64_t seed = r.u64();
  try {
    dims.validate();
  } catch (const ValueError& e) {
    throw DataError(std::string("model header: ") + e.what());
  }

  ModelParams m = ModelParams::zeros(dims);
  m.seed = seed;
  for (TensorView& t : m.tensors()) {
    const std::string name = r.str(r.u16());
    if (name != t.name) throw DataError("model section '" + name + "' where '" + t.name + "' expected");
    const std::uint64_t count = r.u64();
    if (count != static_cast<std::uint64_t>(t.size())) {
      throw DataError("model section '" + name + "' has " + std::to_string(count) +
                      " elements, expected " + std::to_string(t.size()));
    }
    for (Index i = 0; i < t.size(); ++i) t.data[i] = r.f32();
  }
  if (!r.done()) throw DataError("trailing bytes after last model section");
  try {
    m.validate();
  } catch (const ValueError& e) {
    throw DataError(e.what());
  }
  return m;
}

void save_model(const ModelParams& model, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = serialize_model(model);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open model file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

std::vector<std::string> synthetic_vocab(Index size) {
  if (size < kFirstWordId) throw ValueError("vocabulary must hold the 3 reserved tokens");
  std::vector<std::string> v{"<pad>", "<s>", "</s>"};
  for (Index i = kFirstWordId; i < size; ++i) v.push_back("w" + std::to_string(i));
  return v;
}

void save_vocab(const std::vector<std::string>& vocab, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  for (const auto& tok : vocab) f << tok << '\n';
  if (!f) throw DataError("write failed: " + path.string());
}

std::vector<std::string> load_vocab(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open vocabulary file " + path.string());
  std::vector<std::string> v;
  for (std::string line; std::getline(f, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.push_back(line);
  }
  if (v.size() < 3) throw DataError("vocabulary " + path.string() + " lacks the reserved tokens");
  return v;
}

}  // namespace beamfuse
