#include "mbtf/nn/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mbtf/error.hpp"

namespace mbtf::nn {

namespace {

constexpr char kMagic[8] = {'M', 'B', 'T', 'F', 'W', 'T', 'S', '\0'};
constexpr std::uint8_t kDtypeF32 = 0;

class Writer {
 public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes(b) {}
  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw DataError("weights container truncated at byte " + std::to_string(pos));
  }
  std::uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * i);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  bool done() const { return pos == bytes.size(); }

  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
};

}  // namespace

const Tensor<float>& ModelWeights::at(const std::string& path) const {
  auto it = tensors_.find(path);
  if (it == tensors_.end()) throw ValidationError("weights: missing tensor '" + path + "'");
  return it->second;
}

std::optional<std::string> ModelWeights::meta(const std::string& key) const {
  auto it = metadata_.find(key);
  if (it == metadata_.end()) return std::nullopt;
  return it->second;
}

ModelWeights ModelWeights::with(const std::map<std::string, Tensor<float>>& tensors,
                                const std::map<std::string, std::string>& metadata) const {
  auto t = tensors_;
  auto m = metadata_;
  for (const auto& [k, v] : tensors) t[k] = v;
  for (const auto& [k, v] : metadata) m[k] = v;
  return ModelWeights(std::move(t), std::move(m));
}

std::vector<std::uint8_t> ModelWeights::serialize() const {
  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& [path, t] : tensors_) {
    w.str(path);
    w.u8(kDtypeF32);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float f : t.vec()) w.f32(f);
  }
  w.u32(static_cast<std::uint32_t>(metadata_.size()));
  for (const auto& [k, v] : metadata_) {
    w.str(k);
    w.str(v);
  }
  return std::move(w.out);
}

ModelWeights ModelWeights::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.need(sizeof(kMagic));
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw DataError("weights container: bad magic");
  r.pos = sizeof(kMagic);
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw DataError("weights container: unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  std::map<std::string, Tensor<float>> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string path = r.str();
    const std::uint8_t dtype = r.u8();
    if (dtype != kDtypeF32) throw DataError("weights container: unsupported dtype for '" + path + "'");
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw DataError("weights container: implausible rank for '" + path + "'");
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<int>(r.u32()));
    const std::size_t n = shape_numel(shape);
    r.need(4 * n);
    std::vector<float> data(n);
    for (auto& f : data) f = r.f32();
    if (!tensors.emplace(path, Tensor<float>(std::move(shape), std::move(data))).second) {
      throw DataError("weights container: duplicate path '" + path + "'");
    }
  }
  std::map<std::string, std::string> meta;
  const std::uint32_t mcount = r.u32();
  for (std::uint32_t i = 0; i < mcount; ++i) {
    std::string k = r.str();
    meta[k] = r.str();
  }
  if (!r.done()) throw DataError("weights container: trailing bytes");
  return ModelWeights(std::move(tensors), std::move(meta));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

void ModelWeights::save(const std::filesystem::path& path) const { write_file_bytes(path, serialize()); }

ModelWeights ModelWeights::load(const std::filesystem::path& path) { return deserialize(read_file_bytes(path)); }

}  // namespace mbtf::nn
