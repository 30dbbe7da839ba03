#include "qsuggest/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace qsuggest {

namespace {

size_t dtype_size(DType d) {
  switch (d) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kI64: return 8;
  }
  throw DataError("unknown checkpoint dtype");
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated checkpoint file");
  return v;
}

}  // namespace

int64_t Checkpoint::Entry::count() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

void Checkpoint::add_raw(const std::string& name, DType dtype, std::vector<int64_t> shape,
                         const void* data, size_t bytes) {
  if (by_name_.count(name)) throw DataError("duplicate checkpoint entry: " + name);
  Entry e;
  e.name = name;
  e.dtype = dtype;
  e.shape = std::move(shape);
  if (bytes != static_cast<size_t>(e.count()) * dtype_size(dtype))
    throw DataError("checkpoint entry size mismatch: " + name);
  e.raw.resize(bytes);
  std::memcpy(e.raw.data(), data, bytes);
  by_name_.emplace(name, entries_.size());
  entries_.push_back(std::move(e));
}

void Checkpoint::add_f32(const std::string& name, std::vector<int64_t> shape, const float* data) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  add_raw(name, DType::kF32, std::move(shape), data, static_cast<size_t>(n) * 4);
}

void Checkpoint::add_f64(const std::string& name, std::vector<int64_t> shape, const double* data) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  add_raw(name, DType::kF64, std::move(shape), data, static_cast<size_t>(n) * 8);
}

void Checkpoint::add_i64(const std::string& name, std::vector<int64_t> values) {
  std::vector<int64_t> shape{static_cast<int64_t>(values.size())};
  add_raw(name, DType::kI64, std::move(shape), values.data(), values.size() * 8);
}

bool Checkpoint::has(const std::string& name) const { return by_name_.count(name) != 0; }

const Checkpoint::Entry& Checkpoint::entry(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw DataError("missing checkpoint entry: " + name);
  return entries_[it->second];
}

std::vector<float> Checkpoint::f32(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != DType::kF32) throw DataError("checkpoint entry is not f32: " + name);
  std::vector<float> v(static_cast<size_t>(e.count()));
  std::memcpy(v.data(), e.raw.data(), e.raw.size());
  return v;
}

std::vector<double> Checkpoint::f64(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != DType::kF64) throw DataError("checkpoint entry is not f64: " + name);
  std::vector<double> v(static_cast<size_t>(e.count()));
  std::memcpy(v.data(), e.raw.data(), e.raw.size());
  return v;
}

std::vector<int64_t> Checkpoint::i64(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != DType::kI64) throw DataError("checkpoint entry is not i64: " + name);
  std::vector<int64_t> v(static_cast<size_t>(e.count()));
  std::memcpy(v.data(), e.raw.data(), e.raw.size());
  return v;
}

int64_t Checkpoint::scalar_i64(const std::string& name) const {
  auto v = i64(name);
  if (v.size() != 1) throw DataError("checkpoint entry is not a scalar: " + name);
  return v[0];
}

void Checkpoint::set_kind(const std::string& kind) {
  int64_t code;
  if (kind == kKindGenerator)
    code = 0;
  else if (kind == kKindEstimator)
    code = 1;
  else
    throw DataError("unknown checkpoint kind: " + kind);
  add_i64("meta/kind", {code});
}

std::string Checkpoint::kind() const {
  int64_t code = scalar_i64("meta/kind");
  if (code == 0) return kKindGenerator;
  if (code == 1) return kKindEstimator;
  throw DataError("corrupt checkpoint kind tag");
}

void Checkpoint::require_kind(const std::string& expected) const {
  std::string k = kind();
  if (k != expected)
    throw DataError("checkpoint kind mismatch: expected " + expected + ", found " + k);
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kMagic, 8);
  write_pod<uint64_t>(out, entries_.size());
  for (const auto& e : entries_) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_pod<uint8_t>(out, static_cast<uint8_t>(e.dtype));
    write_pod<uint32_t>(out, static_cast<uint32_t>(e.shape.size()));
    for (int64_t d : e.shape) write_pod<int64_t>(out, d);
  }
  for (const auto& e : entries_)
    out.write(e.raw.data(), static_cast<std::streamsize>(e.raw.size()));
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("not a checkpoint file (bad magic): " + path);
  uint64_t count = read_pod<uint64_t>(in);
  Checkpoint ckpt;
  ckpt.entries_.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    Entry e;
    uint32_t name_len = read_pod<uint32_t>(in);
    e.name.resize(name_len);
    in.read(e.name.data(), name_len);
    uint8_t dtype = read_pod<uint8_t>(in);
    if (dtype > 2) throw DataError("corrupt checkpoint dtype in " + path);
    e.dtype = static_cast<DType>(dtype);
    uint32_t ndim = read_pod<uint32_t>(in);
    e.shape.resize(ndim);
    for (uint32_t d = 0; d < ndim; ++d) e.shape[d] = read_pod<int64_t>(in);
    if (!in) throw DataError("truncated checkpoint manifest: " + path);
    ckpt.by_name_.emplace(e.name, ckpt.entries_.size());
    ckpt.entries_.push_back(std::move(e));
  }
  for (auto& e : ckpt.entries_) {
    e.raw.resize(static_cast<size_t>(e.count()) * dtype_size(e.dtype));
    in.read(e.raw.data(), static_cast<std::streamsize>(e.raw.size()));
    if (!in) throw DataError("truncated checkpoint data: " + path);
  }
  return ckpt;
}

}  // namespace qsuggest
