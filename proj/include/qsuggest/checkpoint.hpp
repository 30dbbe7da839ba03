#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "qsuggest/errors.hpp"

namespace qsuggest {

// Checkpoint container: magic bytes "QRLCKPT1", a manifest of
// (name, shape, dtype) entries, then raw little-endian values per entry.
// Round-trips are bit-exact. Model kind and training-state snapshots are
// ordinary entries under the meta/ and opt/ prefixes.
enum class DType : uint8_t { kF32 = 0, kF64 = 1, kI64 = 2 };

class Checkpoint {
 public:
  struct Entry {
    std::string name;
    DType dtype = DType::kF32;
    std::vector<int64_t> shape;
    std::vector<char> raw;

    int64_t count() const;
  };

  static constexpr const char* kMagic = "QRLCKPT1";
  static constexpr const char* kKindGenerator = "generator";
  static constexpr const char* kKindEstimator = "estimator";

  void add_f32(const std::string& name, std::vector<int64_t> shape, const float* data);
  void add_f64(const std::string& name, std::vector<int64_t> shape, const double* data);
  void add_i64(const std::string& name, std::vector<int64_t> values);

  bool has(const std::string& name) const;
  const Entry& entry(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  std::vector<float> f32(const std::string& name) const;
  std::vector<double> f64(const std::string& name) const;
  std::vector<int64_t> i64(const std::string& name) const;
  int64_t scalar_i64(const std::string& name) const;

  void set_kind(const std::string& kind);
  std::string kind() const;

  // Throws DataError with a kind-mismatch message unless kind() == expected.
  void require_kind(const std::string& expected) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  void add_raw(const std::string& name, DType dtype, std::vector<int64_t> shape,
               const void* data, size_t bytes);

  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> by_name_;
};

}  // namespace qsuggest
