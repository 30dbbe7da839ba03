#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "qsuggest/errors.hpp"
#include "qsuggest/rng.hpp"

namespace qsuggest {

// Lowercases and splits on whitespace. Queries are short keyword strings;
// no subword modeling.
std::vector<std::string> tokenize(const std::string& text);

// Token table with reserved ids, per-token counts and the prior word
// distribution p_w = n_w / N over kept tokens. <UNK> carries the pooled
// count of all dropped occurrences so out-of-vocabulary tokens still have a
// usable prior.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kStart = 2;
  static constexpr int kEnd = 3;
  static constexpr int kSep = 4;
  static constexpr int kNumReserved = 5;

  Vocabulary();

  // Keeps the max_size most frequent tokens; ties broken lexicographically.
  static Vocabulary build(const std::vector<std::string>& texts, int max_size);
  static Vocabulary from_counts(const std::vector<std::pair<std::string, int64_t>>& counts,
                                int max_size);

  int size() const { return static_cast<int>(tokens_.size()); }
  int real_token_count() const { return size() - kNumReserved; }

  int id_of(const std::string& token) const;  // kUnk when unknown
  const std::string& token_of(int id) const;
  bool is_reserved(int id) const { return id >= 0 && id < kNumReserved; }

  int64_t count_of(int id) const { return counts_[static_cast<size_t>(id)]; }
  int64_t vocab_total() const { return vocab_total_; }

  // p_w for real tokens; the pooled-count prior for <UNK>; 0 for the other
  // reserved tokens.
  double prior(int id) const;

  // Draws a real token id from the prior distribution.
  int sample_prior(Rng& rng) const;

  // OOV tokens map to <UNK>; sequences truncate to t_max; <END> is appended
  // for decoder targets. Throws DataError when the text has no tokens.
  std::vector<int> encode(const std::string& text, int t_max, bool append_end = true) const;

  // Token ids back to a space-joined string. Reserved ids render their
  // literal markers; callers strip <END> before display.
  std::string decode(const std::vector<int>& ids) const;

  // Normalizes a raw query the way the generator sees it: lowercase, OOV to
  // <UNK>, truncated to t_max.
  std::string normalize(const std::string& text, int t_max) const;

  void save(const std::string& path) const;  // token \t count, count-descending
  static Vocabulary load(const std::string& path);

 private:
  void finalize();

  std::unordered_map<std::string, int> to_id_;
  std::vector<std::string> tokens_;
  std::vector<int64_t> counts_;
  int64_t vocab_total_ = 0;
  std::vector<double> prior_cum_;
};

}  // namespace qsuggest
