#include "qsuggest/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace qsuggest {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

namespace {
const char* kReservedNames[Vocabulary::kNumReserved] = {"<PAD>", "<UNK>", "<START>", "<END>",
                                                        "<SEP>"};
}

Vocabulary::Vocabulary() {
  for (int i = 0; i < kNumReserved; ++i) {
    tokens_.emplace_back(kReservedNames[i]);
    to_id_.emplace(kReservedNames[i], i);
    counts_.push_back(0);
  }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, int max_size) {
  std::unordered_map<std::string, int64_t> freq;
  for (const auto& text : texts)
    for (const auto& tok : tokenize(text)) ++freq[tok];
  if (freq.empty()) throw DataError("cannot build vocabulary from an empty corpus");
  std::vector<std::pair<std::string, int64_t>> counts(freq.begin(), freq.end());
  return from_counts(counts, max_size);
}

Vocabulary Vocabulary::from_counts(const std::vector<std::pair<std::string, int64_t>>& counts,
                                   int max_size) {
  if (max_size < 1) throw ConfigError("vocabulary size must be at least 1");
  std::vector<std::pair<std::string, int64_t>> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  int64_t dropped = 0;
  for (size_t i = 0; i < sorted.size(); ++i) {
    if (static_cast<int>(i) < max_size) {
      v.to_id_.emplace(sorted[i].first, static_cast<int>(v.tokens_.size()));
      v.tokens_.push_back(sorted[i].first);
      v.counts_.push_back(sorted[i].second);
    } else {
      dropped += sorted[i].second;
    }
  }
  v.counts_[kUnk] = dropped;
  v.finalize();
  return v;
}

void Vocabulary::finalize() {
  vocab_total_ = 0;
  for (int i = kNumReserved; i < size(); ++i) vocab_total_ += counts_[static_cast<size_t>(i)];
  prior_cum_.assign(static_cast<size_t>(real_token_count()), 0.0);
  double acc = 0;
  for (int i = 0; i < real_token_count(); ++i) {
    acc += static_cast<double>(counts_[static_cast<size_t>(i + kNumReserved)]);
    prior_cum_[static_cast<size_t>(i)] = acc;
  }
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = to_id_.find(token);
  return it == to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size()) throw DataError("token id out of range");
  return tokens_[static_cast<size_t>(id)];
}

double Vocabulary::prior(int id) const {
  if (id < 0 || id >= size()) throw DataError("token id out of range");
  if (id == kUnk || id >= kNumReserved) {
    if (vocab_total_ == 0) return 0.0;
    return static_cast<double>(counts_[static_cast<size_t>(id)]) /
           static_cast<double>(vocab_total_);
  }
  return 0.0;
}

int Vocabulary::sample_prior(Rng& rng) const {
  if (real_token_count() == 0 || vocab_total_ == 0)
    throw DataError("vocabulary has no counted tokens to sample");
  double u = rng.uniform() * prior_cum_.back();
  auto it = std::upper_bound(prior_cum_.begin(), prior_cum_.end(), u);
  size_t idx = static_cast<size_t>(it - prior_cum_.begin());
  if (idx >= prior_cum_.size()) idx = prior_cum_.size() - 1;
  return static_cast<int>(idx) + kNumReserved;
}

std::vector<int> Vocabulary::encode(const std::string& text, int t_max, bool append_end) const {
  std::vector<std::string> toks = tokenize(text);
  if (toks.empty()) throw DataError("cannot encode empty query text");
  if (static_cast<int>(toks.size()) > t_max) toks.resize(static_cast<size_t>(t_max));
  std::vector<int> ids;
  ids.reserve(toks.size() + 1);
  for (const auto& t : toks) ids.push_back(id_of(t));
  if (append_end) ids.push_back(kEnd);
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += token_of(ids[i]);
  }
  return out;
}

std::string Vocabulary::normalize(const std::string& text, int t_max) const {
  return decode(encode(text, t_max, /*append_end=*/false));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocab file: " + path);
  // Real tokens are already stored in count-descending order; <UNK> carries
  // the pooled dropped-token count and is emitted so priors survive reload.
  out << "<UNK>\t" << counts_[kUnk] << "\n";
  for (int i = kNumReserved; i < size(); ++i)
    out << tokens_[static_cast<size_t>(i)] << "\t" << counts_[static_cast<size_t>(i)] << "\n";
  if (!out) throw DataError("failed writing vocab file: " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vocab file: " + path);
  Vocabulary v;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("vocab file line " + std::to_string(line_no) + ": expected token\\tcount");
    std::string tok = line.substr(0, tab);
    int64_t count = 0;
    try {
      count = std::stoll(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw DataError("vocab file line " + std::to_string(line_no) + ": bad count");
    }
    if (tok == "<UNK>") {
      v.counts_[kUnk] = count;
    } else {
      v.to_id_.emplace(tok, static_cast<int>(v.tokens_.size()));
      v.tokens_.push_back(tok);
      v.counts_.push_back(count);
    }
  }
  if (v.real_token_count() == 0) throw DataError("vocab file has no tokens: " + path);
  v.finalize();
  return v;
}

}  // namespace qsuggest
