#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "qsuggest/corpus.hpp"
#include "qsuggest/estimator.hpp"

namespace qsuggest {

// Per-sample reward inputs: session feedback, unigram relatedness to the
// source query, estimated naturalness, and the unnaturalness penalty weight.
struct RewardComponents {
  int u_plus = 0;
  double rouge = 0;
  double d_phi = 0;
  double eta = 0;
};

// Unigram-overlap F-measure with clipped counts: overlap counts each word at
// most min(count_a, count_b) times, so repeats cannot inflate the score.
// Symmetric and order-invariant; empty input is an error.
template <typename T>
double rouge1(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.empty() || b.empty()) throw DataError("rouge1 of empty token sequence");
  std::unordered_map<T, int> counts;
  for (const T& t : a) ++counts[t];
  int overlap = 0;
  for (const T& t : b) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  double precision = static_cast<double>(overlap) / static_cast<double>(b.size());
  double recall = static_cast<double>(overlap) / static_cast<double>(a.size());
  return 2.0 * precision * recall / (precision + recall);
}

// R = U+ + (1 - U+) * (ROUGE - eta * (1 - D_phi)); exactly 1 when U+ = 1.
inline double composite_reward(const RewardComponents& c) {
  if (c.u_plus != 0 && c.u_plus != 1) throw DataError("u_plus must be 0 or 1");
  if (c.rouge < 0 || c.rouge > 1) throw DataError("rouge component out of [0,1]");
  if (c.d_phi < 0 || c.d_phi > 1) throw DataError("d_phi component out of [0,1]");
  if (c.eta < 0) throw DataError("eta must be >= 0");
  double u = static_cast<double>(c.u_plus);
  return u + (1.0 - u) * (c.rouge - c.eta * (1.0 - c.d_phi));
}

// Future-reward for one complete generated sequence, assigned once at the
// end of the sequence. U+ comes from exact-match lookup against logged
// pairs (0 when unmatched). An empty generation scores rouge 0 and
// naturalness 0, i.e. reward -eta: no real user enters an empty query.
template <typename Real>
double reward_for_sample(const std::vector<int>& src, const std::vector<int>& y_content,
                         const std::string& src_text, const FeedbackIndex& index,
                         const EstimatorModel<Real>& estimator, const Vocabulary& vocab,
                         double eta, RewardComponents* trace = nullptr) {
  RewardComponents c;
  c.eta = eta;
  if (y_content.empty()) {
    c.u_plus = 0;
    c.rouge = 0;
    c.d_phi = 0;
  } else {
    std::string y_text = vocab.decode(y_content);
    c.u_plus = index.u_plus(src_text, y_text);
    if (c.u_plus == 0 || trace != nullptr) {
      c.rouge = rouge1(src, y_content);
      c.d_phi = estimator.naturalness(src, y_content);
    }
  }
  if (trace != nullptr) *trace = c;
  return composite_reward(c);
}

}  // namespace qsuggest
