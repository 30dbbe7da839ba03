#pragma once

#include <string>
#include <vector>

#include "qsuggest/corpus.hpp"
#include "qsuggest/vocab.hpp"

namespace qsuggest {

// The five test-set metrics, each over the (up to) six suggestions generated
// for one test query. Suggestions are vocabulary-normalized strings.

// 1 iff any suggestion exact-matches a query of an indexed session that
// carries a downstream positive action.
int sessions_plus_at6(const std::vector<std::string>& suggestions, const FeedbackIndex& index);

// Count of distinct suggestion strings after removing any containing <UNK>.
int unique_at6(const std::vector<std::string>& suggestions);

// 1 iff q_next exact-matches one of the suggestions.
int precision_at6(const std::vector<std::string>& suggestions, const std::string& q_next);

// (token_count - distinct_token_count) / token_count.
double repetitions_s(const std::string& suggestion);

// Sum of natural-log prior word probabilities; <UNK> uses the pooled prior.
// Throws on a token whose prior is zero.
double prior_sentence_prob(const std::string& suggestion, const Vocabulary& vocab);

// Two-sided 95% Student-t quantile (0.975 point) for the given degrees of
// freedom. Self-contained regularized-incomplete-beta inversion.
double student_t_975(int df);

// Mean and 95% CI half-width (t-distribution). Requires n >= 2.
struct MeanCi {
  double mean = 0;
  double ci = 0;
  size_t n = 0;
};
MeanCi mean_with_ci(const std::vector<double>& values);

struct MetricRow {
  std::string name;
  double mean = 0;
  double ci = 0;
  size_t n = 0;
};

struct MetricsReport {
  std::vector<MetricRow> rows;
  const MetricRow* find(const std::string& name) const;
};

// One suggestion set per test pair, already normalized.
struct SuggestionSet {
  std::string q_src;
  std::string q_next;
  std::vector<std::string> suggestions;
};

// Aggregates the five metrics over a test set. Binary metrics and Unique@6
// are per test pair; Repetitions_S and P_S are per generated suggestion.
MetricsReport build_report(const std::vector<SuggestionSet>& sets, const FeedbackIndex& index,
                           const Vocabulary& vocab);

// Report file: metric \t mean \t ci \t n.
void write_report(const std::string& path, const MetricsReport& report);
MetricsReport read_report(const std::string& path);

// Comparison file: metric \t base \t other \t relative_delta.
void write_comparison(const std::string& path, const MetricsReport& base,
                      const MetricsReport& other);

// Suggestion file: q_src followed by the suggestions, tab-separated.
void write_suggestions(const std::string& path, const std::vector<SuggestionSet>& sets);
std::vector<SuggestionSet> read_suggestions(const std::string& path);

std::string format_double(double v);

}  // namespace qsuggest
