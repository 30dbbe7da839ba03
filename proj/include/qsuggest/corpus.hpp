#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "qsuggest/vocab.hpp"

namespace qsuggest {

// One query entry from a search log. engagement is 1 when the user viewed
// results (dwell >= threshold) or took a positive action on them.
struct QueryEvent {
  std::string user;
  int64_t timestamp = 0;
  std::string query;
  int engagement = 0;
};

// Ordered events of one user with consecutive gaps within the session window.
struct SearchSession {
  std::vector<QueryEvent> events;
};

struct QueryPair {
  std::string q_src;
  std::string q_next;
  int u_plus = 0;
};

// Splits per-user query streams on gaps larger than window_seconds. Events
// are sorted per user by timestamp first; no event is lost or duplicated.
std::vector<SearchSession> segment_sessions(const std::vector<QueryEvent>& events,
                                            int64_t window_seconds);

// Session-level feedback for the pair (events[next_index-1], events[next_index]):
// 1 iff any event at or after next_index carries engagement.
int label_feedback(const SearchSession& session, size_t next_index);

// Locates the pair by consecutive query texts and labels it. Throws DataError
// when the pair does not originate from the session.
int label_feedback(const SearchSession& session, const QueryPair& pair);

// A session of N queries yields exactly N-1 consecutive pairs, in order and
// unfiltered (weak supervision keeps duplicates and dissimilar pairs).
std::vector<QueryPair> extract_pairs(const SearchSession& session);

struct DatasetSplit {
  std::vector<QueryPair> train, valid, test;
};

// Deterministic shuffled split; fractions must be in [0,1] and sum to 1.
DatasetSplit split_dataset(const std::vector<QueryPair>& pairs, double f_train, double f_valid,
                           double f_test, uint64_t seed);

// Log file: '#'-prefixed header, then user \t timestamp \t query \t engagement.
void write_log(const std::string& path, const std::vector<QueryEvent>& events);
std::vector<QueryEvent> read_log(const std::string& path);

// Pairs file: q_src \t q_next \t u_plus.
void write_pairs(const std::string& path, const std::vector<QueryPair>& pairs);
std::vector<QueryPair> read_pairs(const std::string& path);

// Exact-match lookup tables for reward and engagement metrics. Keys are
// vocabulary-normalized query strings so that logged text and generated
// token ids compare in the same space.
class FeedbackIndex {
 public:
  static FeedbackIndex from_pairs(const std::vector<QueryPair>& pairs, const Vocabulary& vocab,
                                  int t_max);
  static FeedbackIndex from_sessions(const std::vector<SearchSession>& sessions,
                                     const Vocabulary& vocab, int t_max);

  // U+ for a generated query: 1 iff (q_src, candidate) matches a logged pair
  // with positive session feedback.
  int u_plus(const std::string& normalized_src, const std::string& normalized_candidate) const;

  // Whether the query appears in an indexed session with a downstream
  // positive action (Sessions+@6 support).
  bool query_engaged(const std::string& normalized_query) const;

  size_t engaged_pair_count() const { return engaged_pairs_.size(); }
  size_t engaged_query_count() const { return engaged_queries_.size(); }

 private:
  std::unordered_set<std::string> engaged_pairs_;
  std::unordered_set<std::string> engaged_queries_;
};

}  // namespace qsuggest
