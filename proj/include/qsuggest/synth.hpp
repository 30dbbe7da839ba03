#pragma once

#include <cstdint>

#include "qsuggest/corpus.hpp"

namespace qsuggest {

// Synthetic query-log generator. Replaces proprietary logs with a corpus
// that has planted, learnable structure: consecutive queries in a session
// share their topic token with probability p_related, and engagement is more
// likely on events whose incoming transition was related. Fully
// deterministic per seed, with one independent stream per user.
struct SynthConfig {
  int users = 1700;
  int sessions_per_user = 10;
  int events_min = 2;
  int events_max = 6;
  int topics = 150;
  int modifiers = 80;
  int rare_words = 4000;
  // Modifiers are partitioned into compatibility groups and each topic draws
  // from its own group most of the time, the way job-search and
  // people-search queries use different qualifier vocabularies.
  int modifier_groups = 4;
  double p_in_group = 0.9;
  double p_related = 0.8;
  double p_rare = 0.08;
  double p_keep_modifier = 0.3;
  // Log noise: fraction of queries with an accidentally repeated word, the
  // failure mode MLE decoders pick up and the naturalness penalty targets.
  // Only even-indexed topics are noisy; the rest of the log stays clean the
  // way noise concentrates in some query segments.
  double p_word_dup = 0.08;
  double engagement_base = 0.08;
  double engagement_boost = 0.42;
  int64_t start_timestamp = 1600000000;
  int64_t session_gap_seconds = 3600;

  void validate() const;
};

std::vector<QueryEvent> synthesize_logs(const SynthConfig& config, uint64_t seed);

}  // namespace qsuggest
