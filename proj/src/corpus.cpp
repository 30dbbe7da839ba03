#include "qsuggest/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

namespace qsuggest {

std::vector<SearchSession> segment_sessions(const std::vector<QueryEvent>& events,
                                            int64_t window_seconds) {
  if (window_seconds <= 0) throw ConfigError("session window must be positive");
  // Group per user, preserving first-appearance order of users.
  std::vector<std::string> user_order;
  std::unordered_map<std::string, std::vector<QueryEvent>> per_user;
  for (const auto& e : events) {
    auto it = per_user.find(e.user);
    if (it == per_user.end()) {
      user_order.push_back(e.user);
      per_user.emplace(e.user, std::vector<QueryEvent>{e});
    } else {
      it->second.push_back(e);
    }
  }

  std::vector<SearchSession> sessions;
  for (const auto& user : user_order) {
    auto& stream = per_user[user];
    std::stable_sort(stream.begin(), stream.end(),
                     [](const QueryEvent& a, const QueryEvent& b) {
                       return a.timestamp < b.timestamp;
                     });
    SearchSession cur;
    for (const auto& e : stream) {
      if (!cur.events.empty() && e.timestamp - cur.events.back().timestamp > window_seconds) {
        sessions.push_back(std::move(cur));
        cur = SearchSession{};
      }
      cur.events.push_back(e);
    }
    if (!cur.events.empty()) sessions.push_back(std::move(cur));
  }
  return sessions;
}

int label_feedback(const SearchSession& session, size_t next_index) {
  if (next_index == 0 || next_index >= session.events.size())
    throw DataError("pair index out of session range");
  for (size_t j = next_index; j < session.events.size(); ++j)
    if (session.events[j].engagement != 0) return 1;
  return 0;
}

int label_feedback(const SearchSession& session, const QueryPair& pair) {
  for (size_t i = 0; i + 1 < session.events.size(); ++i) {
    if (session.events[i].query == pair.q_src && session.events[i + 1].query == pair.q_next)
      return label_feedback(session, i + 1);
  }
  throw DataError("pair not found in session");
}

std::vector<QueryPair> extract_pairs(const SearchSession& session) {
  std::vector<QueryPair> pairs;
  if (session.events.size() < 2) return pairs;
  pairs.reserve(session.events.size() - 1);
  for (size_t i = 0; i + 1 < session.events.size(); ++i) {
    QueryPair p;
    p.q_src = session.events[i].query;
    p.q_next = session.events[i + 1].query;
    p.u_plus = label_feedback(session, i + 1);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

DatasetSplit split_dataset(const std::vector<QueryPair>& pairs, double f_train, double f_valid,
                           double f_test, uint64_t seed) {
  auto in_range = [](double f) { return f >= 0.0 && f <= 1.0; };
  if (!in_range(f_train) || !in_range(f_valid) || !in_range(f_test))
    throw ConfigError("split fractions must be in [0,1]");
  if (std::abs(f_train + f_valid + f_test - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");

  std::vector<size_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x5911fULL));
  rng.shuffle(order);

  size_t n = pairs.size();
  size_t n_valid = static_cast<size_t>(static_cast<double>(n) * f_valid);
  size_t n_test = static_cast<size_t>(static_cast<double>(n) * f_test);
  size_t n_train = n - n_valid - n_test;

  DatasetSplit split;
  split.train.reserve(n_train);
  split.valid.reserve(n_valid);
  split.test.reserve(n_test);
  for (size_t i = 0; i < n; ++i) {
    const QueryPair& p = pairs[order[i]];
    if (i < n_train)
      split.train.push_back(p);
    else if (i < n_train + n_valid)
      split.valid.push_back(p);
    else
      split.test.push_back(p);
  }
  return split;
}

void write_log(const std::string& path, const std::vector<QueryEvent>& events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write log file: " + path);
  out << "# user\ttimestamp\tquery\tengagement\n";
  for (const auto& e : events)
    out << e.user << "\t" << e.timestamp << "\t" << e.query << "\t" << e.engagement << "\n";
  if (!out) throw DataError("failed writing log file: " + path);
}

namespace {
std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  for (;;) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

int64_t parse_i64(const std::string& s, const std::string& what, int line_no) {
  try {
    size_t pos = 0;
    int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) + ": malformed " + what + " '" + s + "'");
  }
}
}  // namespace

std::vector<QueryEvent> read_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read log file: " + path);
  std::vector<QueryEvent> events;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_tabs(line);
    if (fields.size() != 4)
      throw DataError("line " + std::to_string(line_no) + ": expected 4 tab-separated fields, got " +
                      std::to_string(fields.size()));
    QueryEvent e;
    e.user = fields[0];
    e.timestamp = parse_i64(fields[1], "timestamp", line_no);
    e.query = fields[2];
    if (tokenize(e.query).empty())
      throw DataError("line " + std::to_string(line_no) + ": empty query text");
    int64_t flag = parse_i64(fields[3], "engagement flag", line_no);
    if (flag != 0 && flag != 1)
      throw DataError("line " + std::to_string(line_no) + ": engagement flag must be 0 or 1");
    e.engagement = static_cast<int>(flag);
    events.push_back(std::move(e));
  }
  return events;
}

void write_pairs(const std::string& path, const std::vector<QueryPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write pairs file: " + path);
  for (const auto& p : pairs) out << p.q_src << "\t" << p.q_next << "\t" << p.u_plus << "\n";
  if (!out) throw DataError("failed writing pairs file: " + path);
}

std::vector<QueryPair> read_pairs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read pairs file: " + path);
  std::vector<QueryPair> pairs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3)
      throw DataError("line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    QueryPair p;
    p.q_src = fields[0];
    p.q_next = fields[1];
    int64_t u = parse_i64(fields[2], "u_plus", line_no);
    if (u != 0 && u != 1)
      throw DataError("line " + std::to_string(line_no) + ": u_plus must be 0 or 1");
    p.u_plus = static_cast<int>(u);
    if (tokenize(p.q_src).empty() || tokenize(p.q_next).empty())
      throw DataError("line " + std::to_string(line_no) + ": empty query in pair");
    pairs.push_back(std::move(p));
  }
  return pairs;
}

namespace {
std::string pair_key(const std::string& src, const std::string& next) {
  return src + "\t" + next;
}
}  // namespace

FeedbackIndex FeedbackIndex::from_pairs(const std::vector<QueryPair>& pairs,
                                        const Vocabulary& vocab, int t_max) {
  FeedbackIndex idx;
  for (const auto& p : pairs) {
    if (p.u_plus == 0) continue;
    std::string src = vocab.normalize(p.q_src, t_max);
    std::string next = vocab.normalize(p.q_next, t_max);
    idx.engaged_pairs_.insert(pair_key(src, next));
    // u_plus=1 means a positive action follows q_next, hence both queries of
    // the pair live in a session with a downstream positive action.
    idx.engaged_queries_.insert(src);
    idx.engaged_queries_.insert(next);
  }
  return idx;
}

FeedbackIndex FeedbackIndex::from_sessions(const std::vector<SearchSession>& sessions,
                                           const Vocabulary& vocab, int t_max) {
  FeedbackIndex idx;
  for (const auto& s : sessions) {
    for (size_t i = 0; i + 1 < s.events.size(); ++i) {
      if (label_feedback(s, i + 1) != 0) {
        idx.engaged_pairs_.insert(pair_key(vocab.normalize(s.events[i].query, t_max),
                                           vocab.normalize(s.events[i + 1].query, t_max)));
      }
    }
    // A query is "engaged" when some event at or after its position carries
    // positive engagement.
    bool downstream = false;
    for (size_t i = s.events.size(); i-- > 0;) {
      if (s.events[i].engagement != 0) downstream = true;
      if (downstream) idx.engaged_queries_.insert(vocab.normalize(s.events[i].query, t_max));
    }
  }
  return idx;
}

int FeedbackIndex::u_plus(const std::string& normalized_src,
                          const std::string& normalized_candidate) const {
  return engaged_pairs_.count(pair_key(normalized_src, normalized_candidate)) ? 1 : 0;
}

bool FeedbackIndex::query_engaged(const std::string& normalized_query) const {
  return engaged_queries_.count(normalized_query) != 0;
}

}  // namespace qsuggest
