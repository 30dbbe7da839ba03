#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "qsuggest/corpus.hpp"
#include "qsuggest/synth.hpp"

using namespace qsuggest;

namespace {

QueryEvent ev(const std::string& user, int64_t ts, const std::string& q, int flag = 0) {
  return QueryEvent{user, ts, q, flag};
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("session segmentation") {
  // Gaps [100, 200, 400] with window 300 -> sessions of sizes 3 and 1.
  {
    std::vector<QueryEvent> events{ev("u", 1000, "a"), ev("u", 1100, "b"), ev("u", 1300, "c"),
                                   ev("u", 1700, "d")};
    auto sessions = segment_sessions(events, 300);
    REQUIRE(sessions.size() == 2);
    CHECK(sessions[0].events.size() == 3);
    CHECK(sessions[1].events.size() == 1);
  }
  // Single event -> single session of size 1.
  {
    auto sessions = segment_sessions({ev("u", 5, "a")}, 300);
    REQUIRE(sessions.size() == 1);
    CHECK(sessions[0].events.size() == 1);
  }
  // Empty input -> empty output.
  CHECK(segment_sessions({}, 300).empty());

  // Partition property: session sizes sum to the event count; unsorted input
  // is sorted per user first.
  {
    std::vector<QueryEvent> events;
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
      std::string user = "u" + std::to_string(rng.uniform_int(0, 4));
      events.push_back(ev(user, rng.uniform_int(0, 5000), "q" + std::to_string(i)));
    }
    auto sessions = segment_sessions(events, 120);
    size_t total = 0;
    for (const auto& s : sessions) {
      total += s.events.size();
      for (size_t i = 0; i + 1 < s.events.size(); ++i) {
        CHECK(s.events[i].timestamp <= s.events[i + 1].timestamp);
        CHECK(s.events[i + 1].timestamp - s.events[i].timestamp <= 120);
      }
    }
    CHECK(total == events.size());
  }
}

TEST_CASE("pair extraction") {
  SearchSession s;
  s.events = {ev("u", 0, "a"), ev("u", 10, "b"), ev("u", 20, "c")};
  auto pairs = extract_pairs(s);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].q_src == "a");
  CHECK(pairs[0].q_next == "b");
  CHECK(pairs[1].q_src == "b");
  CHECK(pairs[1].q_next == "c");

  SearchSession single;
  single.events = {ev("u", 0, "a")};
  CHECK(extract_pairs(single).empty());

  // Identical consecutive queries are kept (no dedup).
  SearchSession dup;
  dup.events = {ev("u", 0, "a"), ev("u", 5, "a")};
  auto dup_pairs = extract_pairs(dup);
  REQUIRE(dup_pairs.size() == 1);
  CHECK(dup_pairs[0].q_src == dup_pairs[0].q_next);
}

TEST_CASE("session feedback labels") {
  // Engagement on the last query -> every pair of the session labeled 1.
  {
    SearchSession s;
    s.events = {ev("u", 0, "a"), ev("u", 1, "b"), ev("u", 2, "c", 1)};
    auto pairs = extract_pairs(s);
    for (const auto& p : pairs) CHECK(p.u_plus == 1);
  }
  // No engagement anywhere -> all 0.
  {
    SearchSession s;
    s.events = {ev("u", 0, "a"), ev("u", 1, "b"), ev("u", 2, "c")};
    for (const auto& p : extract_pairs(s)) CHECK(p.u_plus == 0);
  }
  // Engagement only on q1 of [q1,q2,q3]: pair (q1,q2) checks events from q2
  // onward -> 0.
  {
    SearchSession s;
    s.events = {ev("u", 0, "q1", 1), ev("u", 1, "q2"), ev("u", 2, "q3")};
    auto pairs = extract_pairs(s);
    CHECK(pairs[0].u_plus == 0);
    CHECK(pairs[1].u_plus == 0);
    CHECK(label_feedback(s, QueryPair{"q1", "q2", 0}) == 0);
    CHECK_THROWS_AS(label_feedback(s, QueryPair{"q1", "q3", 0}), DataError);
  }
  // Monotonicity: flipping a later event to engaged never flips a label
  // from 1 to 0.
  {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      SearchSession s;
      int n = rng.uniform_int(2, 6);
      for (int i = 0; i < n; ++i)
        s.events.push_back(ev("u", i, "q" + std::to_string(i), rng.bernoulli(0.3) ? 1 : 0));
      auto before = extract_pairs(s);
      s.events[static_cast<size_t>(rng.uniform_int(0, n - 1))].engagement = 1;
      auto after = extract_pairs(s);
      for (size_t i = 0; i < before.size(); ++i)
        if (before[i].u_plus == 1) CHECK(after[i].u_plus == 1);
    }
  }
}

TEST_CASE("vocabulary build, priors, encode") {
  // Corpus "a a b": p_a = 2/3, p_b = 1/3.
  {
    Vocabulary v = Vocabulary::build({"a a b"}, 100);
    CHECK(v.real_token_count() == 2);
    CHECK(v.prior(v.id_of("a")) == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(v.prior(v.id_of("b")) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
  // max_size 1 on "a a b": vocab {a}; b maps to <UNK>.
  {
    Vocabulary v = Vocabulary::build({"a a b"}, 1);
    CHECK(v.real_token_count() == 1);
    CHECK(v.id_of("b") == Vocabulary::kUnk);
    CHECK(v.id_of("a") == Vocabulary::kNumReserved);
  }
  // Priors sum to 1 over real tokens.
  {
    Vocabulary v = Vocabulary::build({"x y z z y x x w", "w w q"}, 3);
    double sum = 0;
    for (int id = Vocabulary::kNumReserved; id < v.size(); ++id) sum += v.prior(id);
    CHECK(std::fabs(sum - 1.0) <= 1e-9);
  }
  // Frequency ties break lexicographically.
  {
    Vocabulary v = Vocabulary::build({"beta alpha"}, 1);
    CHECK(v.id_of("alpha") != Vocabulary::kUnk);
    CHECK(v.id_of("beta") == Vocabulary::kUnk);
  }
  CHECK_THROWS_AS(Vocabulary::build({}, 10), DataError);

  Vocabulary v = Vocabulary::build({"ai jobs market analyst"}, 100);
  // All-known 2-token query -> 2 ids + <END>.
  {
    auto ids = v.encode("ai jobs", 8);
    REQUIRE(ids.size() == 3);
    CHECK(ids[2] == Vocabulary::kEnd);
    CHECK(v.token_of(ids[0]) == "ai");
  }
  // Unknown token -> <UNK> id at its position.
  {
    auto ids = v.encode("ai blorp", 8);
    CHECK(ids[1] == Vocabulary::kUnk);
  }
  // 10-token query with t_max 8 -> first 8 kept.
  {
    auto ids = v.encode("a b c d e f g h i j", 8, /*append_end=*/false);
    CHECK(ids.size() == 8);
  }
  CHECK_THROWS_AS(v.encode("   ", 8), DataError);

  // encode then decode on in-vocab text is identity up to truncation.
  {
    auto ids = v.encode("market analyst ai", 8, /*append_end=*/false);
    CHECK(v.decode(ids) == "market analyst ai");
    CHECK(v.normalize("Market   ANALYST ai", 8) == "market analyst ai");
  }
}

TEST_CASE("vocabulary file round trip") {
  Vocabulary v = Vocabulary::build({"a a a b b c rare1 rare2"}, 3);
  std::string path = temp_path("qsuggest_vocab_test.tsv");
  v.save(path);
  Vocabulary loaded = Vocabulary::load(path);
  CHECK(loaded.real_token_count() == v.real_token_count());
  for (int id = 0; id < v.size(); ++id) {
    CHECK(loaded.token_of(id) == v.token_of(id));
    CHECK(loaded.prior(id) == doctest::Approx(v.prior(id)).epsilon(1e-15));
  }
  // <UNK> prior survives the round trip (dropped occurrences pooled).
  CHECK(loaded.prior(Vocabulary::kUnk) > 0);
  std::filesystem::remove(path);
}

TEST_CASE("dataset split") {
  std::vector<QueryPair> pairs;
  for (int i = 0; i < 100; ++i) pairs.push_back({"s" + std::to_string(i), "n", 0});

  auto split = split_dataset(pairs, 0.9, 0.05, 0.05, 7);
  CHECK(split.train.size() == 90);
  CHECK(split.valid.size() == 5);
  CHECK(split.test.size() == 5);

  // Same seed twice -> identical; different seed -> different permutation.
  auto again = split_dataset(pairs, 0.9, 0.05, 0.05, 7);
  bool same = true;
  for (size_t i = 0; i < split.train.size(); ++i)
    same = same && split.train[i].q_src == again.train[i].q_src;
  CHECK(same);
  auto other = split_dataset(pairs, 0.9, 0.05, 0.05, 8);
  bool identical = true;
  for (size_t i = 0; i < split.train.size(); ++i)
    identical = identical && split.train[i].q_src == other.train[i].q_src;
  CHECK_FALSE(identical);

  // Disjoint and union-preserving.
  std::set<std::string> seen;
  for (const auto& p : split.train) seen.insert(p.q_src);
  for (const auto& p : split.valid) seen.insert(p.q_src);
  for (const auto& p : split.test) seen.insert(p.q_src);
  CHECK(seen.size() == 100);

  CHECK_THROWS_AS(split_dataset(pairs, 0.9, 0.2, 0.05, 1), ConfigError);
  CHECK_THROWS_AS(split_dataset(pairs, -0.1, 0.55, 0.55, 1), ConfigError);
}

TEST_CASE("synthetic log generator") {
  SynthConfig cfg;
  cfg.users = 12;
  cfg.sessions_per_user = 4;

  // Determinism: same seed -> identical events.
  auto a = synthesize_logs(cfg, 5);
  auto b = synthesize_logs(cfg, 5);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].user == b[i].user);
    CHECK(a[i].timestamp == b[i].timestamp);
    CHECK(a[i].query == b[i].query);
    CHECK(a[i].engagement == b[i].engagement);
  }

  // Zero sessions -> empty log.
  SynthConfig zero = cfg;
  zero.sessions_per_user = 0;
  CHECK(synthesize_logs(zero, 5).empty());

  // Relatedness probability 1.0 -> every consecutive pair in a session
  // shares at least one token.
  SynthConfig related = cfg;
  related.p_related = 1.0;
  auto events = synthesize_logs(related, 9);
  auto sessions = segment_sessions(events, 300);
  CHECK(sessions.size() >= 12 * 4u);
  for (const auto& s : sessions) {
    for (size_t i = 0; i + 1 < s.events.size(); ++i) {
      auto t1 = tokenize(s.events[i].query);
      auto t2 = tokenize(s.events[i + 1].query);
      bool share = false;
      for (const auto& x : t1)
        for (const auto& y : t2) share = share || x == y;
      CHECK(share);
    }
  }

  // Sessions never straddle the window; pair totals match sum(N_s - 1).
  auto all = synthesize_logs(cfg, 21);
  auto segs = segment_sessions(all, 300);
  size_t pair_total = 0;
  for (const auto& s : segs) pair_total += s.events.size() - 1;
  size_t direct = 0;
  for (const auto& s : segs) direct += extract_pairs(s).size();
  CHECK(direct == pair_total);
}

TEST_CASE("log and pairs file round trips") {
  SynthConfig cfg;
  cfg.users = 5;
  cfg.sessions_per_user = 3;
  auto events = synthesize_logs(cfg, 3);

  std::string log_path = temp_path("qsuggest_log_test.tsv");
  write_log(log_path, events);
  // Byte-identical on rewrite (same seed -> same file).
  std::string first = slurp(log_path);
  write_log(log_path, synthesize_logs(cfg, 3));
  CHECK(slurp(log_path) == first);

  auto loaded = read_log(log_path);
  REQUIRE(loaded.size() == events.size());
  for (size_t i = 0; i < events.size(); ++i) {
    CHECK(loaded[i].user == events[i].user);
    CHECK(loaded[i].timestamp == events[i].timestamp);
    CHECK(loaded[i].query == events[i].query);
    CHECK(loaded[i].engagement == events[i].engagement);
  }

  // Header-only file (zero events) reads back empty.
  write_log(log_path, {});
  CHECK(read_log(log_path).empty());

  // Malformed lines carry their line number.
  {
    std::ofstream out(log_path, std::ios::binary);
    out << "# header\nu1\t100\tquery text\t0\nu1\tnot_a_number\tq\t0\n";
  }
  try {
    read_log(log_path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  auto sessions = segment_sessions(events, 300);
  std::vector<QueryPair> pairs;
  for (const auto& s : sessions)
    for (auto& p : extract_pairs(s)) pairs.push_back(p);
  std::string pairs_path = temp_path("qsuggest_pairs_test.tsv");
  write_pairs(pairs_path, pairs);
  auto loaded_pairs = read_pairs(pairs_path);
  REQUIRE(loaded_pairs.size() == pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    CHECK(loaded_pairs[i].q_src == pairs[i].q_src);
    CHECK(loaded_pairs[i].q_next == pairs[i].q_next);
    CHECK(loaded_pairs[i].u_plus == pairs[i].u_plus);
  }
  std::filesystem::remove(log_path);
  std::filesystem::remove(pairs_path);
}

TEST_CASE("feedback index") {
  Vocabulary v = Vocabulary::build({"a b c d e f"}, 100);
  std::vector<QueryPair> pairs{{"a b", "c", 1}, {"c", "d e", 0}};
  auto idx = FeedbackIndex::from_pairs(pairs, v, 8);
  CHECK(idx.u_plus("a b", "c") == 1);
  CHECK(idx.u_plus("c", "d e") == 0);
  CHECK(idx.u_plus("a b", "d e") == 0);
  CHECK(idx.query_engaged("a b"));
  CHECK(idx.query_engaged("c"));
  CHECK_FALSE(idx.query_engaged("d e"));

  // Session-built index honors the at-or-after rule.
  SearchSession s;
  s.events = {ev("u", 0, "a b"), ev("u", 1, "c", 1), ev("u", 2, "d e")};
  auto sidx = FeedbackIndex::from_sessions({s}, v, 8);
  CHECK(sidx.query_engaged("a b"));
  CHECK(sidx.query_engaged("c"));
  CHECK_FALSE(sidx.query_engaged("d e"));
  CHECK(sidx.u_plus("a b", "c") == 1);
  CHECK(sidx.u_plus("c", "d e") == 0);
}
