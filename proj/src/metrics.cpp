#include "qsuggest/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace qsuggest {

int sessions_plus_at6(const std::vector<std::string>& suggestions, const FeedbackIndex& index) {
  for (const auto& s : suggestions)
    if (index.query_engaged(s)) return 1;
  return 0;
}

namespace {
bool contains_unk(const std::string& suggestion) {
  for (const auto& tok : tokenize(suggestion))
    if (tok == "<unk>") return true;
  return false;
}
}  // namespace

int unique_at6(const std::vector<std::string>& suggestions) {
  std::unordered_set<std::string> distinct;
  for (const auto& s : suggestions) {
    if (contains_unk(s)) continue;
    distinct.insert(s);
  }
  return static_cast<int>(distinct.size());
}

int precision_at6(const std::vector<std::string>& suggestions, const std::string& q_next) {
  for (const auto& s : suggestions)
    if (s == q_next) return 1;
  return 0;
}

double repetitions_s(const std::string& suggestion) {
  auto toks = tokenize(suggestion);
  if (toks.empty()) throw DataError("repetitions_s of empty suggestion");
  std::unordered_set<std::string> distinct(toks.begin(), toks.end());
  return static_cast<double>(toks.size() - distinct.size()) / static_cast<double>(toks.size());
}

double prior_sentence_prob(const std::string& suggestion, const Vocabulary& vocab) {
  auto toks = tokenize(suggestion);
  if (toks.empty()) throw DataError("prior_sentence_prob of empty suggestion");
  double sum = 0;
  for (const auto& tok : toks) {
    int id = vocab.id_of(tok);
    double p = vocab.prior(id);
    if (p <= 0)
      throw DataError("token with zero prior probability: " + tok);
    sum += std::log(p);
  }
  return sum;
}

namespace {

// Regularized incomplete beta via Lentz continued fraction.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double betai(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double lbeta = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  double front = std::exp(lbeta + a * std::log(x) + b * std::log(1.0 - x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double t_cdf(double t, double nu) {
  double x = nu / (nu + t * t);
  double tail = 0.5 * betai(nu / 2.0, 0.5, x);
  return t >= 0 ? 1.0 - tail : tail;
}

}  // namespace

double student_t_975(int df) {
  if (df < 1) throw DataError("t quantile requires df >= 1");
  double nu = static_cast<double>(df);
  double lo = 0.0, hi = 700.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (t_cdf(mid, nu) < 0.975)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

MeanCi mean_with_ci(const std::vector<double>& values) {
  if (values.size() < 2) throw DataError("mean_with_ci requires at least 2 values");
  MeanCi r;
  r.n = values.size();
  double sum = 0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(r.n);
  double sq = 0;
  for (double v : values) sq += (v - r.mean) * (v - r.mean);
  double var = sq / static_cast<double>(r.n - 1);
  double t = student_t_975(static_cast<int>(r.n) - 1);
  r.ci = t * std::sqrt(var / static_cast<double>(r.n));
  return r;
}

const MetricRow* MetricsReport::find(const std::string& name) const {
  for (const auto& row : rows)
    if (row.name == name) return &row;
  return nullptr;
}

MetricsReport build_report(const std::vector<SuggestionSet>& sets, const FeedbackIndex& index,
                           const Vocabulary& vocab) {
  if (sets.empty()) throw DataError("cannot build a report from zero suggestion sets");
  std::vector<double> sessions, unique, precision, reps, priors;
  for (const auto& set : sets) {
    sessions.push_back(sessions_plus_at6(set.suggestions, index));
    unique.push_back(unique_at6(set.suggestions));
    precision.push_back(precision_at6(set.suggestions, set.q_next));
    for (const auto& s : set.suggestions) {
      reps.push_back(repetitions_s(s));
      priors.push_back(prior_sentence_prob(s, vocab));
    }
  }
  MetricsReport report;
  auto add = [&report](const std::string& name, const std::vector<double>& vals) {
    MeanCi m = mean_with_ci(vals);
    report.rows.push_back({name, m.mean, m.ci, m.n});
  };
  add("sessions_plus_at6", sessions);
  add("unique_at6", unique);
  add("precision_at6", precision);
  add("repetitions_s", reps);
  add("prior_sentence_prob", priors);
  return report;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void write_report(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report file: " + path);
  for (const auto& row : report.rows)
    out << row.name << "\t" << format_double(row.mean) << "\t" << format_double(row.ci) << "\t"
        << row.n << "\n";
  if (!out) throw DataError("failed writing report file: " + path);
}

MetricsReport read_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read report file: " + path);
  MetricsReport report;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    MetricRow row;
    char name[128];
    double mean = 0, ci = 0;
    long long n = 0;
    if (std::sscanf(line.c_str(), "%127[^\t]\t%lf\t%lf\t%lld", name, &mean, &ci, &n) != 4)
      throw DataError("report line " + std::to_string(line_no) + ": malformed row");
    row.name = name;
    row.mean = mean;
    row.ci = ci;
    row.n = static_cast<size_t>(n);
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_comparison(const std::string& path, const MetricsReport& base,
                      const MetricsReport& other) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write comparison file: " + path);
  for (const auto& row : base.rows) {
    const MetricRow* o = other.find(row.name);
    if (o == nullptr) continue;
    double delta;
    if (row.mean != 0)
      delta = (o->mean - row.mean) / std::fabs(row.mean);
    else
      delta = o->mean == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    out << row.name << "\t" << format_double(row.mean) << "\t" << format_double(o->mean) << "\t"
        << format_double(delta) << "\n";
  }
  if (!out) throw DataError("failed writing comparison file: " + path);
}

void write_suggestions(const std::string& path, const std::vector<SuggestionSet>& sets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write suggestions file: " + path);
  for (const auto& set : sets) {
    out << set.q_src;
    for (const auto& s : set.suggestions) out << "\t" << s;
    out << "\n";
  }
  if (!out) throw DataError("failed writing suggestions file: " + path);
}

std::vector<SuggestionSet> read_suggestions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read suggestions file: " + path);
  std::vector<SuggestionSet> sets;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    SuggestionSet set;
    size_t start = 0;
    bool first = true;
    for (;;) {
      size_t tab = line.find('\t', start);
      std::string field =
          tab == std::string::npos ? line.substr(start) : line.substr(start, tab - start);
      if (first) {
        set.q_src = field;
        first = false;
      } else {
        set.suggestions.push_back(field);
      }
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

}  // namespace qsuggest
