#include "qsuggest/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"

namespace qsuggest {

namespace {

int64_t to_i64(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    int64_t v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("junk");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + value + "'");
  }
}

double to_f64(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("junk");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
  }
}

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::map<std::string, Field> build_schema() {
  std::map<std::string, Field> s;
  auto add_i = [&s](const std::string& key, auto member) {
    s[key] = Field{
        [member](RunConfig& c, const std::string& k, const std::string& v) {
          c.*member = static_cast<std::remove_reference_t<decltype(c.*member)>>(to_i64(k, v));
        },
        [member](const RunConfig& c) { return std::to_string(c.*member); }};
  };
  auto add_f = [&s](const std::string& key, auto member) {
    s[key] = Field{[member](RunConfig& c, const std::string& k, const std::string& v) {
                     c.*member = to_f64(k, v);
                   },
                   [member](const RunConfig& c) { return fmt_num(c.*member); }};
  };
  add_i("seed", &RunConfig::seed);
  add_i("window_seconds", &RunConfig::window_seconds);
  add_i("t_max", &RunConfig::t_max);
  add_i("vocab_cap", &RunConfig::vocab_cap);
  add_f("split_train", &RunConfig::split_train);
  add_f("split_valid", &RunConfig::split_valid);
  add_f("split_test", &RunConfig::split_test);
  add_i("synth_users", &RunConfig::synth_users);
  add_i("synth_sessions_per_user", &RunConfig::synth_sessions_per_user);
  add_i("synth_events_min", &RunConfig::synth_events_min);
  add_i("synth_events_max", &RunConfig::synth_events_max);
  add_i("synth_topics", &RunConfig::synth_topics);
  add_i("synth_modifiers", &RunConfig::synth_modifiers);
  add_i("synth_rare_words", &RunConfig::synth_rare_words);
  add_i("synth_modifier_groups", &RunConfig::synth_modifier_groups);
  add_f("synth_p_in_group", &RunConfig::synth_p_in_group);
  add_f("synth_p_related", &RunConfig::synth_p_related);
  add_f("synth_p_rare", &RunConfig::synth_p_rare);
  add_f("synth_p_word_dup", &RunConfig::synth_p_word_dup);
  add_f("synth_engagement_base", &RunConfig::synth_engagement_base);
  add_f("synth_engagement_boost", &RunConfig::synth_engagement_boost);
  add_i("hidden", &RunConfig::hidden);
  add_i("embedding", &RunConfig::embedding);
  add_i("layers", &RunConfig::layers);
  add_f("dropout", &RunConfig::dropout);
  add_i("pretrain_epochs", &RunConfig::pretrain_epochs);
  add_i("pretrain_batch", &RunConfig::pretrain_batch);
  add_f("pretrain_lr", &RunConfig::pretrain_lr);
  add_i("estimator_epochs", &RunConfig::estimator_epochs);
  add_i("estimator_batch", &RunConfig::estimator_batch);
  add_f("estimator_lr", &RunConfig::estimator_lr);
  add_f("estimator_dropout", &RunConfig::estimator_dropout);
  add_i("estimator_max_pairs", &RunConfig::estimator_max_pairs);
  s["strategy"] = Field{[](RunConfig& c, const std::string& k, const std::string& v) {
                          if (v != "beam" && v != "categorical")
                            throw ConfigError("config key '" + k +
                                              "': must be beam or categorical");
                          c.strategy = v;
                        },
                        [](const RunConfig& c) { return c.strategy; }};
  add_i("k_samples", &RunConfig::k_samples);
  add_f("eta", &RunConfig::eta);
  add_f("alpha", &RunConfig::alpha);
  add_i("rl_batch", &RunConfig::rl_batch);
  add_i("sync_steps", &RunConfig::sync_steps);
  add_i("rl_epochs", &RunConfig::rl_epochs);
  add_i("rl_steps_cap", &RunConfig::rl_steps_cap);
  add_f("rl_clip_norm", &RunConfig::rl_clip_norm);
  add_f("temperature", &RunConfig::temperature);
  add_i("rl_eval_every", &RunConfig::rl_eval_every);
  add_i("rl_valid_cap", &RunConfig::rl_valid_cap);
  add_f("rl_dropout", &RunConfig::rl_dropout);
  add_i("suggestions", &RunConfig::suggestions);
  s["range_check"] = Field{[](RunConfig& c, const std::string& k, const std::string& v) {
                             c.range_check = to_i64(k, v) != 0;
                           },
                           [](const RunConfig& c) { return c.range_check ? "1" : "0"; }};
  return s;
}

const std::map<std::string, Field>& schema() {
  static const std::map<std::string, Field> s = build_schema();
  return s;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = schema().find(key);
  if (it == schema().end()) throw ConfigError("unknown config key: '" + key + "'");
  it->second.set(*this, key, value);
}

std::string RunConfig::get(const std::string& key) const {
  auto it = schema().find(key);
  if (it == schema().end()) throw ConfigError("unknown config key: '" + key + "'");
  return it->second.get(*this);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [key, _] : schema()) out.push_back(key);
    return out;
  }();
  return k;
}

void RunConfig::validate() const {
  if (t_max < 1) throw ConfigError("t_max must be >= 1");
  if (vocab_cap < 1) throw ConfigError("vocab_cap must be >= 1");
  if (hidden < 1 || layers < 1) throw ConfigError("hidden and layers must be >= 1");
  if (dropout < 0 || dropout >= 1 || rl_dropout < 0 || rl_dropout >= 1 ||
      estimator_dropout < 0 || estimator_dropout >= 1)
    throw ConfigError("dropout rates must be in [0,1)");
  if (resolved_k() < 1) throw ConfigError("k_samples must be >= 1");
  if (resolved_eta() < 0) throw ConfigError("eta must be >= 0");
  if (resolved_alpha() <= 0) throw ConfigError("alpha must be > 0");
  if (temperature <= 0) throw ConfigError("temperature must be > 0");
  if (rl_batch < 1 || pretrain_batch < 1 || estimator_batch < 1)
    throw ConfigError("batch sizes must be >= 1");
  if (suggestions < 1) throw ConfigError("suggestions must be >= 1");

  if (!range_check) return;
  // Published tuning ranges.
  auto in_set_i = [](int v, std::initializer_list<int> set) {
    return std::find(set.begin(), set.end(), v) != set.end();
  };
  if (!in_set_i(pretrain_batch, {64, 128, 256, 512}))
    throw ConfigError("range check: pretrain_batch must be one of 64/128/256/512");
  if (t_max < 4 || t_max > 8) throw ConfigError("range check: t_max must be in [4,8]");
  if (dropout > 0.4) throw ConfigError("range check: dropout must be in [0,0.4]");
  if (estimator_dropout > 0.4)
    throw ConfigError("range check: estimator_dropout must be in [0,0.4]");
  if (!in_set_i(layers, {1, 2, 3})) throw ConfigError("range check: layers must be 1, 2 or 3");
  if (!in_set_i(hidden, {128, 256})) throw ConfigError("range check: hidden must be 128 or 256");
  auto near = [](double a, double b) { return std::fabs(a - b) <= 1e-12; };
  double a = resolved_alpha();
  bool alpha_ok = false;
  for (double v : {1e-4, 1e-6, 1e-5, 2e-5, 3e-5, 4e-5, 5e-5}) alpha_ok = alpha_ok || near(a, v);
  if (!alpha_ok) throw ConfigError("range check: alpha outside the tuned set");
  int k = resolved_k();
  if (k < 1 || k > 5) throw ConfigError("range check: k_samples must be in [1,5]");
  double e = resolved_eta();
  bool eta_ok = false;
  for (double v : {1.0, 0.1, 0.01, 0.001}) eta_ok = eta_ok || near(e, v);
  if (!eta_ok) throw ConfigError("range check: eta outside the tuned set");
}

std::string RunConfig::serialize() const {
  std::ostringstream out;
  for (const auto& key : keys()) out << key << "=" << get(key) << "\n";
  return out.str();
}

uint64_t RunConfig::hash() const {
  std::string s = serialize();
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    // trim
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
    while (!line.empty() && is_space(line.front())) line.erase(line.begin());
    while (!line.empty() && is_space(line.back())) line.pop_back();
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config file line " + std::to_string(line_no) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && is_space(key.back())) key.pop_back();
    while (!value.empty() && is_space(value.front())) value.erase(value.begin());
    base.set(key, value);
  }
  return base;
}

uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot hash missing file: " + path);
  uint64_t h = 1469598103934665603ULL;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  return h;
}

void write_run_manifest(const std::string& outdir, const RunConfig& config,
                        const std::vector<std::string>& input_files) {
  std::filesystem::create_directories(outdir);
  {
    std::ofstream out(outdir + "/config.resolved", std::ios::binary);
    if (!out) throw DataError("cannot write resolved config in " + outdir);
    out << config.serialize();
  }
  nlohmann::json j;
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(config.hash()));
  j["config_hash"] = hex;
  j["format_version"] = 1;
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& f : input_files) {
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(file_hash(f)));
    inputs[f] = hex;
  }
  j["inputs"] = inputs;
  std::ofstream out(outdir + "/manifest.json", std::ios::binary);
  if (!out) throw DataError("cannot write manifest in " + outdir);
  out << j.dump(2) << "\n";
}

}  // namespace qsuggest
