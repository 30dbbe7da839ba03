#include "qsuggest/synth.hpp"

#include <cmath>
#include <cstdio>

namespace qsuggest {

void SynthConfig::validate() const {
  if (users < 0 || sessions_per_user < 0) throw ConfigError("synth: negative users/sessions");
  if (events_min < 1 || events_max < events_min) throw ConfigError("synth: bad events range");
  if (topics < 1 || modifiers < 2 || rare_words < 0) throw ConfigError("synth: bad vocab sizes");
  if (modifier_groups < 1 || modifier_groups > modifiers)
    throw ConfigError("synth: modifier_groups must be in [1, modifiers]");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(p_related) || !prob(p_rare) || !prob(p_keep_modifier) || !prob(engagement_base) ||
      !prob(engagement_boost) || !prob(engagement_base + engagement_boost) || !prob(p_word_dup) ||
      !prob(p_in_group))
    throw ConfigError("synth: probabilities must be in [0,1]");
  if (session_gap_seconds <= 300) throw ConfigError("synth: session gap must exceed the window");
}

namespace {

std::string word(const char* prefix, int n) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%04d", prefix, n);
  return buf;
}

struct QueryDraft {
  int topic;
  std::vector<int> mods;
  int rare = -1;     // -1 = none
  int dup_slot = -1; // token index typed twice, -1 = clean

  std::string render() const {
    std::vector<std::string> toks;
    toks.push_back(word("t", topic));
    for (int m : mods) toks.push_back(word("m", m));
    if (rare >= 0) toks.push_back(word("r", rare));
    if (dup_slot >= 0 && dup_slot < static_cast<int>(toks.size()))
      toks.insert(toks.begin() + dup_slot, toks[static_cast<size_t>(dup_slot)]);
    std::string s = toks[0];
    for (size_t i = 1; i < toks.size(); ++i) s += " " + toks[i];
    return s;
  }
};

}  // namespace

std::vector<QueryEvent> synthesize_logs(const SynthConfig& cfg, uint64_t seed) {
  cfg.validate();
  std::vector<QueryEvent> events;
  events.reserve(static_cast<size_t>(cfg.users) * cfg.sessions_per_user * 4);

  for (int u = 0; u < cfg.users; ++u) {
    Rng rng(derive_seed(seed, 0x115e5ULL, static_cast<uint64_t>(u)));
    std::string user = word("u", u);
    int64_t t = cfg.start_timestamp + static_cast<int64_t>(u) * 13;

    auto draw_mods = [&](int topic, std::vector<int>& out) {
      out.clear();
      double roll = rng.uniform();
      int n = roll < 0.25 ? 0 : (roll < 0.75 ? 1 : 2);
      int group = topic % cfg.modifier_groups;
      int per_group = cfg.modifiers / cfg.modifier_groups;
      while (static_cast<int>(out.size()) < n) {
        int m;
        if (per_group > 0 && rng.bernoulli(cfg.p_in_group)) {
          m = group + cfg.modifier_groups * rng.uniform_int(0, per_group - 1);
        } else {
          m = rng.uniform_int(0, cfg.modifiers - 1);
        }
        if (out.empty() || out[0] != m) out.push_back(m);
      }
    };

    auto draw_rare = [&]() -> int {
      if (!rng.bernoulli(cfg.p_rare) || cfg.rare_words == 0) return -1;
      double x = rng.uniform();
      // Cubing skews the draw toward low indices, leaving a long thin tail
      // that falls off the vocabulary cap.
      return std::min(cfg.rare_words - 1, static_cast<int>(x * x * x * cfg.rare_words));
    };

    for (int s = 0; s < cfg.sessions_per_user; ++s) {
      int n_events = rng.uniform_int(cfg.events_min, cfg.events_max);
      QueryDraft prev{};
      bool have_prev = false;
      for (int e = 0; e < n_events; ++e) {
        QueryDraft q;
        bool related = false;
        if (have_prev && rng.bernoulli(cfg.p_related)) {
          related = true;
          q.topic = prev.topic;
          draw_mods(q.topic, q.mods);
          if (!prev.mods.empty() && rng.bernoulli(cfg.p_keep_modifier)) {
            int keep = prev.mods[rng.index(prev.mods.size())];
            if (q.mods.empty())
              q.mods.push_back(keep);
            else
              q.mods[0] = keep;
          }
        } else {
          q.topic = rng.uniform_int(0, cfg.topics - 1);
          draw_mods(q.topic, q.mods);
        }
        q.rare = draw_rare();
        q.dup_slot = -1;
        if (q.topic % 2 == 0 && rng.bernoulli(cfg.p_word_dup)) {
          int len = 1 + static_cast<int>(q.mods.size()) + (q.rare >= 0 ? 1 : 0);
          q.dup_slot = rng.uniform_int(0, len - 1);
        }

        QueryEvent ev;
        ev.user = user;
        ev.timestamp = t;
        ev.query = q.render();
        double p_engage = cfg.engagement_base + (related ? cfg.engagement_boost : 0.0);
        ev.engagement = rng.bernoulli(p_engage) ? 1 : 0;
        events.push_back(std::move(ev));

        t += 5 + static_cast<int64_t>(rng.uniform_int(0, 280));
        prev = q;
        have_prev = true;
      }
      t += cfg.session_gap_seconds + rng.uniform_int(0, 600);
      have_prev = false;
    }
  }
  return events;
}

}  // namespace qsuggest
