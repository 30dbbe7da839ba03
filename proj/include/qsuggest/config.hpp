#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qsuggest/errors.hpp"

namespace qsuggest {

// All run tunables, shared across commands. Config files are flat key=value
// text; unknown keys are errors so hyper-parameter typos fail loudly.
// Strategy-dependent hyper-parameters (k_samples, eta, alpha) default to the
// tuned optima for the chosen sampling strategy when left unset.
struct RunConfig {
  uint64_t seed = 17;

  // corpus preparation
  int64_t window_seconds = 300;
  int t_max = 8;
  int vocab_cap = 2000;
  double split_train = 0.90;
  double split_valid = 0.05;
  double split_test = 0.05;

  // synthetic corpus
  int synth_users = 1700;
  int synth_sessions_per_user = 10;
  int synth_events_min = 2;
  int synth_events_max = 6;
  int synth_topics = 150;
  int synth_modifiers = 80;
  int synth_rare_words = 4000;
  int synth_modifier_groups = 4;
  double synth_p_in_group = 0.9;
  double synth_p_related = 0.8;
  double synth_p_rare = 0.08;
  double synth_p_word_dup = 0.03;
  double synth_engagement_base = 0.08;
  double synth_engagement_boost = 0.42;

  // model shape (shared by generator and estimator)
  int hidden = 256;
  int embedding = 0;  // 0 = same as hidden
  int layers = 2;
  double dropout = 0.2;

  // supervised pre-training
  int pretrain_epochs = 10;
  int pretrain_batch = 256;
  double pretrain_lr = 1e-3;

  // naturalness estimator
  int estimator_epochs = 5;
  int estimator_batch = 64;
  double estimator_lr = 1e-3;
  double estimator_dropout = 0.0;
  int estimator_max_pairs = 0;  // 0 = use all pairs

  // REINFORCE fine-tuning
  std::string strategy = "beam";
  int k_samples = 0;     // 0 = strategy default (beam 4, categorical 2)
  double eta = -1;       // <0 = strategy default (beam 1.0, categorical 0.01)
  double alpha = 0;      // 0 = strategy default (beam 3e-5, categorical 5e-5)
  int rl_batch = 32;
  int sync_steps = 0;    // 0 = once per epoch
  int rl_epochs = 3;
  int rl_steps_cap = 0;  // 0 = no cap
  double rl_clip_norm = 5.0;
  double temperature = 1.0;
  int rl_eval_every = 0;  // steps between validation evals; 0 = once per epoch
  int rl_valid_cap = 500;
  double rl_dropout = 0.0;

  // inference / evaluation
  int suggestions = 6;

  bool range_check = false;

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  // Applies Appendix-range validation when range_check is on; always applies
  // basic sanity checks.
  void validate() const;

  int embedding_dim() const { return embedding > 0 ? embedding : hidden; }
  int resolved_k() const { return k_samples > 0 ? k_samples : (strategy == "beam" ? 4 : 2); }
  double resolved_eta() const { return eta >= 0 ? eta : (strategy == "beam" ? 1.0 : 0.01); }
  double resolved_alpha() const {
    return alpha > 0 ? alpha : (strategy == "beam" ? 3e-5 : 5e-5);
  }

  std::string serialize() const;  // canonical key=value lines
  uint64_t hash() const;
};

// Loads key=value lines over the given defaults. '#' starts a comment.
RunConfig load_config_file(const std::string& path, RunConfig base = RunConfig());

// FNV-1a over file contents, for reproducibility manifests.
uint64_t file_hash(const std::string& path);

// Writes <outdir>/config.resolved and <outdir>/manifest.json recording the
// resolved config hash and input-file hashes.
void write_run_manifest(const std::string& outdir, const RunConfig& config,
                        const std::vector<std::string>& input_files);

}  // namespace qsuggest
