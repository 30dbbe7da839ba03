// Command-line surface for the query-suggestion pipeline:
//   synth -> prepare -> pretrain -> train-estimator -> finetune -> evaluate
//   -> suggest
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qsuggest/config.hpp"
#include "qsuggest/corpus.hpp"
#include "qsuggest/estimator.hpp"
#include "qsuggest/generator.hpp"
#include "qsuggest/metrics.hpp"
#include "qsuggest/model_io.hpp"
#include "qsuggest/pretrain.hpp"
#include "qsuggest/reinforce.hpp"
#include "qsuggest/reward.hpp"
#include "qsuggest/synth.hpp"

namespace {

using namespace qsuggest;
using Real = float;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CliPaths {
  std::string config_file;
  std::string out;
  std::string log;
  std::string train;
  std::string valid;
  std::string test;
  std::string vocab;
  std::string generator;
  std::string estimator;
  std::string checkpoint;
  std::string input;
  std::string compare_to;
  std::string dump_examples;
  bool resume = false;
};

RunConfig resolve_config(const CliPaths& paths,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  if (!paths.config_file.empty()) cfg = load_config_file(paths.config_file, cfg);
  for (const auto& [key, value] : overrides) cfg.set(key, value);
  cfg.validate();
  return cfg;
}

SynthConfig synth_config(const RunConfig& cfg) {
  SynthConfig s;
  s.users = cfg.synth_users;
  s.sessions_per_user = cfg.synth_sessions_per_user;
  s.events_min = cfg.synth_events_min;
  s.events_max = cfg.synth_events_max;
  s.topics = cfg.synth_topics;
  s.modifiers = cfg.synth_modifiers;
  s.rare_words = cfg.synth_rare_words;
  s.modifier_groups = cfg.synth_modifier_groups;
  s.p_in_group = cfg.synth_p_in_group;
  s.p_related = cfg.synth_p_related;
  s.p_rare = cfg.synth_p_rare;
  s.p_word_dup = cfg.synth_p_word_dup;
  s.engagement_base = cfg.synth_engagement_base;
  s.engagement_boost = cfg.synth_engagement_boost;
  return s;
}

std::vector<std::string> pair_texts(const std::vector<QueryPair>& pairs) {
  std::vector<std::string> texts;
  texts.reserve(pairs.size());
  for (const auto& p : pairs) texts.push_back(p.q_src + " " + p.q_next);
  return texts;
}

ModelDims model_dims(const RunConfig& cfg, const Vocabulary& vocab) {
  return ModelDims{vocab.size(), cfg.embedding_dim(), cfg.hidden, cfg.layers, cfg.t_max};
}

// Beam suggestions as normalized strings, exactly n of them, skipping any
// empty-content hypothesis. Widens the beam if merging left too few.
std::vector<std::string> top_suggestions(const GeneratorPolicy<Real>& policy,
                                         const Vocabulary& vocab, const std::vector<int>& src,
                                         int n, int t_max) {
  for (int width = n; width <= 8 * n; width *= 2) {
    auto hyps = policy.beam_search(src, width, t_max);
    std::vector<std::string> out;
    for (const auto& h : hyps) {
      auto content = h.content();
      if (content.empty()) continue;
      out.push_back(vocab.decode(content));
      if (static_cast<int>(out.size()) == n) return out;
    }
    if (static_cast<int>(hyps.size()) < width) break;  // beam exhausted the space
  }
  throw DataError("decoder could not produce " + std::to_string(n) + " distinct suggestions");
}

int cmd_synth(const CliPaths& paths, const RunConfig& cfg) {
  std::filesystem::create_directories(paths.out);
  auto events = synthesize_logs(synth_config(cfg), cfg.seed);
  std::string log_path = paths.out + "/log.tsv";
  write_log(log_path, events);
  write_run_manifest(paths.out, cfg, {});
  std::cout << "synth: wrote " << events.size() << " events to " << log_path << "\n";
  return kExitOk;
}

int cmd_prepare(const CliPaths& paths, const RunConfig& cfg) {
  std::filesystem::create_directories(paths.out);
  auto events = read_log(paths.log);
  auto sessions = segment_sessions(events, cfg.window_seconds);
  std::vector<QueryPair> pairs;
  for (const auto& s : sessions)
    for (auto& p : extract_pairs(s)) pairs.push_back(std::move(p));
  if (pairs.empty()) throw DataError("log produced no query pairs");

  auto split = split_dataset(pairs, cfg.split_train, cfg.split_valid, cfg.split_test, cfg.seed);
  Vocabulary vocab = Vocabulary::build(pair_texts(split.train), cfg.vocab_cap);

  write_pairs(paths.out + "/pairs.train.tsv", split.train);
  write_pairs(paths.out + "/pairs.valid.tsv", split.valid);
  write_pairs(paths.out + "/pairs.test.tsv", split.test);
  vocab.save(paths.out + "/vocab.tsv");
  write_run_manifest(paths.out, cfg, {paths.log});
  std::cout << "prepare: " << sessions.size() << " sessions, " << pairs.size() << " pairs ("
            << split.train.size() << "/" << split.valid.size() << "/" << split.test.size()
            << " train/valid/test), vocab " << vocab.real_token_count() << " tokens\n";
  return kExitOk;
}

int cmd_pretrain(const CliPaths& paths, const RunConfig& cfg) {
  std::filesystem::create_directories(paths.out);
  Vocabulary vocab = Vocabulary::load(paths.vocab);
  auto train = encode_pairs(read_pairs(paths.train), vocab, cfg.t_max);
  auto valid = encode_pairs(read_pairs(paths.valid), vocab, cfg.t_max);

  PretrainState<Real> state{AdamOptimizer<Real>(static_cast<Real>(cfg.pretrain_lr)), 0, 0};
  GeneratorPolicy<Real> policy(model_dims(cfg, vocab), cfg.seed);
  std::string last_path = paths.out + "/generator.last.ckpt";
  if (paths.resume && std::filesystem::exists(last_path)) {
    policy = load_generator<Real>(last_path, &state);
    std::cout << "pretrain: resuming from epoch " << state.next_epoch << "\n";
  }

  PretrainConfig<Real> pcfg;
  pcfg.epochs = cfg.pretrain_epochs;
  pcfg.batch = cfg.pretrain_batch;
  pcfg.lr = static_cast<Real>(cfg.pretrain_lr);
  pcfg.dropout = static_cast<Real>(cfg.dropout);
  pcfg.seed = cfg.seed;

  auto result = pretrain_supervised(policy, train, valid, pcfg, &state, /*restore_best=*/false);
  // The raw final state carries the optimizer snapshot for resumption; the
  // published checkpoint is the best-validation-loss epoch.
  save_generator(policy, last_path, &state);
  if (!result.best_weights.empty()) {
    auto params = policy.params();
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = result.best_weights[i];
  }
  save_generator(policy, paths.out + "/generator.ckpt");
  std::ofstream stats(paths.out + "/pretrain_stats.tsv", std::ios::binary);
  for (const auto& h : result.history)
    stats << h.epoch << "\t" << format_double(h.train_loss) << "\t"
          << format_double(h.valid_loss) << "\n";

  write_run_manifest(paths.out, cfg, {paths.train, paths.valid, paths.vocab});
  std::cout << "pretrain: best epoch " << result.best_epoch << " valid loss "
            << format_double(result.best_valid_loss) << "\n";
  return kExitOk;
}

int cmd_train_estimator(const CliPaths& paths, const RunConfig& cfg) {
  std::filesystem::create_directories(paths.out);
  Vocabulary vocab = Vocabulary::load(paths.vocab);
  auto generator = load_generator<Real>(paths.generator);
  auto train_pairs = encode_pairs(read_pairs(paths.train), vocab, cfg.t_max);
  auto valid_pairs = encode_pairs(read_pairs(paths.valid), vocab, cfg.t_max);

  auto cap = [&cfg](std::vector<EncodedPair>& pairs, uint64_t tag) {
    if (cfg.estimator_max_pairs > 0 &&
        pairs.size() > static_cast<size_t>(cfg.estimator_max_pairs)) {
      Rng rng(derive_seed(cfg.seed, tag));
      rng.shuffle(pairs);
      pairs.resize(static_cast<size_t>(cfg.estimator_max_pairs));
    }
  };
  cap(train_pairs, 0xca11);
  cap(valid_pairs, 0xca12);

  auto train_examples =
      build_estimator_examples(train_pairs, generator, vocab, cfg.t_max, derive_seed(cfg.seed, 1));
  auto valid_examples =
      build_estimator_examples(valid_pairs, generator, vocab, cfg.t_max, derive_seed(cfg.seed, 2));
  if (!paths.dump_examples.empty()) write_examples(paths.dump_examples, train_examples, vocab);

  EstimatorModel<Real> model(vocab.size(), cfg.embedding_dim(), cfg.hidden, cfg.seed);
  EstimatorTrainConfig<Real> ecfg;
  ecfg.epochs = cfg.estimator_epochs;
  ecfg.batch = cfg.estimator_batch;
  ecfg.lr = static_cast<Real>(cfg.estimator_lr);
  ecfg.dropout = static_cast<Real>(cfg.estimator_dropout);
  ecfg.seed = cfg.seed;
  auto result = train_estimator(model, train_examples, valid_examples, ecfg);

  save_estimator(model, paths.out + "/estimator.ckpt");
  std::ofstream stats(paths.out + "/estimator_stats.tsv", std::ios::binary);
  for (size_t e = 0; e < result.history.size(); ++e)
    stats << e << "\t" << format_double(result.history[e].accuracy) << "\t"
          << format_double(result.history[e].f1) << "\n";
  write_run_manifest(paths.out, cfg, {paths.train, paths.valid, paths.vocab, paths.generator});
  std::cout << "train-estimator: accuracy " << format_double(result.best.accuracy) << " f1 "
            << format_double(result.best.f1) << " (epoch " << result.best_epoch << ")\n";
  return kExitOk;
}

int cmd_finetune(const CliPaths& paths, const RunConfig& cfg) {
  std::filesystem::create_directories(paths.out);
  Vocabulary vocab = Vocabulary::load(paths.vocab);
  auto policy = load_generator<Real>(paths.generator);
  auto estimator = load_estimator<Real>(paths.estimator);
  auto train_raw = read_pairs(paths.train);
  auto valid_raw = read_pairs(paths.valid);
  auto train = encode_pairs(train_raw, vocab, cfg.t_max);
  auto valid = encode_pairs(valid_raw, vocab, cfg.t_max);
  auto reward_index = FeedbackIndex::from_pairs(train_raw, vocab, cfg.t_max);
  auto valid_index = FeedbackIndex::from_pairs(valid_raw, vocab, cfg.t_max);

  FinetuneConfig<Real> fcfg;
  fcfg.strategy = parse_strategy(cfg.strategy);
  fcfg.k = cfg.resolved_k();
  fcfg.eta = cfg.resolved_eta();
  fcfg.lr = static_cast<Real>(cfg.resolved_alpha());
  fcfg.batch = cfg.rl_batch;
  fcfg.sync_steps = cfg.sync_steps;
  fcfg.epochs = cfg.rl_epochs;
  fcfg.steps_cap = cfg.rl_steps_cap;
  fcfg.t_max = cfg.t_max;
  fcfg.clip_norm = cfg.rl_clip_norm;
  fcfg.temperature = cfg.temperature;
  fcfg.seed = cfg.seed;
  fcfg.eval_every = cfg.rl_eval_every;
  fcfg.valid_cap = cfg.rl_valid_cap;
  fcfg.dropout = static_cast<Real>(cfg.rl_dropout);

  auto result = finetune(policy, estimator, vocab, train, valid, reward_index, valid_index, fcfg);

  save_generator(policy, paths.out + "/generator.ckpt");
  write_training_stats(paths.out + "/rl_stats.tsv", result.steps);
  std::ofstream evals(paths.out + "/rl_evals.tsv", std::ios::binary);
  for (const auto& e : result.evals)
    evals << e.step << "\t" << format_double(e.sessions_plus) << "\t"
          << format_double(e.mean_reward) << "\t" << format_double(e.smoothed_monitor) << "\n";
  write_run_manifest(paths.out, cfg,
                     {paths.train, paths.valid, paths.vocab, paths.generator, paths.estimator});
  std::cout << "finetune: " << result.steps.size() << " steps, best step " << result.best_step
            << " sessions+ " << format_double(result.best_sessions_plus) << " reward "
            << format_double(result.best_mean_reward)
            << (result.converged ? " (converged)" : "") << "\n";
  return kExitOk;
}

int cmd_evaluate(const CliPaths& paths, const RunConfig& cfg) {
  std::filesystem::create_directories(paths.out);
  Vocabulary vocab = Vocabulary::load(paths.vocab);
  auto policy = load_generator<Real>(paths.checkpoint);
  auto test_raw = read_pairs(paths.test);
  auto test = encode_pairs(test_raw, vocab, cfg.t_max);

  FeedbackIndex index = paths.log.empty()
                            ? FeedbackIndex::from_pairs(test_raw, vocab, cfg.t_max)
                            : FeedbackIndex::from_sessions(
                                  segment_sessions(read_log(paths.log), cfg.window_seconds),
                                  vocab, cfg.t_max);

  std::vector<SuggestionSet> sets;
  sets.reserve(test.size());
  for (const auto& p : test) {
    SuggestionSet set;
    set.q_src = p.src_text;
    set.q_next = p.next_text;
    set.suggestions = top_suggestions(policy, vocab, p.src, cfg.suggestions, cfg.t_max);
    sets.push_back(std::move(set));
  }
  write_suggestions(paths.out + "/suggestions.tsv", sets);
  auto report = build_report(sets, index, vocab);
  write_report(paths.out + "/report.tsv", report);
  if (!paths.compare_to.empty()) {
    auto base = read_report(paths.compare_to);
    write_comparison(paths.out + "/comparison.tsv", base, report);
  }
  std::vector<std::string> inputs{paths.test, paths.vocab, paths.checkpoint};
  if (!paths.log.empty()) inputs.push_back(paths.log);
  write_run_manifest(paths.out, cfg, inputs);
  for (const auto& row : report.rows)
    std::cout << row.name << " " << format_double(row.mean) << " +/- " << format_double(row.ci)
              << " (n=" << row.n << ")\n";
  return kExitOk;
}

int cmd_suggest(const CliPaths& paths, const RunConfig& cfg) {
  std::filesystem::create_directories(paths.out);
  Vocabulary vocab = Vocabulary::load(paths.vocab);
  auto policy = load_generator<Real>(paths.checkpoint);

  std::ifstream in(paths.input, std::ios::binary);
  if (!in) throw DataError("cannot read input queries: " + paths.input);
  std::vector<SuggestionSet> sets;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (tokenize(line).empty())
      throw DataError("input line " + std::to_string(line_no) + ": empty query");
    SuggestionSet set;
    set.q_src = vocab.normalize(line, cfg.t_max);
    auto src = vocab.encode(line, cfg.t_max, /*append_end=*/false);
    set.suggestions = top_suggestions(policy, vocab, src, cfg.suggestions, cfg.t_max);
    sets.push_back(std::move(set));
  }
  write_suggestions(paths.out + "/suggestions.tsv", sets);
  write_run_manifest(paths.out, cfg, {paths.input, paths.vocab, paths.checkpoint});
  std::cout << "suggest: wrote " << sets.size() << " suggestion rows\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Related-query suggestion pipeline: supervised seq2seq pre-training, a "
               "contextual naturalness estimator, and REINFORCE fine-tuning with a composite "
               "session/relatedness/naturalness reward."};
  app.require_subcommand(1);

  CliPaths paths;
  std::vector<std::pair<std::string, std::string>> overrides;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", paths.config_file, "key=value config file");
    cmd->add_option("--out", paths.out, "output directory")->required();
    for (const auto& key : RunConfig::keys()) {
      cmd->add_option_function<std::string>(
              "--" + key,
              [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); },
              "config override")
          ->take_last();
    }
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic query log");
  add_common(synth);

  auto* prepare = app.add_subcommand("prepare", "sessions, pairs, splits and vocabulary");
  add_common(prepare);
  prepare->add_option("--log", paths.log, "query log file")->required();

  auto* pretrain = app.add_subcommand("pretrain", "supervised seq2seq pre-training");
  add_common(pretrain);
  pretrain->add_option("--train", paths.train, "training pairs file")->required();
  pretrain->add_option("--valid", paths.valid, "validation pairs file")->required();
  pretrain->add_option("--vocab", paths.vocab, "vocabulary file")->required();
  pretrain->add_flag("--resume", paths.resume, "resume from <out>/generator.last.ckpt");

  auto* train_est = app.add_subcommand("train-estimator", "contextual naturalness estimator");
  add_common(train_est);
  train_est->add_option("--train", paths.train, "training pairs file")->required();
  train_est->add_option("--valid", paths.valid, "validation pairs file")->required();
  train_est->add_option("--vocab", paths.vocab, "vocabulary file")->required();
  train_est->add_option("--generator", paths.generator, "pre-trained generator checkpoint")
      ->required();
  train_est->add_option("--dump-examples", paths.dump_examples,
                        "write the labeled examples to this file");

  auto* finetune_cmd = app.add_subcommand("finetune", "REINFORCE fine-tuning");
  add_common(finetune_cmd);
  finetune_cmd->add_option("--train", paths.train, "training pairs file")->required();
  finetune_cmd->add_option("--valid", paths.valid, "validation pairs file")->required();
  finetune_cmd->add_option("--vocab", paths.vocab, "vocabulary file")->required();
  finetune_cmd->add_option("--generator", paths.generator, "pre-trained generator checkpoint")
      ->required();
  finetune_cmd->add_option("--estimator", paths.estimator, "estimator checkpoint")->required();

  auto* evaluate = app.add_subcommand("evaluate", "test-set metrics report");
  add_common(evaluate);
  evaluate->add_option("--test", paths.test, "test pairs file")->required();
  evaluate->add_option("--vocab", paths.vocab, "vocabulary file")->required();
  evaluate->add_option("--checkpoint", paths.checkpoint, "generator checkpoint")->required();
  evaluate->add_option("--log", paths.log, "query log for the session index");
  evaluate->add_option("--compare-to", paths.compare_to, "baseline report for relative deltas");

  auto* suggest = app.add_subcommand("suggest", "suggestions for a file of queries");
  add_common(suggest);
  suggest->add_option("--input", paths.input, "one query per line")->required();
  suggest->add_option("--vocab", paths.vocab, "vocabulary file")->required();
  suggest->add_option("--checkpoint", paths.checkpoint, "generator checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg = resolve_config(paths, overrides);
    if (synth->parsed()) return cmd_synth(paths, cfg);
    if (prepare->parsed()) return cmd_prepare(paths, cfg);
    if (pretrain->parsed()) return cmd_pretrain(paths, cfg);
    if (train_est->parsed()) return cmd_train_estimator(paths, cfg);
    if (finetune_cmd->parsed()) return cmd_finetune(paths, cfg);
    if (evaluate->parsed()) return cmd_evaluate(paths, cfg);
    if (suggest->parsed()) return cmd_suggest(paths, cfg);
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
