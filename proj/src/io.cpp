#include <fstream>

#include "qsuggest/estimator.hpp"
#include "qsuggest/metrics.hpp"
#include "qsuggest/reinforce.hpp"

namespace qsuggest {

void write_training_stats(const std::string& path, const std::vector<StepStats>& stats) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write training stats: " + path);
  for (const auto& s : stats)
    out << s.step << "\t" << format_double(s.mean_reward) << "\t"
        << format_double(s.monitor_loss) << "\t" << format_double(s.grad_norm) << "\n";
  if (!out) throw DataError("failed writing training stats: " + path);
}

void write_examples(const std::string& path, const std::vector<LabeledExample>& examples,
                    const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write examples file: " + path);
  for (const auto& ex : examples)
    out << vocab.decode(ex.context) << "\t" << vocab.decode(ex.candidate) << "\t" << ex.label
        << "\n";
  if (!out) throw DataError("failed writing examples file: " + path);
}

}  // namespace qsuggest
