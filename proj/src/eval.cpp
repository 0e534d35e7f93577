#include "balm/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "balm/error.hpp"
#include "balm/text.hpp"

namespace balm::eval {

namespace {

// n-grams keyed by joining tokens with an unprintable separator.
std::unordered_map<std::string, long> ngram_counts(const TokenSeq& tokens, int n) {
  std::unordered_map<std::string, long> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (size_t i = 0; i + static_cast<size_t>(n) <= tokens.size(); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) {
      if (j) key.push_back('\x1f');
      key += tokens[i + static_cast<size_t>(j)];
    }
    ++counts[key];
  }
  return counts;
}

long clipped_matches(const TokenSeq& candidate, const TokenSeq& reference, int n) {
  auto cand = ngram_counts(candidate, n);
  if (cand.empty()) return 0;
  auto ref = ngram_counts(reference, n);
  long matches = 0;
  for (const auto& [gram, count] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) matches += std::min(count, it->second);
  }
  return matches;
}

std::string format_sig6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

BleuReport bleu(const std::vector<TokenSeq>& candidates,
                const std::vector<TokenSeq>& references, int max_n) {
  if (candidates.size() != references.size()) {
    throw ContractError("bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                        std::to_string(references.size()) + " references");
  }
  if (max_n < 1 || max_n > 4) throw ContractError("bleu: max_n must be in [1, 4]");
  for (const auto& ref : references) {
    if (ref.empty()) throw ContractError("bleu: empty reference");
  }

  BleuReport report;
  for (size_t i = 0; i < candidates.size(); ++i) {
    report.candidate_length += static_cast<long>(candidates[i].size());
    report.reference_length += static_cast<long>(references[i].size());
  }

  int available = 0;
  double log_sum = 0.0;
  bool zero_precision = false;
  for (int n = 1; n <= max_n; ++n) {
    long matches = 0, total = 0;
    for (size_t i = 0; i < candidates.size(); ++i) {
      const long cand_grams =
          std::max<long>(0, static_cast<long>(candidates[i].size()) - n + 1);
      total += cand_grams;
      if (cand_grams > 0) matches += clipped_matches(candidates[i], references[i], n);
    }
    if (total == 0) continue;  // no candidate n-grams of this order anywhere
    ++available;
    const double p = static_cast<double>(matches) / static_cast<double>(total);
    report.precisions[static_cast<size_t>(n - 1)] = p;
    if (p == 0.0) {
      zero_precision = true;
    } else {
      log_sum += std::log(p);
    }
  }

  if (report.candidate_length == 0) {
    report.brevity_penalty = 0.0;
    report.score = 0.0;
    return report;
  }
  report.brevity_penalty =
      report.candidate_length > report.reference_length
          ? 1.0
          : std::exp(1.0 - static_cast<double>(report.reference_length) /
                               static_cast<double>(report.candidate_length));
  if (available == 0 || zero_precision) {
    report.score = 0.0;
  } else {
    report.score = report.brevity_penalty * std::exp(log_sum / available);
  }
  return report;
}

double sentence_bleu_smoothed(const TokenSeq& candidate, const TokenSeq& reference, int max_n) {
  if (reference.empty()) throw ContractError("sentence_bleu_smoothed: empty reference");
  if (candidate.empty()) return 0.0;
  int available = 0;
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const long total = std::max<long>(0, static_cast<long>(candidate.size()) - n + 1);
    if (total == 0) continue;
    ++available;
    double matches = static_cast<double>(clipped_matches(candidate, reference, n));
    if (matches == 0.0 && n >= 2) matches = 0.5;  // floor smoothing
    if (matches == 0.0) return 0.0;               // unigram miss stays fatal
    log_sum += std::log(matches / static_cast<double>(total));
  }
  if (available == 0) return 0.0;
  const double bp =
      candidate.size() > reference.size()
          ? 1.0
          : std::exp(1.0 - static_cast<double>(reference.size()) /
                               static_cast<double>(candidate.size()));
  return bp * std::exp(log_sum / available);
}

double random_guess_bound(long vocab_size) {
  if (vocab_size < 1) {
    throw ContractError("random_guess_bound: vocab_size must be >= 1, got " +
                        std::to_string(vocab_size));
  }
  return std::log(static_cast<double>(vocab_size));
}

double perplexity_equivalent(double mean_loss) { return std::exp(-mean_loss); }

void export_history(const TrainHistory& history, const std::filesystem::path& path,
                    const std::vector<std::string>& comment_lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& line : comment_lines) out << "# " << line << '\n';
  out << "epoch,train_loss,val_loss,seconds\n";
  for (const EpochRecord& rec : history.epochs) {
    out << rec.epoch << ',' << format_sig6(rec.train_loss) << ',' << format_sig6(rec.val_loss)
        << ',' << format_sig6(rec.seconds) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void reconstruction_report(const std::vector<std::string>& inputs,
                           const std::vector<std::string>& outputs,
                           const std::vector<std::string>& references,
                           const std::filesystem::path& path) {
  if (inputs.size() != outputs.size() || inputs.size() != references.size()) {
    throw ContractError("reconstruction_report: input/output/reference counts differ");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "input\toutput\treference\tbleu\texact\n";
  for (size_t i = 0; i < inputs.size(); ++i) {
    const TokenSeq out_tokens = text::tokenize(outputs[i]);
    const TokenSeq ref_tokens = text::tokenize(references[i]);
    const double score =
        ref_tokens.empty() ? 0.0 : sentence_bleu_smoothed(out_tokens, ref_tokens);
    const bool exact = !ref_tokens.empty() && out_tokens == ref_tokens;
    out << inputs[i] << '\t' << outputs[i] << '\t' << references[i] << '\t'
        << format_sig6(score) << '\t' << (exact ? "yes" : "no") << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace balm::eval
