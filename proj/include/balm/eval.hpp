#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "balm/history.hpp"

namespace balm::eval {

using TokenSeq = std::vector<std::string>;

// Corpus-level BLEU with pooled clipped n-gram counts and a brevity penalty,
// single reference per candidate. Scores live in [0, 1].
struct BleuReport {
  double score = 0.0;
  std::array<double, 4> precisions{};  // p1..p4; 0 where no candidate n-grams exist
  double brevity_penalty = 1.0;
  long candidate_length = 0;
  long reference_length = 0;
};

BleuReport bleu(const std::vector<TokenSeq>& candidates,
                const std::vector<TokenSeq>& references, int max_n = 4);

// Per-sentence variant for qualitative reports: zero match counts at n >= 2
// are floored to 0.5 before dividing; orders with no candidate n-grams are
// skipped. Never used for headline corpus numbers.
double sentence_bleu_smoothed(const TokenSeq& candidate, const TokenSeq& reference,
                              int max_n = 4);

// ln(vocab_size): the expected cross-entropy of uniform guessing.
double random_guess_bound(long vocab_size);

// exp(-mean_loss): the implied per-token probability of the correct class.
double perplexity_equivalent(double mean_loss);

// CSV with header epoch,train_loss,val_loss,seconds; values at 6 significant
// digits. Comment lines (prefixed '#') are written before the header.
void export_history(const TrainHistory& history, const std::filesystem::path& path,
                    const std::vector<std::string>& comment_lines = {});

// Tab-separated qualitative table: input, model output, reference, smoothed
// sentence BLEU, exact-match flag. BLEU and the flag compare tokenizer output
// so scores are self-consistent with training.
void reconstruction_report(const std::vector<std::string>& inputs,
                           const std::vector<std::string>& outputs,
                           const std::vector<std::string>& references,
                           const std::filesystem::path& path);

}  // namespace balm::eval
