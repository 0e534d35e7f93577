#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "balm/error.hpp"
#include "balm/eval.hpp"
#include "balm/rng.hpp"
#include "oracles.hpp"

using namespace balm;
using eval::BleuReport;
using eval::TokenSeq;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TokenSeq random_seq(Rng& rng, int max_len, int vocab) {
  TokenSeq seq;
  const int len = static_cast<int>(rng.below(static_cast<uint64_t>(max_len))) + 1;
  for (int i = 0; i < len; ++i) {
    seq.push_back("w" + std::to_string(rng.below(static_cast<uint64_t>(vocab))));
  }
  return seq;
}

}  // namespace

TEST_CASE("bleu trivial cases") {
  std::vector<TokenSeq> refs = {{"a", "dog", "runs", "."}, {"the", "cat", "sleeps", "."}};
  BleuReport perfect = eval::bleu(refs, refs);
  CHECK(perfect.score == doctest::Approx(1.0));
  CHECK(perfect.brevity_penalty == doctest::Approx(1.0));
  for (double p : perfect.precisions) CHECK(p == doctest::Approx(1.0));

  std::vector<TokenSeq> disjoint = {{"x", "y", "z", "q"}};
  std::vector<TokenSeq> ref1 = {{"a", "dog", "runs", "."}};
  CHECK(eval::bleu(disjoint, ref1).score == 0.0);

  CHECK_THROWS_AS(eval::bleu(disjoint, refs), ContractError);
  CHECK_THROWS_AS(eval::bleu({{"a"}}, {TokenSeq{}}), ContractError);
}

TEST_CASE("bleu clipping example from repeated tokens") {
  std::vector<TokenSeq> cand = {{"the", "the", "the"}};
  std::vector<TokenSeq> ref = {{"the", "cat"}};
  BleuReport report = eval::bleu(cand, ref);
  CHECK(report.precisions[0] == doctest::Approx(1.0 / 3.0));
  CHECK(report.precisions[1] == 0.0);
  CHECK(report.score == 0.0);
  CHECK(report.brevity_penalty == doctest::Approx(1.0));  // 3 > 2
}

TEST_CASE("bleu matches the brute-force oracle on randomized corpora") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const size_t n = rng.below(4) + 1;
    std::vector<TokenSeq> cands, refs;
    for (size_t i = 0; i < n; ++i) {
      cands.push_back(random_seq(rng, 8, 10));
      refs.push_back(random_seq(rng, 8, 10));
    }
    // Mix in near-copies so higher-order n-grams sometimes match.
    if (trial % 3 == 0) cands.back() = refs.back();
    if (trial % 5 == 0 && refs[0].size() > 1) {
      cands[0] = refs[0];
      cands[0][0] = "w0";
    }
    BleuReport mine = eval::bleu(cands, refs);
    auto oracle = oracles::bleu_corpus(cands, refs);
    CHECK(mine.score == doctest::Approx(oracle.score).epsilon(1e-12));
    if (mine.score > 0.0) {
      CHECK(mine.brevity_penalty == doctest::Approx(oracle.brevity_penalty).epsilon(1e-12));
    }
  }
}

TEST_CASE("bleu is invariant to pair order and monotone under duplication") {
  std::vector<TokenSeq> cands = {{"a", "b", "c"}, {"d", "e"}, {"a", "a", "b", "c", "d"}};
  std::vector<TokenSeq> refs = {{"a", "b", "d"}, {"d", "e"}, {"a", "b", "c", "d", "e"}};
  double base = eval::bleu(cands, refs).score;

  std::vector<TokenSeq> cands_r(cands.rbegin(), cands.rend());
  std::vector<TokenSeq> refs_r(refs.rbegin(), refs.rend());
  CHECK(eval::bleu(cands_r, refs_r).score == doctest::Approx(base).epsilon(1e-12));

  // Appending a fully correct pair never lowers the corpus score.
  cands.push_back(refs[2]);
  refs.push_back(refs[2]);
  CHECK(eval::bleu(cands, refs).score >= base - 1e-12);
}

TEST_CASE("smoothed sentence bleu") {
  TokenSeq same = {"a", "b", "c"};
  CHECK(eval::sentence_bleu_smoothed(same, same) == doctest::Approx(1.0));

  // Single-token pair: only unigrams exist, higher orders are skipped.
  CHECK(eval::sentence_bleu_smoothed({"hi"}, {"hi"}) == doctest::Approx(1.0));

  // 3-token candidate sharing 2 unigrams and 1 bigram with the reference:
  // p1 = 2/3, p2 = 1/2, p3 floored to 0.5/1; BP = 1 (equal lengths).
  TokenSeq cand = {"a", "b", "x"};
  TokenSeq ref = {"a", "b", "c"};
  const double expect = std::exp((std::log(2.0 / 3.0) + std::log(1.0 / 2.0) +
                                  std::log(0.5 / 1.0)) / 3.0);
  CHECK(eval::sentence_bleu_smoothed(cand, ref) == doctest::Approx(expect).epsilon(1e-9));

  CHECK(eval::sentence_bleu_smoothed({"z"}, {"a", "b"}) == 0.0);  // unigram miss stays fatal
  CHECK(eval::sentence_bleu_smoothed({}, {"a"}) == 0.0);
}

TEST_CASE("random guess bound") {
  CHECK(eval::random_guess_bound(28996) == doctest::Approx(10.2745).epsilon(1e-4));
  CHECK(eval::random_guess_bound(1) == 0.0);
  CHECK(eval::random_guess_bound(2) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK_THROWS_AS(eval::random_guess_bound(0), ContractError);
}

TEST_CASE("random guess bound dominates the best constant predictor") {
  // Cross-entropy of the best constant distribution is the label entropy,
  // which is at most ln V.
  Rng rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    const int V = static_cast<int>(rng.below(20)) + 2;
    std::vector<long> counts(static_cast<size_t>(V), 0);
    const int n = 200;
    for (int i = 0; i < n; ++i) ++counts[rng.below(static_cast<uint64_t>(V))];
    double entropy = 0.0;
    for (long c : counts) {
      if (c == 0) continue;
      const double q = static_cast<double>(c) / n;
      entropy -= q * std::log(q);
    }
    CHECK(eval::random_guess_bound(V) >= entropy - 1e-9);
  }
}

TEST_CASE("perplexity equivalent") {
  CHECK(eval::perplexity_equivalent(0.012) == doctest::Approx(0.9881).epsilon(1e-4));
  CHECK(eval::perplexity_equivalent(0.0) == doctest::Approx(1.0));
  CHECK(eval::perplexity_equivalent(std::log(2.0)) == doctest::Approx(0.5));
}

TEST_CASE("export_history writes one row per epoch") {
  TrainHistory history;
  history.epochs.push_back({0, 4.5f, 4.25f, 1.5, 0});
  history.epochs.push_back({1, 3.25f, 3.5f, 1.25, 0});
  history.epochs.push_back({2, 2.125f, 2.25f, 1.75, 0});
  auto path = std::filesystem::temp_directory_path() / "balm_history.csv";
  eval::export_history(history, path);
  std::string contents = read_file(path);
  std::istringstream in(contents);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "epoch,train_loss,val_loss,seconds");
  CHECK(lines[1] == "0,4.5,4.25,1.5");
  CHECK(lines[2] == "1,3.25,3.5,1.25");

  // Round-trip parse recovers values at formatting precision.
  int epoch;
  char comma;
  float train, val;
  double secs;
  std::istringstream row(lines[3]);
  row >> epoch >> comma >> train >> comma >> val >> comma >> secs;
  CHECK(epoch == 2);
  CHECK(train == doctest::Approx(2.125f));
  CHECK(val == doctest::Approx(2.25f));

  TrainHistory empty;
  eval::export_history(empty, path);
  CHECK(read_file(path) == "epoch,train_loss,val_loss,seconds\n");

  eval::export_history(empty, path, {"k=64", "seed=1"});
  CHECK(read_file(path) == "# k=64\n# seed=1\nepoch,train_loss,val_loss,seconds\n");
}

TEST_CASE("reconstruction report rows and flags") {
  auto path = std::filesystem::temp_directory_path() / "balm_report.tsv";
  eval::reconstruction_report({"A dog runs.", "The cat sleeps."},
                              {"a dog runs.", "a cat naps."},
                              {"A dog runs.", "The cat sleeps."}, path);
  std::string contents = read_file(path);
  std::istringstream in(contents);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);  // header + one row per input
  CHECK(lines[0] == "input\toutput\treference\tbleu\texact");
  CHECK(lines[1].find("\tyes") != std::string::npos);  // tokenizer-level exact match
  CHECK(lines[1].find("1\tyes") != std::string::npos);  // BLEU 1.0 on the exact row
  CHECK(lines[2].find("\tno") != std::string::npos);

  // Byte-stable across repeated generation.
  auto path2 = std::filesystem::temp_directory_path() / "balm_report2.tsv";
  eval::reconstruction_report({"A dog runs.", "The cat sleeps."},
                              {"a dog runs.", "a cat naps."},
                              {"A dog runs.", "The cat sleeps."}, path2);
  CHECK(read_file(path2) == contents);

  CHECK_THROWS_AS(eval::reconstruction_report({"a"}, {}, {"a"}, path), ContractError);
}
