#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "balm/rng.hpp"
#include "balm/text.hpp"

using namespace balm;
using namespace balm::text;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& contents) {
  auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path, std::ios::binary);
  out << contents;
  return path;
}

std::vector<std::vector<std::string>> tokenized(const std::vector<std::string>& sentences) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : sentences) out.push_back(tokenize(s));
  return out;
}

}  // namespace

TEST_CASE("tokenize lowercases, splits whitespace, isolates punctuation") {
  CHECK(tokenize("A dog runs.") == std::vector<std::string>{"a", "dog", "runs", "."});
  CHECK(tokenize("").empty());
  CHECK(tokenize("Don't stop, now!") ==
        std::vector<std::string>{"don", "'", "t", "stop", ",", "now", "!"});
  CHECK(tokenize("  spaced\t\tout \n lines ") == std::vector<std::string>{"spaced", "out", "lines"});
  CHECK(tokenize("(a-b)") == std::vector<std::string>{"(", "a", "-", "b", ")"});
}

TEST_CASE("tokenize is idempotent under re-join") {
  for (const char* text : {"A dog runs.", "Don't stop, now!", "Ein Hundläuft!?", "x:y;z\"q\""}) {
    auto first = tokenize(text);
    std::string joined;
    for (const auto& t : first) {
      if (!joined.empty()) joined.push_back(' ');
      joined += t;
    }
    CHECK(tokenize(joined) == first);
  }
}

TEST_CASE("detokenize joins without spaces before punctuation") {
  CHECK(detokenize({"a", "dog", "runs", "."}) == "a dog runs.");
  CHECK(detokenize({"stop", ",", "now", "!"}) == "stop, now!");
  CHECK(detokenize({}) == "");
}

TEST_CASE("vocab build ordering, min_freq, and truncation") {
  Vocab v = Vocab::build(tokenized({"a a b"}), 1, 100);
  CHECK(v.size() == 9);
  CHECK(v.id("a") == 7);
  CHECK(v.id("b") == 8);
  for (int i = 0; i < kNumReserved; ++i) {
    CHECK(v.token(i) == std::string(kReservedTokens[static_cast<size_t>(i)]));
  }

  Vocab strict = Vocab::build(tokenized({"a a b"}), 2, 100);
  CHECK(strict.size() == 8);
  CHECK(strict.contains("a"));
  CHECK(!strict.contains("b"));
  CHECK(strict.id("b") == kUnk);

  // Equal frequencies break ties lexicographically.
  Vocab ties = Vocab::build(tokenized({"pear apple mango"}), 1, 100);
  CHECK(ties.id("apple") == 7);
  CHECK(ties.id("mango") == 8);
  CHECK(ties.id("pear") == 9);

  Vocab truncated = Vocab::build(tokenized({"c c c b b a"}), 1, 9);
  CHECK(truncated.size() == 9);
  CHECK(truncated.contains("c"));
  CHECK(truncated.contains("b"));
  CHECK(!truncated.contains("a"));

  CHECK_THROWS_AS(Vocab::build({}, 1, 100), EmptyInputError);
  CHECK_THROWS_AS(Vocab::build(tokenized({"a"}), 1, 7), ContractError);
}

TEST_CASE("vocab construction is order-independent") {
  std::vector<std::string> sentences = {"the cat sat", "a cat ran", "the dog sat today"};
  Vocab forward = Vocab::build(tokenized(sentences), 1, 100);
  std::vector<std::string> reversed(sentences.rbegin(), sentences.rend());
  Vocab backward = Vocab::build(tokenized(reversed), 1, 100);
  CHECK(forward.tokens() == backward.tokens());
}

TEST_CASE("encode ids maps OOV to UNK and wraps with BOS/EOS") {
  Vocab v = Vocab::build(tokenized({"a a b"}), 1, 100);
  CHECK(encode_ids({"a"}, v, true) == std::vector<int>{kBos, 7, kEos});
  CHECK(encode_ids({"zebra"}, v, false) == std::vector<int>{kUnk});

  std::vector<std::string> tokens = {"a", "b", "a"};
  auto ids = encode_ids(tokens, v, false);
  CHECK(decode_ids(ids, v) == tokens);
  CHECK_THROWS_AS(v.token(99), VocabError);
}

TEST_CASE("vocab file round trip and validation") {
  Vocab v = Vocab::build(tokenized({"hello world world"}), 1, 100);
  auto path = std::filesystem::temp_directory_path() / "balm_vocab_test.txt";
  v.save(path);
  Vocab loaded = Vocab::load(path);
  CHECK(loaded.tokens() == v.tokens());

  auto bad = temp_file("balm_vocab_bad.txt", "<pad>\n<unk>\nnot_reserved\n");
  CHECK_THROWS_AS(Vocab::load(bad), VocabError);
}

TEST_CASE("parallel corpus loading") {
  auto src = temp_file("balm_src.txt", "A dog runs.\nThe cat sleeps.\nBirds sing.\n");
  auto tgt = temp_file("balm_tgt.txt", "Ein Hund rennt.\nDie Katze schläft.\nVögel singen.\n");
  ParallelCorpus corpus = load_parallel_corpus(src, tgt);
  CHECK(corpus.size() == 3);
  CHECK(corpus.source[0] == "A dog runs.");
  CHECK(corpus.target[2] == "Vögel singen.");

  auto tgt4 = temp_file("balm_tgt4.txt", "a\nb\nc\nd\n");
  try {
    load_parallel_corpus(src, tgt4);
    FAIL("expected AlignmentError");
  } catch (const AlignmentError& e) {
    const std::string msg = e.what();
    CHECK(msg.find('3') != std::string::npos);
    CHECK(msg.find('4') != std::string::npos);
  }

  // Trailing blank lines are ignored, CRLF accepted.
  auto src_crlf = temp_file("balm_crlf.txt", "one two\r\nthree four\r\n\r\n\r\n");
  auto tgt_crlf = temp_file("balm_crlf_t.txt", "uno dos\ntres cuatro\n");
  ParallelCorpus c2 = load_parallel_corpus(src_crlf, tgt_crlf);
  CHECK(c2.size() == 2);
  CHECK(c2.source[1] == "three four");

  auto invalid = temp_file("balm_bad_utf8.txt", std::string("ok line\n\xff\xfe broken\n"));
  auto partner = temp_file("balm_bad_utf8_t.txt", "fine\nfine\n");
  try {
    load_parallel_corpus(invalid, partner);
    FAIL("expected EncodingError");
  } catch (const EncodingError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  CHECK_THROWS_AS(load_parallel_corpus("/nonexistent/path.txt", tgt), IoError);
}

TEST_CASE("make_batches pads, masks, truncates, and keeps partial batches") {
  std::vector<std::vector<int>> rows = {{kBos, 7, kEos}, {kBos, 7, 8, 9, kEos}};
  auto batches = make_batches(rows, 2, 16, 1);
  REQUIRE(batches.size() == 1);
  const TokenBatch& b = batches[0];
  CHECK(b.batch_size == 2);
  CHECK(b.max_len == 5);
  int short_row = b.lengths[0] == 3 ? 0 : 1;
  CHECK(b.lengths[short_row] == 3);
  CHECK(b.at(short_row, 3) == kPad);
  CHECK(b.at(short_row, 4) == kPad);
  CHECK_FALSE(b.real(short_row, 3));
  CHECK_FALSE(b.real(short_row, 4));

  // TokenBatch invariant: mask true exactly before length, PAD after.
  for (int r = 0; r < b.batch_size; ++r) {
    for (int i = 0; i < b.max_len; ++i) {
      CHECK(b.real(r, i) == (i < b.lengths[static_cast<size_t>(r)]));
      if (!b.real(r, i)) CHECK(b.at(r, i) == kPad);
    }
  }

  // Same seed, same order; different seed may differ.
  std::vector<std::vector<int>> many;
  for (int i = 0; i < 10; ++i) many.push_back({kBos, 7 + i, kEos});
  auto a1 = make_batches(many, 4, 16, 99);
  auto a2 = make_batches(many, 4, 16, 99);
  REQUIRE(a1.size() == 3);
  CHECK(a1[0].ids == a2[0].ids);
  CHECK(a1[1].ids == a2[1].ids);
  CHECK(a1[2].batch_size == 2);  // 10 = 4 + 4 + 2

  // Truncation cuts to max_len and forces EOS at the final position.
  std::vector<std::vector<int>> longrow = {{kBos, 7, 8, 9, 10, 11, kEos}};
  auto tb = make_batches(longrow, 1, 4, 0);
  REQUIRE(tb.size() == 1);
  CHECK(tb[0].max_len == 4);
  CHECK(tb[0].lengths[0] == 4);
  CHECK(tb[0].at(0, 3) == kEos);

  CHECK(make_batches({}, 4, 16, 0).empty());
  CHECK_THROWS_AS(make_batches(rows, 0, 16, 0), ContractError);
  CHECK_THROWS_AS(make_batches(rows, 2, 1, 0), ContractError);
}

TEST_CASE("parallel batches keep pairs aligned") {
  std::vector<std::vector<int>> src, tgt;
  for (int i = 0; i < 9; ++i) {
    src.push_back({kBos, 10 + i, kEos});
    tgt.push_back({kBos, 40 + i, kEos});
  }
  auto batches = make_parallel_batches(src, tgt, 4, 16, 123);
  REQUIRE(batches.size() == 3);
  for (const auto& [sb, tb] : batches) {
    REQUIRE(sb.batch_size == tb.batch_size);
    for (int r = 0; r < sb.batch_size; ++r) {
      CHECK(tb.at(r, 1) - sb.at(r, 1) == 30);  // pairing preserved through shuffle
    }
  }
  CHECK_THROWS_AS(make_parallel_batches(src, {{1}}, 4, 16, 0), AlignmentError);
}
