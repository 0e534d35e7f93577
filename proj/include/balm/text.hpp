#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "balm/error.hpp"

namespace balm::text {

// Reserved ids. PAD is pinned to 0 so loss masking and mean-pool masking can
// key on one constant.
inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kBos = 2;
inline constexpr int kEos = 3;
inline constexpr int kMask = 4;
inline constexpr int kCls = 5;
inline constexpr int kSep = 6;
inline constexpr int kNumReserved = 7;

extern const std::array<std::string_view, kNumReserved> kReservedTokens;

// Bidirectional token <-> id map; reserved tokens always occupy ids 0-6.
class Vocab {
 public:
  Vocab();

  // Reserved tokens first; then tokens with frequency >= min_freq ordered by
  // descending frequency, ties broken lexicographically, truncated to
  // max_size entries total.
  static Vocab build(const std::vector<std::vector<std::string>>& sentences, int min_freq,
                     int max_size);

  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }

  // One token per line, line number = id.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  static Vocab from_tokens(std::vector<std::string> tokens);  // includes reserved entries
  const std::vector<std::string>& tokens() const { return id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

// Lowercases, splits on whitespace, and breaks out each of .,!?;:'"()- as its
// own token. Bytes >= 0x80 pass through untouched.
std::vector<std::string> tokenize(std::string_view text);

// Joins with single spaces, omitting the space before punctuation tokens.
std::string detokenize(const std::vector<std::string>& tokens);

bool is_punctuation_token(const std::string& token);

std::vector<int> encode_ids(const std::vector<std::string>& tokens, const Vocab& vocab,
                            bool add_bos_eos);
std::vector<std::string> decode_ids(const std::vector<int>& ids, const Vocab& vocab);

// Padded id matrix with validity mask; mask is true exactly at positions
// before the row's length and ids at masked-off positions equal PAD.
struct TokenBatch {
  int batch_size = 0;
  int max_len = 0;
  std::vector<int> ids;       // batch_size x max_len, row-major
  std::vector<uint8_t> mask;  // batch_size x max_len
  std::vector<int> lengths;   // batch_size

  int at(int row, int pos) const { return ids[static_cast<size_t>(row) * max_len + pos]; }
  bool real(int row, int pos) const {
    return mask[static_cast<size_t>(row) * max_len + pos] != 0;
  }
};

TokenBatch pack_batch(const std::vector<std::vector<int>>& rows, int max_len);

struct ParallelCorpus {
  std::vector<std::string> source;
  std::vector<std::string> target;
  size_t size() const { return source.size(); }
};

// Two line-aligned UTF-8 files, one sentence per line; LF or CRLF endings.
// Trailing blank lines are ignored.
ParallelCorpus load_parallel_corpus(const std::filesystem::path& source_path,
                                    const std::filesystem::path& target_path);

std::vector<std::string> read_lines(const std::filesystem::path& path);

// Shuffles deterministically by seed, truncates rows longer than max_len
// (forcing EOS at the final kept position), pads each batch to its longest
// row, and keeps the final partial batch.
std::vector<TokenBatch> make_batches(const std::vector<std::vector<int>>& id_lists,
                                     int batch_size, int max_len, uint64_t shuffle_seed);

// Same policy for aligned pairs: one shared permutation keeps row i of each
// source batch paired with row i of the matching target batch.
std::vector<std::pair<TokenBatch, TokenBatch>> make_parallel_batches(
    const std::vector<std::vector<int>>& source_ids,
    const std::vector<std::vector<int>>& target_ids, int batch_size, int max_len,
    uint64_t shuffle_seed);

bool utf8_valid(std::string_view bytes);

}  // namespace balm::text
