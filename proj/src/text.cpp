#include "balm/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "balm/rng.hpp"

namespace balm::text {

const std::array<std::string_view, kNumReserved> kReservedTokens = {
    "<pad>", "<unk>", "<bos>", "<eos>", "<mask>", "<cls>", "<sep>"};

namespace {

constexpr std::string_view kPunctuation = ".,!?;:'\"()-";

bool is_punct_char(char c) { return kPunctuation.find(c) != std::string_view::npos; }

}  // namespace

bool is_punctuation_token(const std::string& token) {
  return token.size() == 1 && is_punct_char(token[0]);
}

Vocab::Vocab() {
  id_to_token_.reserve(kNumReserved);
  for (auto t : kReservedTokens) {
    token_to_id_.emplace(std::string(t), static_cast<int>(id_to_token_.size()));
    id_to_token_.emplace_back(t);
  }
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& sentences, int min_freq,
                   int max_size) {
  if (min_freq < 1) throw ContractError("build_vocab: min_freq must be >= 1");
  if (max_size <= kNumReserved) {
    throw ContractError("build_vocab: max_size must exceed the " +
                        std::to_string(kNumReserved) + " reserved entries");
  }
  std::map<std::string, long> freq;
  long total_tokens = 0;
  for (const auto& sent : sentences) {
    for (const auto& tok : sent) {
      ++freq[tok];
      ++total_tokens;
    }
  }
  if (sentences.empty() || total_tokens == 0) {
    throw EmptyInputError("build_vocab: empty corpus");
  }
  std::vector<std::pair<std::string, long>> entries(freq.begin(), freq.end());
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (const auto& [tok, count] : entries) {
    if (count < min_freq) continue;
    if (v.size() >= max_size) break;
    if (v.token_to_id_.count(tok)) continue;  // reserved literal appearing in text
    v.token_to_id_.emplace(tok, v.size());
    v.id_to_token_.push_back(tok);
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const { return token_to_id_.count(token) != 0; }

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) {
    throw VocabError("token id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(size()));
  }
  return id_to_token_[static_cast<size_t>(id)];
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& tok : id_to_token_) out << tok << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::vector<std::string> lines = read_lines(path);
  return from_tokens(std::move(lines));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kNumReserved) {
    throw VocabError("vocab must contain at least the " + std::to_string(kNumReserved) +
                     " reserved tokens, got " + std::to_string(tokens.size()));
  }
  for (int i = 0; i < kNumReserved; ++i) {
    if (tokens[static_cast<size_t>(i)] != kReservedTokens[static_cast<size_t>(i)]) {
      throw VocabError("vocab line " + std::to_string(i) + " must be '" +
                       std::string(kReservedTokens[static_cast<size_t>(i)]) + "', got '" +
                       tokens[static_cast<size_t>(i)] + "'");
    }
  }
  Vocab v;
  for (size_t i = kNumReserved; i < tokens.size(); ++i) {
    if (tokens[i].empty()) throw VocabError("vocab line " + std::to_string(i) + " is empty");
    if (!v.token_to_id_.emplace(tokens[i], v.size()).second) {
      throw VocabError("duplicate vocab token '" + tokens[i] + "'");
    }
    v.id_to_token_.push_back(std::move(tokens[i]));
  }
  return v;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&]() {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (char c : text) {
    const unsigned char uc = static_cast<unsigned char>(c);
    if (uc < 0x80 && std::isspace(uc)) {
      flush();
    } else if (uc < 0x80 && is_punct_char(c)) {
      flush();
      tokens.emplace_back(1, c);
    } else if (uc < 0x80) {
      current.push_back(static_cast<char>(std::tolower(uc)));
    } else {
      current.push_back(c);
    }
  }
  flush();
  return tokens;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && !is_punctuation_token(tokens[i])) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::vector<int> encode_ids(const std::vector<std::string>& tokens, const Vocab& vocab,
                            bool add_bos_eos) {
  std::vector<int> ids;
  ids.reserve(tokens.size() + (add_bos_eos ? 2 : 0));
  if (add_bos_eos) ids.push_back(kBos);
  for (const auto& tok : tokens) ids.push_back(vocab.id(tok));
  if (add_bos_eos) ids.push_back(kEos);
  return ids;
}

std::vector<std::string> decode_ids(const std::vector<int>& ids, const Vocab& vocab) {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int id : ids) tokens.push_back(vocab.token(id));
  return tokens;
}

TokenBatch pack_batch(const std::vector<std::vector<int>>& rows, int max_len) {
  TokenBatch batch;
  batch.batch_size = static_cast<int>(rows.size());
  int longest = 0;
  for (const auto& row : rows) {
    longest = std::max(longest, static_cast<int>(std::min<size_t>(row.size(),
                                                                  static_cast<size_t>(max_len))));
  }
  batch.max_len = longest;
  batch.ids.assign(static_cast<size_t>(batch.batch_size) * longest, kPad);
  batch.mask.assign(static_cast<size_t>(batch.batch_size) * longest, 0);
  batch.lengths.resize(static_cast<size_t>(batch.batch_size));
  for (int r = 0; r < batch.batch_size; ++r) {
    const auto& row = rows[static_cast<size_t>(r)];
    const int len = static_cast<int>(std::min<size_t>(row.size(), static_cast<size_t>(max_len)));
    batch.lengths[static_cast<size_t>(r)] = len;
    for (int i = 0; i < len; ++i) {
      batch.ids[static_cast<size_t>(r) * longest + i] = row[static_cast<size_t>(i)];
      batch.mask[static_cast<size_t>(r) * longest + i] = 1;
    }
    // Truncated rows keep a closing EOS so decoders still see an end marker.
    if (static_cast<int>(row.size()) > max_len && len > 0) {
      batch.ids[static_cast<size_t>(r) * longest + len - 1] = kEos;
    }
  }
  return batch;
}

bool utf8_valid(std::string_view bytes) {
  size_t i = 0;
  while (i < bytes.size()) {
    const unsigned char c = static_cast<unsigned char>(bytes[i]);
    int extra = 0;
    if (c < 0x80) {
      extra = 0;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      if (c < 0xC2) return false;  // overlong
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      if (c > 0xF4) return false;
    } else {
      return false;
    }
    if (i + static_cast<size_t>(extra) >= bytes.size() && extra > 0) return false;
    for (int j = 1; j <= extra; ++j) {
      if ((static_cast<unsigned char>(bytes[i + static_cast<size_t>(j)]) & 0xC0) != 0x80) {
        return false;
      }
    }
    i += static_cast<size_t>(extra) + 1;
  }
  return true;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

ParallelCorpus load_parallel_corpus(const std::filesystem::path& source_path,
                                    const std::filesystem::path& target_path) {
  ParallelCorpus corpus;
  corpus.source = read_lines(source_path);
  corpus.target = read_lines(target_path);
  if (corpus.source.size() != corpus.target.size()) {
    throw AlignmentError("parallel corpus line counts differ: " +
                         std::to_string(corpus.source.size()) + " vs " +
                         std::to_string(corpus.target.size()));
  }
  auto check = [](const std::vector<std::string>& lines, const std::filesystem::path& path) {
    for (size_t i = 0; i < lines.size(); ++i) {
      if (!utf8_valid(lines[i])) {
        throw EncodingError(path.string() + " line " + std::to_string(i + 1) +
                            " is not valid UTF-8");
      }
      if (lines[i].empty()) {
        throw EmptyInputError(path.string() + " line " + std::to_string(i + 1) + " is empty");
      }
    }
  };
  check(corpus.source, source_path);
  check(corpus.target, target_path);
  return corpus;
}

std::vector<TokenBatch> make_batches(const std::vector<std::vector<int>>& id_lists,
                                     int batch_size, int max_len, uint64_t shuffle_seed) {
  if (batch_size < 1) throw ContractError("make_batches: batch_size must be >= 1");
  if (max_len < 2) throw ContractError("make_batches: max_len must be >= 2");
  std::vector<size_t> order(id_lists.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(shuffle_seed);
  rng.shuffle(order);

  std::vector<TokenBatch> batches;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
    std::vector<std::vector<int>> rows;
    rows.reserve(end - start);
    for (size_t i = start; i < end; ++i) rows.push_back(id_lists[order[i]]);
    batches.push_back(pack_batch(rows, max_len));
  }
  return batches;
}

std::vector<std::pair<TokenBatch, TokenBatch>> make_parallel_batches(
    const std::vector<std::vector<int>>& source_ids,
    const std::vector<std::vector<int>>& target_ids, int batch_size, int max_len,
    uint64_t shuffle_seed) {
  if (source_ids.size() != target_ids.size()) {
    throw AlignmentError("parallel batch: " + std::to_string(source_ids.size()) +
                         " source rows vs " + std::to_string(target_ids.size()) + " target rows");
  }
  if (batch_size < 1) throw ContractError("make_batches: batch_size must be >= 1");
  if (max_len < 2) throw ContractError("make_batches: max_len must be >= 2");
  std::vector<size_t> order(source_ids.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(shuffle_seed);
  rng.shuffle(order);

  std::vector<std::pair<TokenBatch, TokenBatch>> batches;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
    std::vector<std::vector<int>> src_rows, tgt_rows;
    src_rows.reserve(end - start);
    tgt_rows.reserve(end - start);
    for (size_t i = start; i < end; ++i) {
      src_rows.push_back(source_ids[order[i]]);
      tgt_rows.push_back(target_ids[order[i]]);
    }
    batches.emplace_back(pack_batch(src_rows, max_len), pack_batch(tgt_rows, max_len));
  }
  return batches;
}

}  // namespace balm::text
