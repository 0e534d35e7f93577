#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "balm/error.hpp"

namespace balm::synthetic {

// Cipher languages give acceptance tests a known-optimal translation: the
// target is a bijective word substitution of the source, optionally with a
// fixed adjective/noun swap so the model also has to learn local reordering.
enum class CipherKind { identity, substitution, substitution_swap };

struct CipherSpec {
  CipherKind kind = CipherKind::identity;
  uint64_t cipher_seed = 1;
};

CipherKind parse_cipher_kind(const std::string& name);

struct Corpus {
  std::vector<std::string> source;
  std::vector<std::string> target;
};

// Content-word lexicon trimmed to roughly vocab_size entries ('.' excluded).
std::vector<std::string> lexicon(int vocab_size);

// Source word -> target word bijection over the lexicon; '.' maps to itself.
std::unordered_map<std::string, std::string> cipher_map(int vocab_size, const CipherSpec& spec);

// Subject-verb-object declaratives from a small template grammar, lengths 3
// to 10 tokens, plus the ciphered target side. Deterministic per seed.
Corpus make_synthetic(int vocab_size, int n_sentences, uint64_t seed, const CipherSpec& spec);

// Inverts the token substitution (not the reordering); tests use it to check
// the cipher is bijective.
std::string decipher(const std::string& target_line, int vocab_size, const CipherSpec& spec);

}  // namespace balm::synthetic
