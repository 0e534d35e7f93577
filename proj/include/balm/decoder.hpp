#pragma once

#include <string>
#include <utility>
#include <vector>

#include "balm/ops.hpp"
#include "balm/rng.hpp"
#include "balm/tensor.hpp"
#include "balm/text.hpp"

namespace balm::decoder {

// Single-layer GRU language decoder. The hidden size equals the embedding
// size k, so a sentence embedding can enter directly as the initial hidden
// state.
struct DecoderParams {
  int vocab_size = 0;
  int k = 0;
  Tensor word_emb;              // vocab_size x k, decoder-private embedding
  Tensor wz, uz, bz;            // update gate
  Tensor wr, ur, br;            // reset gate
  Tensor wh, uh, bh;            // candidate state
  Tensor out_w, out_b;          // k x vocab_size projection to logits

  static DecoderParams init(int vocab_size, int k, Rng& rng);

  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  DecoderParams clone() const;
  bool finite() const;
};

// z = sigmoid(x Wz + h Uz + bz); r = sigmoid(x Wr + h Ur + br);
// cand = tanh(x Wh + (r*h) Uh + bh); h' = (1-z)*h + z*cand.
Tensor gru_cell(const DecoderParams& params, const Tensor& x, const Tensor& h);

// Embeds ids, advances the GRU, projects to vocabulary logits.
std::pair<Tensor, Tensor> step_logits(const DecoderParams& params, const std::vector<int>& ids,
                                      const Tensor& h);

// Full teacher forcing: the input at step t is the ground-truth token t, the
// target is token t+1, PAD targets are ignored. Target rows must start with
// BOS and end with EOS before padding; h0 is the sentence embedding.
Tensor teacher_forced_loss(const DecoderParams& params, const Tensor& embedding,
                           const text::TokenBatch& targets);

// Greedy argmax decoding from a single embedding (shape [k] or [1 x k]).
// PAD and BOS are never emitted; ties break toward the lowest id; stops on
// EOS (excluded from the result) or after max_len tokens.
std::vector<int> greedy_decode(const DecoderParams& params, const Tensor& embedding,
                               int max_len);

}  // namespace balm::decoder
