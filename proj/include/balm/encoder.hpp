#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "balm/history.hpp"
#include "balm/ops.hpp"
#include "balm/rng.hpp"
#include "balm/tensor.hpp"
#include "balm/text.hpp"

namespace balm::encoder {

struct EncoderConfig {
  int vocab_size = 0;
  int embed_dim = 64;
  int num_layers = 2;
  int num_heads = 4;
  int ffn_hidden = 128;
  int max_positions = 64;
  float dropout_rate = 0.1f;

  void validate() const;
};

struct EncoderLayerParams {
  Tensor wq, wk, wv, wo;        // k x k projections
  Tensor ffn_w1, ffn_b1;        // k x ffn_hidden, ffn_hidden
  Tensor ffn_w2, ffn_b2;        // ffn_hidden x k, k
  Tensor ln1_g, ln1_b;          // attention sublayer norm
  Tensor ln2_g, ln2_b;          // feedforward sublayer norm
};

// Pre-layer-norm transformer encoder with learned position embeddings.
struct EncoderParams {
  EncoderConfig config;
  Tensor tok_emb;               // vocab_size x k
  Tensor pos_emb;               // max_positions x k
  std::vector<EncoderLayerParams> layers;
  Tensor final_ln_g, final_ln_b;

  static EncoderParams init(const EncoderConfig& config, Rng& rng);

  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  EncoderParams clone() const;
  bool finite() const;
};

// Final-layer hidden states, shape [B x L x k]. PAD key positions are masked
// out of every attention row, so real-token states do not depend on padding.
Tensor encode(const EncoderParams& params, const text::TokenBatch& batch);
// Training variant with inverted dropout on embeddings and sublayer outputs.
Tensor encode(const EncoderParams& params, const text::TokenBatch& batch, float dropout_rate,
              Rng& rng);

// Mean of hidden vectors at mask-true positions, per row: the sentence
// embedding, shape [B x k].
Tensor mean_pool(const Tensor& hidden, const text::TokenBatch& batch);

struct MlmConfig {
  int epochs = 30;
  int batch_size = 32;
  float lr = 1e-3f;
  float mask_prob = 0.15f;
  int max_len = 64;
  float dropout_rate = 0.1f;
  float clip_norm = 1.0f;
  float val_fraction = 0.1f;
};

// Masked-language-model pretraining: each non-special position is selected
// independently with mask_prob, replaced by MASK, and predicted through the
// transposed token embedding. Mutates params in place; deterministic per seed.
TrainHistory mlm_pretrain(EncoderParams& params, const std::vector<std::vector<int>>& id_lists,
                          const MlmConfig& config, uint64_t seed);

// Top-1 accuracy on masked positions, for probing pretraining quality.
double mlm_masked_accuracy(const EncoderParams& params,
                           const std::vector<std::vector<int>>& id_lists, float mask_prob,
                           uint64_t seed);

}  // namespace balm::encoder
