#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "balm/decoder.hpp"
#include "balm/encoder.hpp"
#include "balm/history.hpp"
#include "balm/tensor.hpp"
#include "balm/text.hpp"

namespace balm::translator {

// The thought translator F: a k x k x k feedforward net with a rectified
// hidden layer and a linear output.
struct FfnParams {
  int k = 0;
  Tensor w1, b1;  // k x k, k
  Tensor w2, b2;  // k x k, k

  static FfnParams init(int k, Rng& rng);

  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  FfnParams clone() const;
  bool finite() const;
};

Tensor translate_thought(const FfnParams& ffn, const Tensor& src_emb);

// A = encode -> mean_pool -> decode, one language.
struct AutoencoderModel {
  encoder::EncoderParams enc;
  decoder::DecoderParams dec;

  int k() const { return enc.config.embed_dim; }
  void validate() const;
  std::vector<Tensor> parameters() const;
};

// T = encode(source) -> mean_pool -> F -> decode(target).
struct TranslatorModel {
  encoder::EncoderParams src_enc;
  FfnParams ffn;
  decoder::DecoderParams tgt_dec;

  int k() const { return src_enc.config.embed_dim; }
  void validate() const;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  float lr = 1e-3f;
  // Transferred modules fine-tune at lr * fine_tune_lr_scale.
  float fine_tune_lr_scale = 0.1f;
  // Autoencoder phase: the pretrained encoder fine-tunes at lr *
  // encoder_lr_scale while the fresh decoder trains at full lr.
  float encoder_lr_scale = 1.0f;
  float dropout_rate = 0.1f;
  int max_len = 64;
  float clip_norm = 1.0f;
  float val_fraction = 0.1f;
  // Stop once validation loss falls to this value; negative disables.
  float stop_at_val_loss = -1.0f;
  bool freeze_decoder = false;
};

// The deterministic train/validation index split the trainers use: the same
// (n, val_fraction, seed) always yields the same partition, so callers can
// evaluate on exactly the rows a training run held out.
std::pair<std::vector<size_t>, std::vector<size_t>> validation_split(size_t n,
                                                                     float val_fraction,
                                                                     uint64_t seed);

// Training objective for one batch; rng enables dropout (nullptr = none).
Tensor autoencode_loss(const AutoencoderModel& model, const text::TokenBatch& batch,
                       float dropout_rate, Rng* rng);

// Greedy reconstruction of each row, special ids stripped.
std::vector<std::vector<int>> autoencode(const AutoencoderModel& model,
                                         const text::TokenBatch& batch, int max_len);

Tensor translator_loss(const TranslatorModel& model, const text::TokenBatch& src_batch,
                       const text::TokenBatch& tgt_batch, float dropout_rate, Rng* rng);

// Fine-tunes a copy of the pretrained encoder jointly with a fresh decoder on
// the reconstruction objective. Deterministic per seed.
std::pair<AutoencoderModel, TrainHistory> train_autoencoder(
    const encoder::EncoderParams& encoder_init, const std::vector<std::vector<int>>& id_lists,
    const TrainConfig& config, uint64_t seed);

// The FFN trains from scratch; the source encoder and transferred decoder
// fine-tune at the reduced rate (or freeze, for ablations).
std::pair<TranslatorModel, TrainHistory> train_translator(
    const encoder::EncoderParams& src_encoder_init,
    const decoder::DecoderParams& decoder_transfer,
    const std::vector<std::vector<int>>& source_ids,
    const std::vector<std::vector<int>>& target_ids, const TrainConfig& config, uint64_t seed);

// Source sentence ids (with BOS/EOS) -> target token ids, special ids stripped.
std::vector<int> translate_ids(const TranslatorModel& model, const std::vector<int>& src_ids,
                               int max_len);

// tokenize -> ids -> encode -> pool -> F -> greedy decode -> detokenize.
std::string translate(const TranslatorModel& model, const std::string& sentence,
                      const text::Vocab& src_vocab, const text::Vocab& tgt_vocab, int max_len);

// Greedy reconstruction of one sentence through an autoencoder.
std::string reconstruct(const AutoencoderModel& model, const std::string& sentence,
                        const text::Vocab& vocab, int max_len);

std::vector<int> strip_special_ids(const std::vector<int>& ids);

}  // namespace balm::translator
