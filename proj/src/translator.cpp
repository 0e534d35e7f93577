#include "balm/translator.hpp"

#include <chrono>
#include <cmath>

#include "balm/adam.hpp"

namespace balm::translator {

FfnParams FfnParams::init(int k, Rng& rng) {
  if (k <= 0) throw ConfigError("ffn: k must be positive");
  FfnParams p;
  p.k = k;
  const float bound = std::sqrt(6.0f / static_cast<float>(k + k));
  auto uniform_init = [&](std::vector<int> shape) {
    Tensor t = Tensor::zeros(shape, /*requires_grad=*/true);
    for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-bound, bound);
    return t;
  };
  p.w1 = uniform_init({k, k});
  p.b1 = Tensor::zeros({k}, true);
  p.w2 = uniform_init({k, k});
  p.b2 = Tensor::zeros({k}, true);
  return p;
}

std::vector<std::pair<std::string, Tensor>> FfnParams::named_parameters() const {
  return {{"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}};
}

std::vector<Tensor> FfnParams::parameters() const { return {w1, b1, w2, b2}; }

FfnParams FfnParams::clone() const {
  FfnParams p;
  p.k = k;
  p.w1 = w1.clone();
  p.b1 = b1.clone();
  p.w2 = w2.clone();
  p.b2 = b2.clone();
  return p;
}

bool FfnParams::finite() const {
  return w1.finite() && b1.finite() && w2.finite() && b2.finite();
}

Tensor translate_thought(const FfnParams& ffn, const Tensor& src_emb) {
  if (src_emb.rank() != 2 || src_emb.dim(1) != ffn.k) {
    throw DimensionError("translate_thought: embedding " + shape_str(src_emb.shape()) +
                         " does not match k=" + std::to_string(ffn.k));
  }
  Tensor hidden = ops::relu(ops::add_row_bias(ops::matmul(src_emb, ffn.w1), ffn.b1));
  return ops::add_row_bias(ops::matmul(hidden, ffn.w2), ffn.b2);
}

void AutoencoderModel::validate() const {
  if (enc.config.embed_dim != dec.k) {
    throw ConfigError("autoencoder: encoder k=" + std::to_string(enc.config.embed_dim) +
                      " but decoder k=" + std::to_string(dec.k));
  }
}

std::vector<Tensor> AutoencoderModel::parameters() const {
  std::vector<Tensor> out = enc.parameters();
  for (Tensor& t : dec.parameters()) out.push_back(t);
  return out;
}

void TranslatorModel::validate() const {
  if (src_enc.config.embed_dim != ffn.k || ffn.k != tgt_dec.k) {
    throw ConfigError("translator: k mismatch, encoder k=" +
                      std::to_string(src_enc.config.embed_dim) + ", ffn k=" +
                      std::to_string(ffn.k) + ", decoder k=" + std::to_string(tgt_dec.k));
  }
}

Tensor autoencode_loss(const AutoencoderModel& model, const text::TokenBatch& batch,
                       float dropout_rate, Rng* rng) {
  model.validate();
  Tensor hidden = (rng && dropout_rate > 0.0f)
                      ? encoder::encode(model.enc, batch, dropout_rate, *rng)
                      : encoder::encode(model.enc, batch);
  Tensor embedding = encoder::mean_pool(hidden, batch);
  return decoder::teacher_forced_loss(model.dec, embedding, batch);
}

std::vector<std::vector<int>> autoencode(const AutoencoderModel& model,
                                         const text::TokenBatch& batch, int max_len) {
  model.validate();
  Tensor embedding = encoder::mean_pool(encoder::encode(model.enc, batch), batch);
  const int k = model.k();
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<size_t>(batch.batch_size));
  for (int b = 0; b < batch.batch_size; ++b) {
    std::vector<float> row(embedding.data() + static_cast<size_t>(b) * k,
                           embedding.data() + static_cast<size_t>(b + 1) * k);
    Tensor emb = Tensor::from({1, k}, std::move(row));
    out.push_back(strip_special_ids(decoder::greedy_decode(model.dec, emb, max_len)));
  }
  return out;
}

Tensor translator_loss(const TranslatorModel& model, const text::TokenBatch& src_batch,
                       const text::TokenBatch& tgt_batch, float dropout_rate, Rng* rng) {
  model.validate();
  Tensor hidden = (rng && dropout_rate > 0.0f)
                      ? encoder::encode(model.src_enc, src_batch, dropout_rate, *rng)
                      : encoder::encode(model.src_enc, src_batch);
  Tensor src_emb = encoder::mean_pool(hidden, src_batch);
  Tensor tgt_emb = translate_thought(model.ffn, src_emb);
  return decoder::teacher_forced_loss(model.tgt_dec, tgt_emb, tgt_batch);
}

std::pair<std::vector<size_t>, std::vector<size_t>> validation_split(size_t n,
                                                                     float val_fraction,
                                                                     uint64_t seed) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed ^ 0x5eedULL);
  rng.shuffle(order);
  size_t val_n = static_cast<size_t>(static_cast<double>(n) * val_fraction);
  if (val_n == 0 && val_fraction > 0.0f && n > 1) val_n = 1;
  std::vector<size_t> val(order.begin(), order.begin() + static_cast<long>(val_n));
  std::vector<size_t> train(order.begin() + static_cast<long>(val_n), order.end());
  return {train, val};
}

namespace {

long target_count(const text::TokenBatch& batch) {
  long count = 0;
  for (int len : batch.lengths) count += len - 1;
  return count;
}

void check_finite_loss(float loss) {
  if (!std::isfinite(loss)) {
    throw Error("training diverged: non-finite loss " + std::to_string(loss));
  }
}

std::vector<std::vector<int>> gather(const std::vector<std::vector<int>>& rows,
                                     const std::vector<size_t>& idx) {
  std::vector<std::vector<int>> out;
  out.reserve(idx.size());
  for (size_t i : idx) out.push_back(rows[i]);
  return out;
}

}  // namespace

std::pair<AutoencoderModel, TrainHistory> train_autoencoder(
    const encoder::EncoderParams& encoder_init, const std::vector<std::vector<int>>& id_lists,
    const TrainConfig& config, uint64_t seed) {
  if (id_lists.empty()) throw EmptyInputError("train_autoencoder: empty corpus");

  Rng base(seed);
  AutoencoderModel model;
  model.enc = encoder_init.clone();
  Rng dec_rng = base.fork(0xdecULL);
  model.dec = decoder::DecoderParams::init(encoder_init.config.vocab_size,
                                           encoder_init.config.embed_dim, dec_rng);
  model.validate();

  auto [train_idx, val_idx] = validation_split(id_lists.size(), config.val_fraction, seed);
  if (train_idx.empty()) train_idx = val_idx;
  auto train_ids = gather(id_lists, train_idx);
  auto val_ids = gather(id_lists, val_idx);

  std::vector<Tensor> enc_params = model.enc.parameters();
  std::vector<Tensor> dec_params = model.dec.parameters();
  AdamState enc_opt(enc_params, {config.lr * config.encoder_lr_scale});
  AdamState dec_opt(dec_params, {config.lr});
  std::vector<Tensor> param_list = model.parameters();

  TrainHistory history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng drop_rng = base.fork(0xd809ULL + static_cast<uint64_t>(epoch));
    double loss_sum = 0.0;
    long loss_count = 0;
    auto batches = text::make_batches(train_ids, config.batch_size, config.max_len,
                                      seed * 2654435761ULL + static_cast<uint64_t>(epoch));
    for (const auto& batch : batches) {
      GradTape tape;
      TapeScope scope(tape);
      Tensor loss = autoencode_loss(model, batch, config.dropout_rate, &drop_rng);
      check_finite_loss(loss.item());
      tape.backward(loss);
      clip_global_norm(param_list, config.clip_norm);
      adam_step(enc_params, enc_opt);
      adam_step(dec_params, dec_opt);
      const long count = target_count(batch);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(count);
      loss_count += count;
    }

    double val_sum = 0.0;
    long val_count = 0;
    for (const auto& batch :
         text::make_batches(val_ids, config.batch_size, config.max_len, seed ^ 0x0a1bULL)) {
      Tensor loss = autoencode_loss(model, batch, 0.0f, nullptr);
      const long count = target_count(batch);
      val_sum += static_cast<double>(loss.item()) * static_cast<double>(count);
      val_count += count;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_count ? static_cast<float>(loss_sum / loss_count) : 0.0f;
    rec.val_loss = val_count ? static_cast<float>(val_sum / val_count) : rec.train_loss;
    check_finite_loss(rec.train_loss);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(rec);
    if (config.stop_at_val_loss >= 0.0f && rec.val_loss <= config.stop_at_val_loss) break;
  }
  return {std::move(model), std::move(history)};
}

std::pair<TranslatorModel, TrainHistory> train_translator(
    const encoder::EncoderParams& src_encoder_init,
    const decoder::DecoderParams& decoder_transfer,
    const std::vector<std::vector<int>>& source_ids,
    const std::vector<std::vector<int>>& target_ids, const TrainConfig& config, uint64_t seed) {
  if (source_ids.empty()) throw EmptyInputError("train_translator: empty corpus");
  if (source_ids.size() != target_ids.size()) {
    throw AlignmentError("train_translator: " + std::to_string(source_ids.size()) +
                         " source rows vs " + std::to_string(target_ids.size()) + " target rows");
  }

  Rng base(seed);
  TranslatorModel model;
  model.src_enc = src_encoder_init.clone();
  model.tgt_dec = decoder_transfer.clone();
  Rng ffn_rng = base.fork(0xffULL);
  model.ffn = FfnParams::init(src_encoder_init.config.embed_dim, ffn_rng);
  model.validate();

  auto [train_idx, val_idx] = validation_split(source_ids.size(), config.val_fraction, seed);
  if (train_idx.empty()) train_idx = val_idx;
  auto src_train = gather(source_ids, train_idx);
  auto tgt_train = gather(target_ids, train_idx);
  auto src_val = gather(source_ids, val_idx);
  auto tgt_val = gather(target_ids, val_idx);

  // The FFN is the only module training from scratch; the transferred
  // encoder and decoder fine-tune at a reduced rate.
  std::vector<Tensor> fresh_params = model.ffn.parameters();
  std::vector<Tensor> tuned_params = model.src_enc.parameters();
  if (!config.freeze_decoder) {
    for (Tensor& t : model.tgt_dec.parameters()) tuned_params.push_back(t);
  }
  AdamState fresh_opt(fresh_params, {config.lr});
  AdamState tuned_opt(tuned_params, {config.lr * config.fine_tune_lr_scale});

  std::vector<Tensor> clipped = fresh_params;
  for (Tensor& t : tuned_params) clipped.push_back(t);

  TrainHistory history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng drop_rng = base.fork(0xd809ULL + static_cast<uint64_t>(epoch));
    double loss_sum = 0.0;
    long loss_count = 0;
    auto batches =
        text::make_parallel_batches(src_train, tgt_train, config.batch_size, config.max_len,
                                    seed * 2654435761ULL + static_cast<uint64_t>(epoch));
    for (const auto& [src_batch, tgt_batch] : batches) {
      GradTape tape;
      TapeScope scope(tape);
      Tensor loss = translator_loss(model, src_batch, tgt_batch, config.dropout_rate, &drop_rng);
      check_finite_loss(loss.item());
      tape.backward(loss);
      clip_global_norm(clipped, config.clip_norm);
      adam_step(fresh_params, fresh_opt);
      adam_step(tuned_params, tuned_opt);
      const long count = target_count(tgt_batch);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(count);
      loss_count += count;
    }

    double val_sum = 0.0;
    long val_count = 0;
    for (const auto& [src_batch, tgt_batch] : text::make_parallel_batches(
             src_val, tgt_val, config.batch_size, config.max_len, seed ^ 0x0a1bULL)) {
      Tensor loss = translator_loss(model, src_batch, tgt_batch, 0.0f, nullptr);
      const long count = target_count(tgt_batch);
      val_sum += static_cast<double>(loss.item()) * static_cast<double>(count);
      val_count += count;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_count ? static_cast<float>(loss_sum / loss_count) : 0.0f;
    rec.val_loss = val_count ? static_cast<float>(val_sum / val_count) : rec.train_loss;
    check_finite_loss(rec.train_loss);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(rec);
    if (config.stop_at_val_loss >= 0.0f && rec.val_loss <= config.stop_at_val_loss) break;
  }
  return {std::move(model), std::move(history)};
}

std::vector<int> strip_special_ids(const std::vector<int>& ids) {
  std::vector<int> out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id >= text::kNumReserved) out.push_back(id);
  }
  return out;
}

std::vector<int> translate_ids(const TranslatorModel& model, const std::vector<int>& src_ids,
                               int max_len) {
  model.validate();
  text::TokenBatch batch = text::pack_batch({src_ids}, std::max<int>(2, max_len));
  Tensor src_emb = encoder::mean_pool(encoder::encode(model.src_enc, batch), batch);
  Tensor tgt_emb = translate_thought(model.ffn, src_emb);
  return strip_special_ids(decoder::greedy_decode(model.tgt_dec, tgt_emb, max_len));
}

std::string translate(const TranslatorModel& model, const std::string& sentence,
                      const text::Vocab& src_vocab, const text::Vocab& tgt_vocab, int max_len) {
  std::vector<std::string> tokens = text::tokenize(sentence);
  if (tokens.empty()) throw EmptyInputError("translate: sentence has no tokens");
  std::vector<int> ids = text::encode_ids(tokens, src_vocab, /*add_bos_eos=*/true);
  std::vector<int> out_ids = translate_ids(model, ids, max_len);
  return text::detokenize(text::decode_ids(out_ids, tgt_vocab));
}

std::string reconstruct(const AutoencoderModel& model, const std::string& sentence,
                        const text::Vocab& vocab, int max_len) {
  std::vector<std::string> tokens = text::tokenize(sentence);
  if (tokens.empty()) throw EmptyInputError("reconstruct: sentence has no tokens");
  std::vector<int> ids = text::encode_ids(tokens, vocab, /*add_bos_eos=*/true);
  text::TokenBatch batch = text::pack_batch({ids}, std::max<int>(2, max_len));
  Tensor emb = encoder::mean_pool(encoder::encode(model.enc, batch), batch);
  return text::detokenize(
      text::decode_ids(strip_special_ids(decoder::greedy_decode(model.dec, emb, max_len)), vocab));
}

}  // namespace balm::translator
