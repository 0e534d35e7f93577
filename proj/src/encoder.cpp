#include "balm/encoder.hpp"

#include <chrono>
#include <cmath>

#include "balm/adam.hpp"

namespace balm::encoder {

namespace {

Tensor normal_init(std::vector<int> shape, Rng& rng, float stddev = 0.02f) {
  Tensor t = Tensor::zeros(shape, /*requires_grad=*/true);
  for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.normal(0.0f, stddev);
  return t;
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size <= 0) throw ConfigError("encoder: vocab_size must be positive");
  if (embed_dim <= 0 || num_layers <= 0 || num_heads <= 0 || ffn_hidden <= 0 ||
      max_positions <= 0) {
    throw ConfigError("encoder: all dimensions must be positive");
  }
  if (embed_dim % num_heads != 0) {
    throw ConfigError("encoder: embed_dim " + std::to_string(embed_dim) +
                      " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (dropout_rate < 0.0f || dropout_rate >= 1.0f) {
    throw ConfigError("encoder: dropout_rate must be in [0, 1)");
  }
}

EncoderParams EncoderParams::init(const EncoderConfig& config, Rng& rng) {
  config.validate();
  const int k = config.embed_dim;
  EncoderParams p;
  p.config = config;
  p.tok_emb = normal_init({config.vocab_size, k}, rng);
  p.pos_emb = normal_init({config.max_positions, k}, rng);
  p.layers.resize(static_cast<size_t>(config.num_layers));
  for (auto& layer : p.layers) {
    layer.wq = normal_init({k, k}, rng);
    layer.wk = normal_init({k, k}, rng);
    layer.wv = normal_init({k, k}, rng);
    layer.wo = normal_init({k, k}, rng);
    layer.ffn_w1 = normal_init({k, config.ffn_hidden}, rng);
    layer.ffn_b1 = Tensor::zeros({config.ffn_hidden}, true);
    layer.ffn_w2 = normal_init({config.ffn_hidden, k}, rng);
    layer.ffn_b2 = Tensor::zeros({k}, true);
    layer.ln1_g = Tensor::full({k}, 1.0f, true);
    layer.ln1_b = Tensor::zeros({k}, true);
    layer.ln2_g = Tensor::full({k}, 1.0f, true);
    layer.ln2_b = Tensor::zeros({k}, true);
  }
  p.final_ln_g = Tensor::full({k}, 1.0f, true);
  p.final_ln_b = Tensor::zeros({k}, true);
  return p;
}

std::vector<std::pair<std::string, Tensor>> EncoderParams::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> named;
  named.emplace_back("tok_emb", tok_emb);
  named.emplace_back("pos_emb", pos_emb);
  for (size_t i = 0; i < layers.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i) + ".";
    const EncoderLayerParams& l = layers[i];
    named.emplace_back(prefix + "wq", l.wq);
    named.emplace_back(prefix + "wk", l.wk);
    named.emplace_back(prefix + "wv", l.wv);
    named.emplace_back(prefix + "wo", l.wo);
    named.emplace_back(prefix + "ffn_w1", l.ffn_w1);
    named.emplace_back(prefix + "ffn_b1", l.ffn_b1);
    named.emplace_back(prefix + "ffn_w2", l.ffn_w2);
    named.emplace_back(prefix + "ffn_b2", l.ffn_b2);
    named.emplace_back(prefix + "ln1_g", l.ln1_g);
    named.emplace_back(prefix + "ln1_b", l.ln1_b);
    named.emplace_back(prefix + "ln2_g", l.ln2_g);
    named.emplace_back(prefix + "ln2_b", l.ln2_b);
  }
  named.emplace_back("final_ln_g", final_ln_g);
  named.emplace_back("final_ln_b", final_ln_b);
  return named;
}

std::vector<Tensor> EncoderParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, tensor] : named_parameters()) out.push_back(tensor);
  return out;
}

EncoderParams EncoderParams::clone() const {
  EncoderParams p;
  p.config = config;
  p.tok_emb = tok_emb.clone();
  p.pos_emb = pos_emb.clone();
  p.layers.resize(layers.size());
  for (size_t i = 0; i < layers.size(); ++i) {
    const EncoderLayerParams& s = layers[i];
    EncoderLayerParams& d = p.layers[i];
    d.wq = s.wq.clone();
    d.wk = s.wk.clone();
    d.wv = s.wv.clone();
    d.wo = s.wo.clone();
    d.ffn_w1 = s.ffn_w1.clone();
    d.ffn_b1 = s.ffn_b1.clone();
    d.ffn_w2 = s.ffn_w2.clone();
    d.ffn_b2 = s.ffn_b2.clone();
    d.ln1_g = s.ln1_g.clone();
    d.ln1_b = s.ln1_b.clone();
    d.ln2_g = s.ln2_g.clone();
    d.ln2_b = s.ln2_b.clone();
  }
  p.final_ln_g = final_ln_g.clone();
  p.final_ln_b = final_ln_b.clone();
  return p;
}

bool EncoderParams::finite() const {
  for (const Tensor& t : parameters()) {
    if (!t.finite()) return false;
  }
  return true;
}

namespace {

Tensor encode_impl(const EncoderParams& params, const text::TokenBatch& batch,
                   float dropout_rate, Rng* rng) {
  const EncoderConfig& cfg = params.config;
  const int B = batch.batch_size;
  const int L = batch.max_len;
  const int k = cfg.embed_dim;
  const int H = cfg.num_heads;
  const int D = k / H;
  if (L > cfg.max_positions) {
    throw SequenceLengthError("sequence length " + std::to_string(L) +
                              " exceeds max_positions " + std::to_string(cfg.max_positions));
  }
  for (int id : batch.ids) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw VocabError("encode: token id " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(cfg.vocab_size));
    }
  }

  std::vector<int> pos_ids(static_cast<size_t>(B) * L);
  for (int b = 0; b < B; ++b) {
    for (int l = 0; l < L; ++l) pos_ids[static_cast<size_t>(b) * L + l] = l;
  }

  auto drop = [&](const Tensor& t) {
    return (rng && dropout_rate > 0.0f) ? ops::dropout(t, dropout_rate, *rng) : t;
  };

  Tensor x = ops::add(ops::embedding_lookup(params.tok_emb, batch.ids),
                      ops::embedding_lookup(params.pos_emb, pos_ids));  // (B*L) x k
  x = drop(x);

  const float attn_scale = 1.0f / std::sqrt(static_cast<float>(D));
  for (const EncoderLayerParams& layer : params.layers) {
    // Attention sublayer, pre-layer-norm with residual.
    Tensor n1 = ops::layer_norm(x, layer.ln1_g, layer.ln1_b);
    Tensor q = ops::swap_middle(ops::matmul(n1, layer.wq).reshape({B, L, H, D}));
    Tensor kk = ops::swap_middle(ops::matmul(n1, layer.wk).reshape({B, L, H, D}));
    Tensor v = ops::swap_middle(ops::matmul(n1, layer.wv).reshape({B, L, H, D}));
    Tensor scores = ops::scale(
        ops::bmm_nt(q.reshape({B * H, L, D}), kk.reshape({B * H, L, D})), attn_scale);
    Tensor attn = ops::masked_attention_softmax(scores, batch.mask, B, H);
    Tensor ctx = ops::bmm(attn, v.reshape({B * H, L, D}));
    Tensor merged = ops::swap_middle(ctx.reshape({B, H, L, D})).reshape({B * L, k});
    x = ops::add(x, drop(ops::matmul(merged, layer.wo)));

    // Position-wise feedforward sublayer.
    Tensor n2 = ops::layer_norm(x, layer.ln2_g, layer.ln2_b);
    Tensor f = ops::relu(ops::add_row_bias(ops::matmul(n2, layer.ffn_w1), layer.ffn_b1));
    f = ops::add_row_bias(ops::matmul(f, layer.ffn_w2), layer.ffn_b2);
    x = ops::add(x, drop(f));
  }
  x = ops::layer_norm(x, params.final_ln_g, params.final_ln_b);
  return x.reshape({B, L, k});
}

}  // namespace

Tensor encode(const EncoderParams& params, const text::TokenBatch& batch) {
  return encode_impl(params, batch, 0.0f, nullptr);
}

Tensor encode(const EncoderParams& params, const text::TokenBatch& batch, float dropout_rate,
              Rng& rng) {
  return encode_impl(params, batch, dropout_rate, &rng);
}

Tensor mean_pool(const Tensor& hidden, const text::TokenBatch& batch) {
  return ops::masked_mean_pool(hidden, batch.mask);
}

namespace {

struct MaskedBatch {
  text::TokenBatch inputs;
  std::vector<int> targets;  // kPad at unselected positions
  int selected = 0;
};

MaskedBatch apply_mlm_mask(const text::TokenBatch& batch, float mask_prob, Rng& rng) {
  MaskedBatch mb;
  mb.inputs = batch;
  mb.targets.assign(batch.ids.size(), text::kPad);
  for (size_t i = 0; i < batch.ids.size(); ++i) {
    const bool maskable = batch.mask[i] != 0 && batch.ids[i] >= text::kNumReserved;
    if (maskable && rng.bernoulli(mask_prob)) {
      mb.targets[i] = batch.ids[i];
      mb.inputs.ids[i] = text::kMask;
      ++mb.selected;
    }
  }
  return mb;
}

std::pair<std::vector<std::vector<int>>, std::vector<std::vector<int>>> split_train_val(
    const std::vector<std::vector<int>>& id_lists, float val_fraction, uint64_t seed) {
  std::vector<size_t> order(id_lists.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  size_t val_n = static_cast<size_t>(static_cast<double>(id_lists.size()) * val_fraction);
  if (val_n == 0 && val_fraction > 0.0f && id_lists.size() > 1) val_n = 1;
  std::pair<std::vector<std::vector<int>>, std::vector<std::vector<int>>> out;
  for (size_t i = 0; i < order.size(); ++i) {
    (i < val_n ? out.second : out.first).push_back(id_lists[order[i]]);
  }
  return out;
}

}  // namespace

TrainHistory mlm_pretrain(EncoderParams& params, const std::vector<std::vector<int>>& id_lists,
                          const MlmConfig& config, uint64_t seed) {
  if (id_lists.empty()) throw EmptyInputError("mlm_pretrain: empty corpus");
  params.config.validate();

  auto [train_ids, val_ids] = split_train_val(id_lists, config.val_fraction, seed ^ 0x5eedULL);
  if (train_ids.empty()) train_ids = id_lists;

  std::vector<Tensor> param_list = params.parameters();
  AdamState opt(param_list, {config.lr});
  Rng base(seed);

  auto run_epoch = [&](const std::vector<std::vector<int>>& ids, bool train, int epoch,
                       int* skipped) -> float {
    double loss_sum = 0.0;
    long loss_count = 0;
    uint64_t stream = train ? (0x7121aULL + static_cast<uint64_t>(epoch))
                            : (0xe7a1ULL + static_cast<uint64_t>(epoch));
    Rng rng = base.fork(stream);
    auto batches = text::make_batches(ids, config.batch_size, config.max_len,
                                      seed * 1315423911ULL + static_cast<uint64_t>(epoch));
    for (const auto& batch : batches) {
      MaskedBatch mb = apply_mlm_mask(batch, config.mask_prob, rng);
      if (mb.selected == 0) {
        if (skipped) ++*skipped;
        continue;
      }
      const int B = batch.batch_size, L = batch.max_len, k = params.config.embed_dim;
      if (train) {
        GradTape tape;
        TapeScope scope(tape);
        Tensor hidden = encode(params, mb.inputs, config.dropout_rate, rng);
        Tensor logits = ops::matmul_nt(hidden.reshape({B * L, k}), params.tok_emb);
        auto [total, count] = ops::cross_entropy_sum(logits, mb.targets, text::kPad);
        Tensor loss = ops::scale(total, 1.0f / static_cast<float>(count));
        tape.backward(loss);
        clip_global_norm(param_list, config.clip_norm);
        adam_step(param_list, opt);
        loss_sum += static_cast<double>(total.item());
        loss_count += count;
      } else {
        Tensor hidden = encode(params, mb.inputs);
        Tensor logits = ops::matmul_nt(hidden.reshape({B * L, k}), params.tok_emb);
        auto [total, count] = ops::cross_entropy_sum(logits, mb.targets, text::kPad);
        loss_sum += static_cast<double>(total.item());
        loss_count += count;
      }
    }
    return loss_count > 0 ? static_cast<float>(loss_sum / static_cast<double>(loss_count))
                          : 0.0f;
  };

  TrainHistory history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = run_epoch(train_ids, /*train=*/true, epoch, &rec.skipped_batches);
    rec.val_loss = val_ids.empty() ? rec.train_loss
                                   : run_epoch(val_ids, /*train=*/false, epoch, nullptr);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(rec);
  }
  return history;
}

double mlm_masked_accuracy(const EncoderParams& params,
                           const std::vector<std::vector<int>>& id_lists, float mask_prob,
                           uint64_t seed) {
  Rng rng(seed);
  auto batches = text::make_batches(id_lists, 32, params.config.max_positions, seed);
  long correct = 0, total = 0;
  for (const auto& batch : batches) {
    MaskedBatch mb = apply_mlm_mask(batch, mask_prob, rng);
    if (mb.selected == 0) continue;
    const int B = batch.batch_size, L = batch.max_len, k = params.config.embed_dim;
    Tensor hidden = encode(params, mb.inputs);
    Tensor logits = ops::matmul_nt(hidden.reshape({B * L, k}), params.tok_emb);
    const int V = params.config.vocab_size;
    for (size_t i = 0; i < mb.targets.size(); ++i) {
      if (mb.targets[i] == text::kPad) continue;
      const float* row = logits.data() + i * static_cast<size_t>(V);
      int best = 0;
      for (int j = 1; j < V; ++j) {
        if (row[j] > row[best]) best = j;
      }
      correct += (best == mb.targets[i]) ? 1 : 0;
      ++total;
    }
  }
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

}  // namespace balm::encoder
