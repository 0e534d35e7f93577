#include "balm/decoder.hpp"

#include <algorithm>

namespace balm::decoder {

namespace {

Tensor normal_init(std::vector<int> shape, Rng& rng, float stddev = 0.02f) {
  Tensor t = Tensor::zeros(shape, /*requires_grad=*/true);
  for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.normal(0.0f, stddev);
  return t;
}

}  // namespace

DecoderParams DecoderParams::init(int vocab_size, int k, Rng& rng) {
  if (vocab_size <= 0 || k <= 0) throw ConfigError("decoder: vocab_size and k must be positive");
  DecoderParams p;
  p.vocab_size = vocab_size;
  p.k = k;
  p.word_emb = normal_init({vocab_size, k}, rng);
  p.wz = normal_init({k, k}, rng);
  p.uz = normal_init({k, k}, rng);
  p.bz = Tensor::zeros({k}, true);
  p.wr = normal_init({k, k}, rng);
  p.ur = normal_init({k, k}, rng);
  p.br = Tensor::zeros({k}, true);
  p.wh = normal_init({k, k}, rng);
  p.uh = normal_init({k, k}, rng);
  p.bh = Tensor::zeros({k}, true);
  p.out_w = normal_init({k, vocab_size}, rng);
  p.out_b = Tensor::zeros({vocab_size}, true);
  return p;
}

std::vector<std::pair<std::string, Tensor>> DecoderParams::named_parameters() const {
  return {{"word_emb", word_emb}, {"wz", wz}, {"uz", uz}, {"bz", bz},
          {"wr", wr},             {"ur", ur}, {"br", br}, {"wh", wh},
          {"uh", uh},             {"bh", bh}, {"out_w", out_w}, {"out_b", out_b}};
}

std::vector<Tensor> DecoderParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, tensor] : named_parameters()) out.push_back(tensor);
  return out;
}

DecoderParams DecoderParams::clone() const {
  DecoderParams p;
  p.vocab_size = vocab_size;
  p.k = k;
  p.word_emb = word_emb.clone();
  p.wz = wz.clone();
  p.uz = uz.clone();
  p.bz = bz.clone();
  p.wr = wr.clone();
  p.ur = ur.clone();
  p.br = br.clone();
  p.wh = wh.clone();
  p.uh = uh.clone();
  p.bh = bh.clone();
  p.out_w = out_w.clone();
  p.out_b = out_b.clone();
  return p;
}

bool DecoderParams::finite() const {
  for (const Tensor& t : parameters()) {
    if (!t.finite()) return false;
  }
  return true;
}

Tensor gru_cell(const DecoderParams& params, const Tensor& x, const Tensor& h) {
  if (x.rank() != 2 || h.rank() != 2 || x.shape() != h.shape() || x.dim(1) != params.k) {
    throw DimensionError("gru_cell: expected [B x " + std::to_string(params.k) + "] inputs, got " +
                         shape_str(x.shape()) + " and " + shape_str(h.shape()));
  }
  Tensor z = ops::sigmoid(ops::add_row_bias(
      ops::add(ops::matmul(x, params.wz), ops::matmul(h, params.uz)), params.bz));
  Tensor r = ops::sigmoid(ops::add_row_bias(
      ops::add(ops::matmul(x, params.wr), ops::matmul(h, params.ur)), params.br));
  Tensor cand = ops::tanh(ops::add_row_bias(
      ops::add(ops::matmul(x, params.wh), ops::matmul(ops::mul(r, h), params.uh)), params.bh));
  // (1-z)*h + z*cand, written as h + z*(cand - h).
  return ops::add(h, ops::mul(z, ops::sub(cand, h)));
}

std::pair<Tensor, Tensor> step_logits(const DecoderParams& params, const std::vector<int>& ids,
                                      const Tensor& h) {
  Tensor x = ops::embedding_lookup(params.word_emb, ids);
  Tensor h_next = gru_cell(params, x, h);
  Tensor logits = ops::add_row_bias(ops::matmul(h_next, params.out_w), params.out_b);
  return {logits, h_next};
}

Tensor teacher_forced_loss(const DecoderParams& params, const Tensor& embedding,
                           const text::TokenBatch& targets) {
  const int B = targets.batch_size;
  const int L = targets.max_len;
  if (embedding.rank() != 2 || embedding.dim(0) != B || embedding.dim(1) != params.k) {
    throw DimensionError("teacher_forced_loss: embedding " + shape_str(embedding.shape()) +
                         " does not match batch of " + std::to_string(B) + " and k=" +
                         std::to_string(params.k));
  }
  for (int b = 0; b < B; ++b) {
    const int len = targets.lengths[static_cast<size_t>(b)];
    if (len < 2 || targets.at(b, 0) != text::kBos || targets.at(b, len - 1) != text::kEos) {
      throw ContractError("teacher_forced_loss: target row " + std::to_string(b) +
                          " must begin with BOS and end with EOS");
    }
  }
  // Steps past every row's last real target contribute nothing; skipping them
  // keeps the loss bitwise invariant to extra padding.
  int last_step = 0;
  for (int b = 0; b < B; ++b) last_step = std::max(last_step, targets.lengths[static_cast<size_t>(b)] - 1);

  Tensor h = embedding;
  Tensor total;
  long count = 0;
  std::vector<int> inputs(static_cast<size_t>(B));
  std::vector<int> step_targets(static_cast<size_t>(B));
  for (int t = 0; t < last_step; ++t) {
    for (int b = 0; b < B; ++b) {
      inputs[static_cast<size_t>(b)] = targets.at(b, t);
      step_targets[static_cast<size_t>(b)] = targets.at(b, t + 1);
    }
    auto [logits, h_next] = step_logits(params, inputs, h);
    h = h_next;
    auto [step_sum, step_count] = ops::cross_entropy_sum(logits, step_targets, text::kPad);
    if (step_count == 0) continue;
    count += step_count;
    total = total.defined() ? ops::add(total, step_sum) : step_sum;
  }
  if (!total.defined() || count == 0) {
    throw EmptyInputError("teacher_forced_loss: no target positions");
  }
  return ops::scale(total, 1.0f / static_cast<float>(count));
}

std::vector<int> greedy_decode(const DecoderParams& params, const Tensor& embedding,
                               int max_len) {
  if (max_len < 1) throw ContractError("greedy_decode: max_len must be >= 1");
  Tensor h = embedding.rank() == 1 ? embedding.reshape({1, embedding.dim(0)}) : embedding;
  if (h.rank() != 2 || h.dim(0) != 1 || h.dim(1) != params.k) {
    throw DimensionError("greedy_decode: embedding must be a single k-vector, got " +
                         shape_str(embedding.shape()));
  }
  std::vector<int> out;
  std::vector<int> input{text::kBos};
  for (int step = 0; step < max_len; ++step) {
    auto [logits, h_next] = step_logits(params, input, h);
    h = h_next;
    int best = -1;
    const float* row = logits.data();
    for (int j = 0; j < params.vocab_size; ++j) {
      if (j == text::kPad || j == text::kBos) continue;
      if (best < 0 || row[j] > row[best]) best = j;
    }
    if (best == text::kEos) break;
    out.push_back(best);
    input[0] = best;
  }
  return out;
}

}  // namespace balm::decoder
