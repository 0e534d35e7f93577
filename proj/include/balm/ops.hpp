#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "balm/rng.hpp"
#include "balm/tensor.hpp"

// Differentiable tensor operations. Every op runs eagerly; when a GradTape is
// active (TapeScope) and an input requires gradients, the op records a reverse
// step onto it. Reductions accumulate in double for stable gradient checks.

namespace balm::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);

// x[... x d] + bias[d], broadcast over leading dimensions.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

// a[m x n] * b[n x p]
Tensor matmul(const Tensor& a, const Tensor& b);
// a[m x n] * b[p x n]^T  (tied output projections)
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// Batched: a[N x r x c] * b[N x c x p]
Tensor bmm(const Tensor& a, const Tensor& b);
// Batched: a[N x r x c] * b[N x p x c]^T
Tensor bmm_nt(const Tensor& a, const Tensor& b);

// [B x L x H x D] -> [B x H x L x D]
Tensor swap_middle(const Tensor& x);

// table[V x k] gathered by ids -> [ids.size() x k]
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Numerically stabilized softmax along `axis` (negative counts from the back).
Tensor softmax(const Tensor& x, int axis = -1);

// Normalizes the last axis to mean 0 / variance 1 (biased), then applies the
// affine gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);

// scores[B*H x L x L]; key positions with key_mask[b*L + j] == 0 get weight 0.
Tensor masked_attention_softmax(const Tensor& scores, const std::vector<uint8_t>& key_mask,
                                int batch, int heads);

// hidden[B x L x k] -> [B x k]; mean over mask-true positions per row.
// A row with no true position is an EmptyInputError.
Tensor masked_mean_pool(const Tensor& hidden, const std::vector<uint8_t>& mask);

// Inverted dropout; rate == 0 is the identity.
Tensor dropout(const Tensor& x, float rate, Rng& rng);

// Sum of -ln softmax(logits)[target] over targets != ignore_id, plus the
// count of contributing positions.
std::pair<Tensor, int> cross_entropy_sum(const Tensor& logits, const std::vector<int>& targets,
                                         int ignore_id);

// Mean over non-ignored positions; EmptyInputError when every target is ignored.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_id);

Tensor sum(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);

// Runs reverse accumulation for a scalar loss produced under `tape`.
void backward(const Tensor& loss, GradTape& tape);

}  // namespace balm::ops
