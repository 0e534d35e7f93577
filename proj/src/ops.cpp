#include "balm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "balm/kernels.hpp"

namespace balm::ops {

namespace {

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (!active_tape()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Marks `out` differentiable, allocates the needed gradient buffers and
// returns the tensors whose grads the reverse step will touch.
std::vector<Tensor> prepare(Tensor& out, std::initializer_list<Tensor*> inputs) {
  out.set_requires_grad(true);
  out.ensure_grad();
  std::vector<Tensor> touched{out};
  for (Tensor* t : inputs) {
    if (t->requires_grad()) {
      t->ensure_grad();
      touched.push_back(*t);
    }
  }
  return touched;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.at(i) + b.at(i);
  if (n == 1 && a.has_scalar_acc() && b.has_scalar_acc()) {
    out.set_scalar_acc(a.item_f64() + b.item_f64());
  }
  if (recording({&a, &b})) {
    Tensor ac = a, bc = b;
    auto touched = prepare(out, {&ac, &bc});
    active_tape()->record(std::move(touched), [out, ac, bc]() mutable {
      const size_t m = out.numel();
      if (ac.requires_grad()) {
        for (size_t i = 0; i < m; ++i) ac.grad()[i] += out.grad()[i];
      }
      if (bc.requires_grad()) {
        for (size_t i = 0; i < m; ++i) bc.grad()[i] += out.grad()[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.at(i) - b.at(i);
  if (recording({&a, &b})) {
    Tensor ac = a, bc = b;
    auto touched = prepare(out, {&ac, &bc});
    active_tape()->record(std::move(touched), [out, ac, bc]() mutable {
      const size_t m = out.numel();
      if (ac.requires_grad()) {
        for (size_t i = 0; i < m; ++i) ac.grad()[i] += out.grad()[i];
      }
      if (bc.requires_grad()) {
        for (size_t i = 0; i < m; ++i) bc.grad()[i] -= out.grad()[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.at(i) * b.at(i);
  if (recording({&a, &b})) {
    Tensor ac = a, bc = b;
    auto touched = prepare(out, {&ac, &bc});
    active_tape()->record(std::move(touched), [out, ac, bc]() mutable {
      const size_t m = out.numel();
      if (ac.requires_grad()) {
        for (size_t i = 0; i < m; ++i) ac.grad()[i] += out.grad()[i] * bc.at(i);
      }
      if (bc.requires_grad()) {
        for (size_t i = 0; i < m; ++i) bc.grad()[i] += out.grad()[i] * ac.at(i);
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, float s) {
  Tensor out = Tensor::zeros(a.shape());
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.at(i) * s;
  if (n == 1 && a.has_scalar_acc()) {
    out.set_scalar_acc(a.item_f64() * static_cast<double>(s));
  }
  if (recording({&a})) {
    Tensor ac = a;
    auto touched = prepare(out, {&ac});
    active_tape()->record(std::move(touched), [out, ac, s]() mutable {
      const size_t m = out.numel();
      for (size_t i = 0; i < m; ++i) ac.grad()[i] += out.grad()[i] * s;
    });
  }
  return out;
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() < 1 || x.shape().back() != bias.dim(0)) {
    throw DimensionError("add_row_bias: incompatible shapes " + shape_str(x.shape()) +
                         " vs " + shape_str(bias.shape()));
  }
  const int d = bias.dim(0);
  const size_t rows = x.numel() / static_cast<size_t>(d);
  Tensor out = Tensor::zeros(x.shape());
  for (size_t r = 0; r < rows; ++r) {
    const float* xr = x.data() + r * d;
    float* or_ = out.data() + r * d;
    for (int j = 0; j < d; ++j) or_[j] = xr[j] + bias.at(static_cast<size_t>(j));
  }
  if (recording({&x, &bias})) {
    Tensor xc = x, bc = bias;
    auto touched = prepare(out, {&xc, &bc});
    active_tape()->record(std::move(touched), [out, xc, bc, rows, d]() mutable {
      if (xc.requires_grad()) {
        const size_t m = out.numel();
        for (size_t i = 0; i < m; ++i) xc.grad()[i] += out.grad()[i];
      }
      if (bc.requires_grad()) {
        for (size_t r = 0; r < rows; ++r) {
          const float* g = out.grad() + r * d;
          for (int j = 0; j < d; ++j) bc.grad()[j] += g[j];
        }
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const int m = a.dim(0), n = a.dim(1), p = b.dim(1);
  Tensor out = Tensor::zeros({m, p});
  kernels::matmul(a.data(), b.data(), out.data(), m, n, p);
  if (recording({&a, &b})) {
    Tensor ac = a, bc = b;
    auto touched = prepare(out, {&ac, &bc});
    active_tape()->record(std::move(touched), [out, ac, bc, m, n, p]() mutable {
      if (ac.requires_grad()) {
        kernels::matmul_nt(out.grad(), bc.data(), ac.grad(), m, p, n, /*accumulate=*/true);
      }
      if (bc.requires_grad()) {
        kernels::matmul_tn(ac.data(), out.grad(), bc.grad(), m, n, p, /*accumulate=*/true);
      }
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: inner dimensions disagree: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const int m = a.dim(0), n = a.dim(1), p = b.dim(0);
  Tensor out = Tensor::zeros({m, p});
  kernels::matmul_nt(a.data(), b.data(), out.data(), m, n, p);
  if (recording({&a, &b})) {
    Tensor ac = a, bc = b;
    auto touched = prepare(out, {&ac, &bc});
    active_tape()->record(std::move(touched), [out, ac, bc, m, n, p]() mutable {
      if (ac.requires_grad()) {
        kernels::matmul(out.grad(), bc.data(), ac.grad(), m, p, n, /*accumulate=*/true);
      }
      if (bc.requires_grad()) {
        kernels::matmul_tn(out.grad(), ac.data(), bc.grad(), m, p, n, /*accumulate=*/true);
      }
    });
  }
  return out;
}

namespace {

void check_bmm(const Tensor& a, const Tensor& b, bool transpose_b, const char* op) {
  bool ok = a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0);
  if (ok) {
    ok = transpose_b ? a.dim(2) == b.dim(2) : a.dim(2) == b.dim(1);
  }
  if (!ok) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor bmm(const Tensor& a, const Tensor& b) {
  check_bmm(a, b, false, "bmm");
  const int N = a.dim(0), r = a.dim(1), c = a.dim(2), p = b.dim(2);
  Tensor out = Tensor::zeros({N, r, p});
  for (int i = 0; i < N; ++i) {
    kernels::matmul(a.data() + static_cast<long>(i) * r * c,
                    b.data() + static_cast<long>(i) * c * p,
                    out.data() + static_cast<long>(i) * r * p, r, c, p);
  }
  if (recording({&a, &b})) {
    Tensor ac = a, bc = b;
    auto touched = prepare(out, {&ac, &bc});
    active_tape()->record(std::move(touched), [out, ac, bc, N, r, c, p]() mutable {
      for (int i = 0; i < N; ++i) {
        const float* go = out.grad() + static_cast<long>(i) * r * p;
        if (ac.requires_grad()) {
          kernels::matmul_nt(go, bc.data() + static_cast<long>(i) * c * p,
                             ac.grad() + static_cast<long>(i) * r * c, r, p, c, true);
        }
        if (bc.requires_grad()) {
          kernels::matmul_tn(ac.data() + static_cast<long>(i) * r * c, go,
                             bc.grad() + static_cast<long>(i) * c * p, r, c, p, true);
        }
      }
    });
  }
  return out;
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
  check_bmm(a, b, true, "bmm_nt");
  const int N = a.dim(0), r = a.dim(1), c = a.dim(2), p = b.dim(1);
  Tensor out = Tensor::zeros({N, r, p});
  for (int i = 0; i < N; ++i) {
    kernels::matmul_nt(a.data() + static_cast<long>(i) * r * c,
                       b.data() + static_cast<long>(i) * p * c,
                       out.data() + static_cast<long>(i) * r * p, r, c, p);
  }
  if (recording({&a, &b})) {
    Tensor ac = a, bc = b;
    auto touched = prepare(out, {&ac, &bc});
    active_tape()->record(std::move(touched), [out, ac, bc, N, r, c, p]() mutable {
      for (int i = 0; i < N; ++i) {
        const float* go = out.grad() + static_cast<long>(i) * r * p;
        if (ac.requires_grad()) {
          kernels::matmul(go, bc.data() + static_cast<long>(i) * p * c,
                          ac.grad() + static_cast<long>(i) * r * c, r, p, c, true);
        }
        if (bc.requires_grad()) {
          kernels::matmul_tn(go, ac.data() + static_cast<long>(i) * r * c,
                             bc.grad() + static_cast<long>(i) * p * c, r, p, c, true);
        }
      }
    });
  }
  return out;
}

Tensor swap_middle(const Tensor& x) {
  if (x.rank() != 4) {
    throw DimensionError("swap_middle expects a rank-4 tensor, got " + shape_str(x.shape()));
  }
  const int B = x.dim(0), L = x.dim(1), H = x.dim(2), D = x.dim(3);
  Tensor out = Tensor::zeros({B, H, L, D});
  for (int b = 0; b < B; ++b) {
    for (int l = 0; l < L; ++l) {
      for (int h = 0; h < H; ++h) {
        const float* src = x.data() + ((static_cast<long>(b) * L + l) * H + h) * D;
        float* dst = out.data() + ((static_cast<long>(b) * H + h) * L + l) * D;
        std::copy(src, src + D, dst);
      }
    }
  }
  if (recording({&x})) {
    Tensor xc = x;
    auto touched = prepare(out, {&xc});
    active_tape()->record(std::move(touched), [out, xc, B, L, H, D]() mutable {
      for (int b = 0; b < B; ++b) {
        for (int l = 0; l < L; ++l) {
          for (int h = 0; h < H; ++h) {
            const float* g = out.grad() + ((static_cast<long>(b) * H + h) * L + l) * D;
            float* dst = xc.grad() + ((static_cast<long>(b) * L + l) * H + h) * D;
            for (int d = 0; d < D; ++d) dst[d] += g[d];
          }
        }
      }
    });
  }
  return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) {
    throw DimensionError("embedding_lookup: table must be rank 2, got " + shape_str(table.shape()));
  }
  const int V = table.dim(0), k = table.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= V) {
      throw VocabError("embedding_lookup: id " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(V));
    }
  }
  const int n = static_cast<int>(ids.size());
  Tensor out = Tensor::zeros({n, k});
  for (int i = 0; i < n; ++i) {
    const float* src = table.data() + static_cast<long>(ids[static_cast<size_t>(i)]) * k;
    std::copy(src, src + k, out.data() + static_cast<long>(i) * k);
  }
  if (recording({&table})) {
    Tensor tc = table;
    auto touched = prepare(out, {&tc});
    active_tape()->record(std::move(touched), [out, tc, ids, n, k]() mutable {
      for (int i = 0; i < n; ++i) {
        const float* g = out.grad() + static_cast<long>(i) * k;
        float* dst = tc.grad() + static_cast<long>(ids[static_cast<size_t>(i)]) * k;
        for (int j = 0; j < k; ++j) dst[j] += g[j];
      }
    });
  }
  return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor elementwise(const Tensor& x, Fwd fwd, Bwd bwd_factor_from_y_and_x) {
  Tensor out = Tensor::zeros(x.shape());
  const size_t n = x.numel();
  for (size_t i = 0; i < n; ++i) out.data()[i] = fwd(x.at(i));
  if (recording({&x})) {
    Tensor xc = x;
    auto touched = prepare(out, {&xc});
    active_tape()->record(std::move(touched), [out, xc, bwd_factor_from_y_and_x]() mutable {
      const size_t m = out.numel();
      for (size_t i = 0; i < m; ++i) {
        xc.grad()[i] += out.grad()[i] * bwd_factor_from_y_and_x(out.at(i), xc.at(i));
      }
    });
  }
  return out;
}

}  // namespace

Tensor relu(const Tensor& x) {
  // d(relu)/dx at exactly 0 is defined as 0.
  return elementwise(
      x, [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float, float xv) { return xv > 0.0f ? 1.0f : 0.0f; });
}

Tensor tanh(const Tensor& x) {
  return elementwise(
      x, [](float v) { return std::tanh(v); },
      [](float y, float) { return 1.0f - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return elementwise(
      x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
      [](float y, float) { return y * (1.0f - y); });
}

Tensor softmax(const Tensor& x, int axis) {
  const int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("softmax: axis out of range for " + shape_str(x.shape()));
  }
  const int n = x.dim(axis);
  size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(x.dim(i));
  for (int i = axis + 1; i < r; ++i) inner *= static_cast<size_t>(x.dim(i));

  Tensor out = Tensor::zeros(x.shape());
  for (size_t o = 0; o < outer; ++o) {
    for (size_t j = 0; j < inner; ++j) {
      const size_t base = o * static_cast<size_t>(n) * inner + j;
      float mx = x.at(base);
      for (int i = 1; i < n; ++i) mx = std::max(mx, x.at(base + static_cast<size_t>(i) * inner));
      double denom = 0.0;
      for (int i = 0; i < n; ++i) {
        const float e = std::exp(x.at(base + static_cast<size_t>(i) * inner) - mx);
        out.data()[base + static_cast<size_t>(i) * inner] = e;
        denom += e;
      }
      const float inv = static_cast<float>(1.0 / denom);
      for (int i = 0; i < n; ++i) out.data()[base + static_cast<size_t>(i) * inner] *= inv;
    }
  }
  if (recording({&x})) {
    Tensor xc = x;
    auto touched = prepare(out, {&xc});
    active_tape()->record(std::move(touched), [out, xc, outer, inner, n]() mutable {
      for (size_t o = 0; o < outer; ++o) {
        for (size_t j = 0; j < inner; ++j) {
          const size_t base = o * static_cast<size_t>(n) * inner + j;
          double dot = 0.0;
          for (int i = 0; i < n; ++i) {
            const size_t idx = base + static_cast<size_t>(i) * inner;
            dot += static_cast<double>(out.grad()[idx]) * out.at(idx);
          }
          for (int i = 0; i < n; ++i) {
            const size_t idx = base + static_cast<size_t>(i) * inner;
            xc.grad()[idx] += out.at(idx) * (out.grad()[idx] - static_cast<float>(dot));
          }
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  if (x.rank() < 1 || gain.rank() != 1 || bias.rank() != 1 ||
      x.shape().back() != gain.dim(0) || gain.dim(0) != bias.dim(0)) {
    throw DimensionError("layer_norm: incompatible shapes " + shape_str(x.shape()) + ", " +
                         shape_str(gain.shape()) + ", " + shape_str(bias.shape()));
  }
  if (eps < 0.0f) throw ContractError("layer_norm: eps must be non-negative");
  const int d = gain.dim(0);
  const size_t rows = x.numel() / static_cast<size_t>(d);

  Tensor out = Tensor::zeros(x.shape());
  std::vector<float> xhat(x.numel());
  std::vector<float> inv_std(rows);
  for (size_t r = 0; r < rows; ++r) {
    const float* xr = x.data() + r * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += xr[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = xr[j] - mean;
      var += c * c;
    }
    var /= d;
    const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
    inv_std[r] = inv;
    float* outr = out.data() + r * d;
    for (int j = 0; j < d; ++j) {
      const float xh = (xr[j] - static_cast<float>(mean)) * inv;
      xhat[r * d + j] = xh;
      outr[j] = gain.at(static_cast<size_t>(j)) * xh + bias.at(static_cast<size_t>(j));
    }
  }
  if (recording({&x, &gain, &bias})) {
    Tensor xc = x, gc = gain, bc = bias;
    auto touched = prepare(out, {&xc, &gc, &bc});
    active_tape()->record(
        std::move(touched),
        [out, xc, gc, bc, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d]() mutable {
          for (size_t r = 0; r < rows; ++r) {
            const float* g = out.grad() + r * d;
            const float* xh = xhat.data() + r * d;
            if (gc.requires_grad()) {
              for (int j = 0; j < d; ++j) gc.grad()[j] += g[j] * xh[j];
            }
            if (bc.requires_grad()) {
              for (int j = 0; j < d; ++j) bc.grad()[j] += g[j];
            }
            if (xc.requires_grad()) {
              double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
              for (int j = 0; j < d; ++j) {
                const double dxh = static_cast<double>(g[j]) * gc.at(static_cast<size_t>(j));
                mean_dxhat += dxh;
                mean_dxhat_xhat += dxh * xh[j];
              }
              mean_dxhat /= d;
              mean_dxhat_xhat /= d;
              float* dst = xc.grad() + r * d;
              for (int j = 0; j < d; ++j) {
                const double dxh = static_cast<double>(g[j]) * gc.at(static_cast<size_t>(j));
                dst[j] += inv_std[r] *
                          static_cast<float>(dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
              }
            }
          }
        });
  }
  return out;
}

Tensor masked_attention_softmax(const Tensor& scores, const std::vector<uint8_t>& key_mask,
                                int batch, int heads) {
  if (scores.rank() != 3 || scores.dim(0) != batch * heads) {
    throw DimensionError("masked_attention_softmax: expected [batch*heads x L x L], got " +
                         shape_str(scores.shape()));
  }
  const int L = scores.dim(2);
  if (key_mask.size() != static_cast<size_t>(batch) * static_cast<size_t>(L)) {
    throw DimensionError("masked_attention_softmax: mask size does not match batch layout");
  }
  const int rows_per_mat = scores.dim(1);
  Tensor out = Tensor::zeros(scores.shape());
  for (int m = 0; m < batch * heads; ++m) {
    const uint8_t* mask_row = key_mask.data() + static_cast<size_t>(m / heads) * L;
    for (int i = 0; i < rows_per_mat; ++i) {
      const size_t base = (static_cast<size_t>(m) * rows_per_mat + i) * L;
      float mx = -std::numeric_limits<float>::infinity();
      for (int j = 0; j < L; ++j) {
        if (mask_row[j]) mx = std::max(mx, scores.at(base + j));
      }
      double denom = 0.0;
      for (int j = 0; j < L; ++j) {
        if (!mask_row[j]) continue;
        const float e = std::exp(scores.at(base + j) - mx);
        out.data()[base + j] = e;
        denom += e;
      }
      const float inv = static_cast<float>(1.0 / denom);
      for (int j = 0; j < L; ++j) out.data()[base + j] *= inv;
    }
  }
  if (recording({&scores})) {
    Tensor sc = scores;
    auto touched = prepare(out, {&sc});
    const size_t total_rows = static_cast<size_t>(batch) * heads * rows_per_mat;
    active_tape()->record(std::move(touched), [out, sc, total_rows, L]() mutable {
      // Masked weights are exactly 0, so the plain softmax reverse step keeps
      // their upstream contribution at 0.
      for (size_t r = 0; r < total_rows; ++r) {
        const size_t base = r * L;
        double dotv = 0.0;
        for (int j = 0; j < L; ++j) {
          dotv += static_cast<double>(out.grad()[base + j]) * out.at(base + j);
        }
        for (int j = 0; j < L; ++j) {
          sc.grad()[base + j] +=
              out.at(base + j) * (out.grad()[base + j] - static_cast<float>(dotv));
        }
      }
    });
  }
  return out;
}

Tensor masked_mean_pool(const Tensor& hidden, const std::vector<uint8_t>& mask) {
  if (hidden.rank() != 3) {
    throw DimensionError("masked_mean_pool: expected [B x L x k], got " + shape_str(hidden.shape()));
  }
  const int B = hidden.dim(0), L = hidden.dim(1), k = hidden.dim(2);
  if (mask.size() != static_cast<size_t>(B) * static_cast<size_t>(L)) {
    throw DimensionError("masked_mean_pool: mask size does not match batch layout");
  }
  std::vector<int> counts(static_cast<size_t>(B), 0);
  for (int b = 0; b < B; ++b) {
    for (int l = 0; l < L; ++l) counts[static_cast<size_t>(b)] += mask[static_cast<size_t>(b) * L + l] ? 1 : 0;
    if (counts[static_cast<size_t>(b)] == 0) {
      throw EmptyInputError("masked_mean_pool: row " + std::to_string(b) + " has no real tokens");
    }
  }
  Tensor out = Tensor::zeros({B, k});
  for (int b = 0; b < B; ++b) {
    for (int j = 0; j < k; ++j) {
      double acc = 0.0;
      for (int l = 0; l < L; ++l) {
        if (mask[static_cast<size_t>(b) * L + l]) {
          acc += hidden.at((static_cast<size_t>(b) * L + l) * k + j);
        }
      }
      out.data()[static_cast<size_t>(b) * k + j] =
          static_cast<float>(acc / counts[static_cast<size_t>(b)]);
    }
  }
  if (recording({&hidden})) {
    Tensor hc = hidden;
    auto touched = prepare(out, {&hc});
    active_tape()->record(std::move(touched), [out, hc, mask, counts, B, L, k]() mutable {
      for (int b = 0; b < B; ++b) {
        const float invc = 1.0f / static_cast<float>(counts[static_cast<size_t>(b)]);
        const float* g = out.grad() + static_cast<size_t>(b) * k;
        for (int l = 0; l < L; ++l) {
          if (!mask[static_cast<size_t>(b) * L + l]) continue;
          float* dst = hc.grad() + (static_cast<size_t>(b) * L + l) * k;
          for (int j = 0; j < k; ++j) dst[j] += g[j] * invc;
        }
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, float rate, Rng& rng) {
  if (rate < 0.0f || rate >= 1.0f) throw ContractError("dropout: rate must be in [0, 1)");
  if (rate == 0.0f) return x;
  const float keep_scale = 1.0f / (1.0f - rate);
  std::vector<float> mask(x.numel());
  for (size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.bernoulli(rate) ? 0.0f : keep_scale;
  }
  Tensor out = Tensor::zeros(x.shape());
  for (size_t i = 0; i < mask.size(); ++i) out.data()[i] = x.at(i) * mask[i];
  if (recording({&x})) {
    Tensor xc = x;
    auto touched = prepare(out, {&xc});
    active_tape()->record(std::move(touched), [out, xc, mask = std::move(mask)]() mutable {
      const size_t m = out.numel();
      for (size_t i = 0; i < m; ++i) xc.grad()[i] += out.grad()[i] * mask[i];
    });
  }
  return out;
}

std::pair<Tensor, int> cross_entropy_sum(const Tensor& logits, const std::vector<int>& targets,
                                         int ignore_id) {
  if (logits.rank() != 2) {
    throw DimensionError("cross_entropy: logits must be [N x V], got " + shape_str(logits.shape()));
  }
  const int N = logits.dim(0), V = logits.dim(1);
  if (targets.size() != static_cast<size_t>(N)) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(N) + " rows");
  }
  for (int t : targets) {
    if (t != ignore_id && (t < 0 || t >= V)) {
      throw ContractError("cross_entropy: target " + std::to_string(t) +
                          " outside [0, " + std::to_string(V) + ")");
    }
  }
  double total = 0.0;
  int count = 0;
  for (int i = 0; i < N; ++i) {
    const int t = targets[static_cast<size_t>(i)];
    if (t == ignore_id) continue;
    const float* row = logits.data() + static_cast<long>(i) * V;
    float mx = row[0];
    for (int j = 1; j < V; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < V; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
    total += std::log(denom) + mx - row[t];
    ++count;
  }
  Tensor out = Tensor::scalar(static_cast<float>(total));
  out.set_scalar_acc(total);
  if (recording({&logits})) {
    Tensor lc = logits;
    auto touched = prepare(out, {&lc});
    active_tape()->record(std::move(touched), [out, lc, targets, ignore_id, N, V]() mutable {
      const float g = out.grad()[0];
      for (int i = 0; i < N; ++i) {
        const int t = targets[static_cast<size_t>(i)];
        if (t == ignore_id) continue;
        const float* row = lc.data() + static_cast<long>(i) * V;
        float* grow = lc.grad() + static_cast<long>(i) * V;
        float mx = row[0];
        for (int j = 1; j < V; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j < V; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
        for (int j = 0; j < V; ++j) {
          const float p = static_cast<float>(std::exp(static_cast<double>(row[j]) - mx) / denom);
          grow[j] += g * (p - (j == t ? 1.0f : 0.0f));
        }
      }
    });
  }
  return {out, count};
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_id) {
  auto [total, count] = cross_entropy_sum(logits, targets, ignore_id);
  if (count == 0) {
    throw EmptyInputError("cross_entropy: every target is ignored, mean is undefined");
  }
  return scale(total, 1.0f / static_cast<float>(count));
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  const size_t n = x.numel();
  for (size_t i = 0; i < n; ++i) acc += x.at(i);
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  out.set_scalar_acc(acc);
  if (recording({&x})) {
    Tensor xc = x;
    auto touched = prepare(out, {&xc});
    active_tape()->record(std::move(touched), [out, xc]() mutable {
      const float g = out.grad()[0];
      const size_t m = xc.numel();
      for (size_t i = 0; i < m; ++i) xc.grad()[i] += g;
    });
  }
  return out;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot");
  double acc = 0.0;
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) acc += static_cast<double>(a.at(i)) * b.at(i);
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  out.set_scalar_acc(acc);
  if (recording({&a, &b})) {
    Tensor ac = a, bc = b;
    auto touched = prepare(out, {&ac, &bc});
    active_tape()->record(std::move(touched), [out, ac, bc]() mutable {
      const float g = out.grad()[0];
      const size_t m = ac.numel();
      if (ac.requires_grad()) {
        for (size_t i = 0; i < m; ++i) ac.grad()[i] += g * bc.at(i);
      }
      if (bc.requires_grad()) {
        for (size_t i = 0; i < m; ++i) bc.grad()[i] += g * ac.at(i);
      }
    });
  }
  return out;
}

void backward(const Tensor& loss, GradTape& tape) { tape.backward(loss); }

}  // namespace balm::ops
