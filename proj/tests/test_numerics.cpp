#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "balm/adam.hpp"
#include "balm/kernels.hpp"
#include "balm/ops.hpp"
#include "balm/tensor.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace balm;
using testutil::check_gradients;
using testutil::random_tensor;

TEST_CASE("tensor basics") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.at(4) == 5.0f);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), DimensionError);
  CHECK_THROWS_AS(t.item(), ContractError);

  Tensor r = t.reshape({3, 2});
  CHECK(r.dim(0) == 3);
  r.data()[0] = 9.0f;
  CHECK(t.at(0) == 9.0f);  // reshape aliases storage

  Tensor c = t.clone();
  c.data()[0] = -1.0f;
  CHECK(t.at(0) == 9.0f);
}

TEST_CASE("matmul identity and zero cases") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor out = ops::matmul(eye, m);
  for (size_t i = 0; i < 4; ++i) CHECK(out.at(i) == m.at(i));

  Tensor z = Tensor::zeros({2, 3});
  Rng rng(7);
  Tensor any = random_tensor({3, 4}, rng);
  Tensor zout = ops::matmul(z, any);
  for (size_t i = 0; i < zout.numel(); ++i) CHECK(zout.at(i) == 0.0f);
}

TEST_CASE("matmul matches the triple-loop oracle") {
  Rng rng(11);
  Tensor a = random_tensor({4, 5}, rng);
  Tensor b = random_tensor({5, 3}, rng);
  Tensor out = ops::matmul(a, b);
  std::vector<float> expect = oracles::matmul(a.values(), b.values(), 4, 5, 3);
  for (size_t i = 0; i < expect.size(); ++i) {
    CHECK(out.at(i) == doctest::Approx(expect[i]).epsilon(1e-5));
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({4, 5});
  Tensor b = Tensor::zeros({3, 4});
  try {
    ops::matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[4x5]") != std::string::npos);
    CHECK(msg.find("[3x4]") != std::string::npos);
  }
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  Rng rng(3);
  for (auto [m, n, p] : {std::tuple{1, 1, 1}, {7, 13, 5}, {32, 64, 48}, {61, 33, 17}}) {
    Tensor a = random_tensor({m, n}, rng);
    Tensor b = random_tensor({n, p}, rng);
    std::vector<float> serial(static_cast<size_t>(m) * p), parallel(static_cast<size_t>(m) * p);
    kernels::matmul_serial(a.data(), b.data(), serial.data(), m, n, p);
    kernels::matmul(a.data(), b.data(), parallel.data(), m, n, p);
    CHECK(serial == parallel);

    Tensor bt = random_tensor({p, n}, rng);
    std::vector<float> s2(static_cast<size_t>(m) * p), p2(static_cast<size_t>(m) * p);
    kernels::matmul_nt_serial(a.data(), bt.data(), s2.data(), m, n, p);
    kernels::matmul_nt(a.data(), bt.data(), p2.data(), m, n, p);
    CHECK(s2 == p2);

    Tensor c = random_tensor({m, p}, rng);
    std::vector<float> s3(static_cast<size_t>(n) * p, 1.0f), p3(static_cast<size_t>(n) * p, 1.0f);
    kernels::matmul_tn_serial(a.data(), c.data(), s3.data(), m, n, p, /*accumulate=*/true);
    kernels::matmul_tn(a.data(), c.data(), p3.data(), m, n, p, /*accumulate=*/true);
    CHECK(s3 == p3);
  }
}

TEST_CASE("softmax uniform, oracle, and shift invariance") {
  Tensor flat = ops::softmax(Tensor::from({4}, {0, 0, 0, 0}), -1);
  for (size_t i = 0; i < 4; ++i) CHECK(flat.at(i) == doctest::Approx(0.25));

  Tensor x = Tensor::from({3}, {1, 2, 3});
  Tensor y = ops::softmax(x, 0);
  const double e1 = std::exp(1.0), e2 = std::exp(2.0), e3 = std::exp(3.0);
  const double denom = e1 + e2 + e3;
  CHECK(y.at(0) == doctest::Approx(e1 / denom));
  CHECK(y.at(1) == doctest::Approx(e2 / denom));
  CHECK(y.at(2) == doctest::Approx(e3 / denom));

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor r = random_tensor({3, 6}, rng, 4.0f);
    Tensor shifted = r.clone();
    const float c = rng.uniform(-10.0f, 10.0f);
    for (int row = 0; row < 3; ++row) {
      for (int j = 0; j < 6; ++j) shifted.data()[row * 6 + j] += c;
    }
    Tensor s1 = ops::softmax(r, -1);
    Tensor s2 = ops::softmax(shifted, -1);
    for (int row = 0; row < 3; ++row) {
      double sum = 0.0;
      for (int j = 0; j < 6; ++j) {
        sum += s1.at(static_cast<size_t>(row) * 6 + j);
        CHECK(s1.at(static_cast<size_t>(row) * 6 + j) ==
              doctest::Approx(s2.at(static_cast<size_t>(row) * 6 + j)).epsilon(1e-5));
        CHECK(s1.at(static_cast<size_t>(row) * 6 + j) > 0.0f);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("softmax along a non-final axis") {
  Tensor x = Tensor::from({2, 2}, {0, 10, 0, 10});
  Tensor y = ops::softmax(x, 0);  // columns are [0,0] and [10,10]
  CHECK(y.at(0) == doctest::Approx(0.5));
  CHECK(y.at(2) == doctest::Approx(0.5));
  CHECK(y.at(1) == doctest::Approx(0.5));
  CHECK(y.at(3) == doctest::Approx(0.5));
}

TEST_CASE("layer_norm hand cases") {
  Tensor gain = Tensor::full({4}, 1.0f);
  Tensor bias = Tensor::zeros({4});

  Tensor constant = ops::layer_norm(Tensor::full({4}, 3.0f), gain, bias, 1e-5f);
  for (size_t i = 0; i < 4; ++i) CHECK(constant.at(i) == doctest::Approx(0.0).epsilon(1e-6));

  // Already standardized input is a fixed point.
  Tensor std_in = Tensor::from({4}, {-1.3416407f, -0.4472136f, 0.4472136f, 1.3416407f});
  Tensor fixed = ops::layer_norm(std_in, gain, bias, 1e-7f);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(fixed.at(i) == doctest::Approx(std_in.at(i)).epsilon(1e-4));
  }

  Tensor two = ops::layer_norm(Tensor::from({2}, {1, 3}), Tensor::full({2}, 1.0f),
                               Tensor::zeros({2}), 0.0f);
  CHECK(two.at(0) == doctest::Approx(-1.0));
  CHECK(two.at(1) == doctest::Approx(1.0));
}

TEST_CASE("activation values") {
  Tensor r = ops::relu(Tensor::from({3}, {-1, 0, 2}));
  CHECK(r.at(0) == 0.0f);
  CHECK(r.at(1) == 0.0f);
  CHECK(r.at(2) == 2.0f);
  CHECK(ops::sigmoid(Tensor::scalar(0.0f)).item() == doctest::Approx(0.5));
  CHECK(ops::tanh(Tensor::scalar(0.0f)).item() == doctest::Approx(0.0));
  CHECK(ops::sigmoid(Tensor::scalar(1.0f)).item() == doctest::Approx(0.7310586).epsilon(1e-6));
}

TEST_CASE("cross entropy uniform logits reproduce ln V") {
  const int V = 28996;
  Tensor logits = Tensor::zeros({1, V});
  Tensor loss = ops::cross_entropy(logits, {17}, -1);
  CHECK(loss.item() == doctest::Approx(10.2745).epsilon(1e-3 / 10.2745));
  CHECK(loss.item() == doctest::Approx(std::log(static_cast<double>(V))).epsilon(1e-4));

  for (int v : {2, 9, 120}) {
    Tensor l2 = Tensor::zeros({2, v});
    Tensor mean = ops::cross_entropy(l2, {0, v - 1}, -1);
    CHECK(mean.item() == doctest::Approx(std::log(static_cast<double>(v))).epsilon(1e-4));
  }
}

TEST_CASE("cross entropy saturation, hand value, and ignore handling") {
  Tensor logits = Tensor::zeros({1, 5});
  logits.data()[2] = 20.0f;
  CHECK(ops::cross_entropy(logits, {2}, -1).item() < 1e-3f);

  Tensor two = Tensor::from({1, 2}, {0.0f, std::log(3.0f)});
  CHECK(ops::cross_entropy(two, {1}, -1).item() ==
        doctest::Approx(0.28768).epsilon(1e-4));  // -ln(0.75)

  // Ignored rows leave both numerator and denominator.
  Tensor three = Tensor::from({2, 2}, {0.0f, std::log(3.0f), 50.0f, -50.0f});
  Tensor masked = ops::cross_entropy(three, {1, -7}, -7);
  CHECK(masked.item() == doctest::Approx(0.28768).epsilon(1e-4));

  CHECK_THROWS_AS(ops::cross_entropy(three, {-7, -7}, -7), EmptyInputError);
  CHECK_THROWS_AS(ops::cross_entropy(three, {5, 0}, -7), ContractError);
}

TEST_CASE("backward trivial gradients") {
  Rng rng(23);
  Tensor x = random_tensor({3, 4}, rng, 1.0f, /*requires_grad=*/true);
  {
    GradTape tape;
    TapeScope scope(tape);
    Tensor loss = ops::sum(x);
    tape.backward(loss);
  }
  for (size_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == 1.0f);

  Tensor a = random_tensor({6}, rng, 1.0f, true);
  Tensor b = random_tensor({6}, rng, 1.0f, true);
  GradTape tape;
  {
    TapeScope scope(tape);
    Tensor loss = ops::dot(a, b);
    tape.backward(loss);
  }
  for (size_t i = 0; i < 6; ++i) {
    CHECK(a.grad()[i] == doctest::Approx(b.at(i)));
    CHECK(b.grad()[i] == doctest::Approx(a.at(i)));
  }
}

TEST_CASE("backward requires a scalar loss from the tape") {
  Rng rng(1);
  Tensor x = random_tensor({2, 2}, rng, 1.0f, true);
  GradTape tape;
  TapeScope scope(tape);
  Tensor y = ops::relu(x);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
  Tensor off_tape = Tensor::scalar(1.0f);
  CHECK_THROWS_AS(tape.backward(off_tape), ContractError);
}

TEST_CASE("replaying reverse accumulation twice yields identical gradients") {
  Rng rng(29);
  Tensor x = random_tensor({4, 4}, rng, 1.0f, true);
  Tensor w = random_tensor({4, 4}, rng, 1.0f, true);
  GradTape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = ops::sum(ops::tanh(ops::matmul(x, w)));
    tape.backward(loss);
  }
  std::vector<float> first(x.grad_values());
  tape.backward(loss);
  CHECK(x.grad_values() == first);
}

TEST_CASE("gradient contract: every differentiable op matches finite differences") {
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    Tensor a = random_tensor({3, 4}, rng, 1.0f, true);
    Tensor b = random_tensor({4, 5}, rng, 1.0f, true);
    auto res = check_gradients({{"a", a}, {"b", b}},
                               [&] { return ops::scale(ops::sum(ops::tanh(ops::matmul(a, b))), 1.0f / 15.0f); });
    CHECK_MESSAGE(res.ok(), "matmul/tanh worst=", res.worst_param);

    Tensor nt = random_tensor({5, 4}, rng, 1.0f, true);
    res = check_gradients({{"a", a}, {"nt", nt}},
                          [&] { return ops::scale(ops::sum(ops::sigmoid(ops::matmul_nt(a, nt))), 1.0f / 15.0f); });
    CHECK_MESSAGE(res.ok(), "matmul_nt worst=", res.worst_param);

    Tensor b3a = random_tensor({2, 3, 4}, rng, 1.0f, true);
    Tensor b3b = random_tensor({2, 4, 2}, rng, 1.0f, true);
    res = check_gradients({{"a", b3a}, {"b", b3b}},
                          [&] { return ops::scale(ops::sum(ops::relu(ops::bmm(b3a, b3b))), 1.0f / 12.0f); });
    CHECK_MESSAGE(res.ok(), "bmm worst=", res.worst_param);

    Tensor b3c = random_tensor({2, 2, 4}, rng, 1.0f, true);
    res = check_gradients({{"a", b3a}, {"c", b3c}},
                          [&] { return ops::scale(ops::sum(ops::bmm_nt(b3a, b3c)), 1.0f / 12.0f); });
    CHECK_MESSAGE(res.ok(), "bmm_nt worst=", res.worst_param);

    Tensor sm = random_tensor({3, 5}, rng, 2.0f, true);
    res = check_gradients({{"sm", sm}}, [&] {
      return ops::scale(ops::dot(ops::softmax(sm, -1), ops::sigmoid(sm)), 0.2f);
    });
    CHECK_MESSAGE(res.ok(), "softmax worst=", res.worst_param);

    Tensor ln_x = random_tensor({4, 6}, rng, 1.5f, true);
    Tensor ln_g = random_tensor({6}, rng, 1.0f, true);
    Tensor ln_b = random_tensor({6}, rng, 0.5f, true);
    res = check_gradients({{"x", ln_x}, {"g", ln_g}, {"b", ln_b}}, [&] {
      return ops::scale(ops::sum(ops::tanh(ops::layer_norm(ln_x, ln_g, ln_b, 1e-5f))),
                        1.0f / 24.0f);
    });
    CHECK_MESSAGE(res.ok(), "layer_norm worst=", res.worst_param);

    Tensor table = random_tensor({7, 3}, rng, 1.0f, true);
    std::vector<int> ids = {0, 3, 3, 6, 1};
    res = check_gradients({{"table", table}}, [&] {
      return ops::scale(ops::sum(ops::tanh(ops::embedding_lookup(table, ids))), 1.0f / 15.0f);
    });
    CHECK_MESSAGE(res.ok(), "embedding worst=", res.worst_param);

    Tensor hid = random_tensor({2, 3, 4}, rng, 1.0f, true);
    std::vector<uint8_t> mask = {1, 1, 0, 1, 0, 0};
    res = check_gradients({{"hid", hid}}, [&] {
      return ops::scale(ops::sum(ops::sigmoid(ops::masked_mean_pool(hid, mask))), 0.125f);
    });
    CHECK_MESSAGE(res.ok(), "mean_pool worst=", res.worst_param);

    Tensor scores = random_tensor({4, 3, 3}, rng, 1.0f, true);  // B=2, H=2, L=3
    res = check_gradients({{"scores", scores}}, [&] {
      Tensor attn = ops::masked_attention_softmax(scores, mask, 2, 2);
      return ops::scale(ops::sum(ops::tanh(attn)), 1.0f / 36.0f);
    });
    CHECK_MESSAGE(res.ok(), "attention softmax worst=", res.worst_param);

    Tensor logits = random_tensor({4, 6}, rng, 1.0f, true);
    std::vector<int> targets = {2, 0, 5, 0};
    res = check_gradients({{"logits", logits}},
                          [&] { return ops::cross_entropy(logits, targets, 0); });
    CHECK_MESSAGE(res.ok(), "cross_entropy worst=", res.worst_param);

    Tensor u = random_tensor({3, 4}, rng, 1.0f, true);
    Tensor v = random_tensor({3, 4}, rng, 1.0f, true);
    Tensor bias = random_tensor({4}, rng, 1.0f, true);
    res = check_gradients({{"u", u}, {"v", v}, {"bias", bias}}, [&] {
      return ops::scale(
          ops::sum(ops::mul(ops::add_row_bias(ops::add(u, v), bias), ops::sub(u, v))),
          1.0f / 12.0f);
    });
    CHECK_MESSAGE(res.ok(), "elementwise worst=", res.worst_param);
  }
}

TEST_CASE("forward ops are deterministic") {
  Rng rng(31);
  Tensor a = random_tensor({8, 8}, rng, 2.0f);
  Tensor b = random_tensor({8, 8}, rng, 2.0f);
  Tensor first = ops::softmax(ops::matmul(a, b), -1);
  Tensor second = ops::softmax(ops::matmul(a, b), -1);
  CHECK(first.values() == second.values());
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  Tensor p = Tensor::from({3}, {1, 2, 3}, true);
  p.ensure_grad();
  std::vector<Tensor> params{p};
  AdamState state(params, {0.1f});
  adam_step(params, state);
  CHECK(state.step_count() == 1);
  CHECK(p.at(0) == 1.0f);
  CHECK(p.at(1) == 2.0f);
  CHECK(p.at(2) == 3.0f);
}

TEST_CASE("adam first step matches the scalar recurrence oracle") {
  Tensor p = Tensor::scalar(0.0f, true);
  p.ensure_grad();
  p.grad()[0] = 1.0f;
  std::vector<Tensor> params{p};
  AdamConfig cfg;
  cfg.lr = 0.1f;
  AdamState state(params, cfg);

  // Scalar oracle for constant gradient 1.
  double m = 0.0, v = 0.0, w = 0.0;
  for (int t = 1; t <= 5; ++t) {
    m = 0.9 * m + 0.1 * 1.0;
    v = 0.999 * v + 0.001 * 1.0;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    w -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    p.grad()[0] = 1.0f;
    adam_step(params, state);
    CHECK(p.at(0) == doctest::Approx(w).epsilon(1e-5));
  }
  // First step moves by about -lr (bias-corrected ratio is 1).
  CHECK(std::fabs(-0.1 - (-0.1 * (0.1 / 0.1) / (std::sqrt(0.001 / 0.001) + 1e-8))) < 1e-6);
}

TEST_CASE("adam treats identical parameter/gradient pairs identically") {
  Rng rng(37);
  Tensor p1 = random_tensor({4}, rng, 1.0f, true);
  Tensor p2 = p1.clone();
  p1.ensure_grad();
  p2.ensure_grad();
  for (size_t i = 0; i < 4; ++i) {
    p1.grad()[i] = 0.3f * static_cast<float>(i) - 0.5f;
    p2.grad()[i] = p1.grad()[i];
  }
  std::vector<Tensor> params{p1, p2};
  AdamState state(params, {});
  adam_step(params, state);
  adam_step(params, state);
  CHECK(p1.values() == p2.values());
}

TEST_CASE("gradient clipping caps the global norm") {
  Tensor p = Tensor::zeros({4}, true);
  p.ensure_grad();
  for (size_t i = 0; i < 4; ++i) p.grad()[i] = 3.0f;  // norm 6
  std::vector<Tensor> params{p};
  CHECK(global_grad_norm(params) == doctest::Approx(6.0));
  clip_global_norm(params, 1.0f);
  CHECK(global_grad_norm(params) == doctest::Approx(1.0).epsilon(1e-5));
  clip_global_norm(params, 1.0f);  // already within bound: unchanged
  CHECK(global_grad_norm(params) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("dropout scales kept activations and zeroes dropped ones") {
  Rng rng(41);
  Tensor x = Tensor::full({1000}, 1.0f);
  Tensor y = ops::dropout(x, 0.25f, rng);
  long kept = 0;
  for (size_t i = 0; i < y.numel(); ++i) {
    const bool is_kept = y.at(i) != 0.0f;
    if (is_kept) {
      CHECK(y.at(i) == doctest::Approx(1.0f / 0.75f));
      ++kept;
    }
  }
  CHECK(kept > 600);
  CHECK(kept < 900);
  Rng rng2(41);
  Tensor again = ops::dropout(x, 0.25f, rng2);
  CHECK(again.values() == y.values());
}
