#include <cmath>
#include <limits>

#include "dc3d/tensor.hpp"
#include "doctest.h"

using namespace dc3d;
using diff::Tensor;

namespace {

Tensor t1(std::vector<float> v, bool grad = false) {
  const int n = static_cast<int>(v.size());
  return Tensor({n}, std::move(v), grad);
}

}  // namespace

TEST_CASE("matmul identity and hand-checked product") {
  Tensor identity({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor a({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor prod = diff::matmul(nullptr, identity, a);
  CHECK(prod.data() == a.data());

  Tensor lhs({2, 2}, {1, 2, 3, 4});
  Tensor rhs({2, 1}, {0, 1});
  Tensor out = diff::matmul(nullptr, lhs, rhs);
  CHECK(out.shape() == diff::Shape{2, 1});
  CHECK(out.at(0) == doctest::Approx(2));
  CHECK(out.at(1) == doctest::Approx(4));

  Tensor bad({2, 3}, {0, 0, 0, 0, 0, 0});
  CHECK_THROWS_AS(diff::matmul(nullptr, bad, bad), DimensionError);
}

TEST_CASE("elementwise basics") {
  CHECK(diff::relu(nullptr, t1({-1, 0, 2})).data() == std::vector<float>{0, 0, 2});
  CHECK(diff::sigmoid(nullptr, t1({0})).item() == doctest::Approx(0.5));
  CHECK(diff::tanh(nullptr, t1({0})).item() == doctest::Approx(0.0));

  Tensor m({2, 2}, {1, 2, 3, 4});
  Tensor bias = t1({10, 20});
  Tensor sum = diff::add(nullptr, m, bias);
  CHECK(sum.data() == std::vector<float>{11, 22, 13, 24});

  CHECK_THROWS_AS(diff::add(nullptr, m, t1({1, 2, 3})), DimensionError);
}

TEST_CASE("concat joins along an axis and validates input") {
  Tensor x = t1({1, 2});
  CHECK(diff::concat(nullptr, {x}, 0).data() == x.data());
  CHECK(diff::concat(nullptr, {t1({1, 2}), t1({3})}, 0).data() == std::vector<float>{1, 2, 3});

  Tensor a = Tensor::full({128}, 0.5f);
  Tensor b = Tensor::full({128}, -0.5f);
  CHECK(diff::concat(nullptr, {a, b}, 0).shape() == diff::Shape{256});

  CHECK_THROWS_AS(diff::concat(nullptr, {}, 0), ArgumentError);
}

TEST_CASE("softmax is uniform on constants, shift invariant, hand-checked") {
  Tensor u = diff::softmax(nullptr, t1({0, 0, 0}), 0);
  for (int i = 0; i < 3; ++i) CHECK(u.at(i) == doctest::Approx(1.0 / 3.0));

  Tensor x = t1({0.3f, -1.2f, 2.0f, 0.0f});
  Tensor shifted = t1({0.3f + 7, -1.2f + 7, 2.0f + 7, 0.0f + 7});
  Tensor sx = diff::softmax(nullptr, x, 0);
  Tensor ss = diff::softmax(nullptr, shifted, 0);
  for (int i = 0; i < 4; ++i) CHECK(sx.at(i) == doctest::Approx(ss.at(i)).epsilon(1e-6));

  Tensor logs = t1({std::log(1.0f), std::log(3.0f)});
  Tensor s = diff::softmax(nullptr, logs, 0);
  CHECK(s.at(0) == doctest::Approx(0.25));
  CHECK(s.at(1) == doctest::Approx(0.75));
}

TEST_CASE("softmax rows stay normalized for large magnitudes") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> v(8);
    for (auto& e : v) e = static_cast<float>(rng.uniform(-50, 50));
    Tensor s = diff::softmax(nullptr, t1(v), 0);
    double total = 0;
    for (int i = 0; i < 8; ++i) {
      CHECK(s.at(i) >= 0.0f);
      total += s.at(i);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("cross entropy closed forms") {
  // Uniform logits over V classes -> ln V.
  for (int v : {2, 5, 11}) {
    Tensor logits = Tensor::zeros({v});
    CHECK(diff::cross_entropy(nullptr, logits, 0).item() ==
          doctest::Approx(std::log(static_cast<double>(v))));
  }
  CHECK(diff::cross_entropy(nullptr, t1({0, 0}), 0).item() == doctest::Approx(0.6931472));

  // A dominant correct logit drives the loss toward zero.
  CHECK(diff::cross_entropy(nullptr, t1({30, 0, 0}), 0).item() < 1e-6);

  CHECK_THROWS_AS(diff::cross_entropy(nullptr, t1({0, 0}), 2), ArgumentError);
  CHECK_THROWS_AS(diff::cross_entropy(nullptr, t1({0, 0}), -1), ArgumentError);
}

TEST_CASE("gru cell gates") {
  const int d_in = 3, d_h = 4;
  diff::GruParams zero;
  zero.w_update = Tensor::zeros({d_in, d_h}, true);
  zero.u_update = Tensor::zeros({d_h, d_h}, true);
  zero.b_update = Tensor::zeros({d_h}, true);
  zero.w_reset = Tensor::zeros({d_in, d_h}, true);
  zero.u_reset = Tensor::zeros({d_h, d_h}, true);
  zero.b_reset = Tensor::zeros({d_h}, true);
  zero.w_cand = Tensor::zeros({d_in, d_h}, true);
  zero.u_cand = Tensor::zeros({d_h, d_h}, true);
  zero.b_cand = Tensor::zeros({d_h}, true);

  // All-zero parameters and inputs: z = 0.5, candidate = 0, h' = 0.
  Tensor h = diff::gru_cell(nullptr, Tensor::zeros({d_in}), Tensor::zeros({d_h}), zero);
  for (int i = 0; i < d_h; ++i) CHECK(h.at(i) == doctest::Approx(0.0));

  Tensor h_prev = t1({0.3f, -0.2f, 0.5f, 0.9f});
  Tensor x = t1({1.0f, 2.0f, -1.0f});

  // Large update bias forces the carry gate to 1: h' = h_prev.
  diff::GruParams carry = zero;
  carry.b_update = Tensor::full({d_h}, 40.0f, true);
  Tensor kept = diff::gru_cell(nullptr, x, h_prev, carry);
  for (int i = 0; i < d_h; ++i) CHECK(kept.at(i) == doctest::Approx(h_prev.at(i)).epsilon(1e-6));

  // Carry gate forced to 0: h' equals the candidate.
  Rng rng(3);
  diff::GruParams open = zero;
  open.b_update = Tensor::full({d_h}, -40.0f, true);
  open.w_cand = Tensor::glorot(d_in, d_h, rng);
  Tensor out = diff::gru_cell(nullptr, x, h_prev, open);
  Tensor cand = diff::tanh(
      nullptr, diff::vecmat(nullptr, x, open.w_cand));  // reset gate is 0.5 but u_cand is zero
  for (int i = 0; i < d_h; ++i) CHECK(out.at(i) == doctest::Approx(cand.at(i)).epsilon(1e-5));

  diff::GruParams bad = zero;
  bad.w_update = Tensor::zeros({d_in + 1, d_h}, true);
  CHECK_THROWS_AS(diff::gru_cell(nullptr, x, h_prev, bad), DimensionError);
}

TEST_CASE("backward of simple reductions") {
  Tensor w({2, 3}, {1, -2, 3, 4, -5, 6}, true);

  // loss = sum(w) -> gradient of all ones.
  {
    diff::Tape tape;
    Tensor loss = diff::sum(&tape, w);
    auto grads = tape.backward(loss);
    for (float g : grads.get(w)) CHECK(g == doctest::Approx(1.0));
  }

  // loss = w.w / 2 -> gradient w.
  {
    diff::Tape tape;
    Tensor half = diff::scale(&tape, diff::sum(&tape, diff::mul(&tape, w, w)), 0.5f);
    auto grads = tape.backward(half);
    auto g = grads.get(w);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(w.at(static_cast<std::int64_t>(i))));
  }

  // Non-scalar loss is rejected; off-path parameters read as zero.
  {
    diff::Tape tape;
    Tensor y = diff::mul(&tape, w, w);
    CHECK_THROWS_AS(tape.backward(y), ArgumentError);

    Tensor unused = Tensor::zeros({4}, true);
    Tensor loss = diff::sum(&tape, y);
    auto grads = tape.backward(loss);
    for (float g : grads.get(unused)) CHECK(g == 0.0f);
  }
}

TEST_CASE("gradient accumulation sums both uses of a parameter") {
  Tensor w = t1({0.7f, -0.3f}, true);
  diff::Tape tape;
  // loss = sum(w * w) + sum(w): dloss/dw = 2w + 1, the sum of both paths.
  Tensor loss = diff::add(&tape, diff::sum(&tape, diff::mul(&tape, w, w)), diff::sum(&tape, w));
  auto g = tape.backward(loss).get(w);
  CHECK(g[0] == doctest::Approx(2 * 0.7 + 1));
  CHECK(g[1] == doctest::Approx(2 * -0.3 + 1));
}

TEST_CASE("gradient check: linear, two-layer mlp, gru") {
  // Linear function: central differences are exact for any step, so a wide
  // step leaves only float rounding of the loss itself.
  {
    Tensor w = t1({0.5f, -1.5f, 2.0f}, true);
    auto f = [](diff::Tape& tape, const std::vector<Tensor>& params) {
      return diff::sum(&tape, diff::scale(&tape, params[0], 3.0f));
    };
    CHECK(diff::gradient_check(f, {w}, 0.5) <= 1e-6);
  }

  // Random two-layer MLP with tanh, checked against central differences.
  {
    Rng rng(11);
    Tensor w1 = Tensor::glorot(4, 8, rng);
    Tensor b1 = Tensor::zeros({8}, true);
    Tensor w2 = Tensor::glorot(8, 3, rng);
    Tensor b2 = Tensor::zeros({3}, true);
    std::vector<float> xv(4);
    for (auto& v : xv) v = static_cast<float>(rng.uniform(-1, 1));
    Tensor x = t1(xv);

    auto f = [x](diff::Tape& tape, const std::vector<Tensor>& p) {
      Tensor h = diff::tanh(&tape, diff::add(&tape, diff::vecmat(&tape, x, p[0]), p[1]));
      Tensor out = diff::add(&tape, diff::vecmat(&tape, h, p[2]), p[3]);
      return diff::cross_entropy(&tape, out, 1);
    };
    CHECK(diff::gradient_check(f, {w1, b1, w2, b2}, 1e-2) < 1e-3);
  }

  // GRU step driving a cross entropy.
  {
    Rng rng(13);
    auto gru = diff::make_gru_params(3, 5, rng);
    Tensor w_out = Tensor::glorot(5, 4, rng);
    Tensor x = t1({0.3f, -0.8f, 0.1f});
    Tensor h0 = t1({0.1f, 0.2f, -0.1f, 0.4f, -0.3f});

    auto f = [x, h0, w_out](diff::Tape& tape, const std::vector<Tensor>& p) {
      diff::GruParams g{p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8]};
      Tensor h = diff::gru_cell(&tape, x, h0, g);
      return diff::cross_entropy(&tape, diff::vecmat(&tape, h, w_out), 2);
    };
    std::vector<Tensor> params{gru.w_update, gru.u_update, gru.b_update, gru.w_reset, gru.u_reset,
                               gru.b_reset,  gru.w_cand,   gru.u_cand,   gru.b_cand};
    // Reset-path gradients sit near 1e-4 here, below the float32 difference
    // noise; the floor measures those against a 1e-2 gradient unit.
    CHECK(diff::gradient_check(f, params, 2e-2, 0, 0, 1e-2) < 1e-3);
  }
}

TEST_CASE("adam steps") {
  diff::AdamConfig cfg;
  cfg.lr = 1e-3f;
  cfg.weight_decay = 0.0f;

  // Zero gradient, zero decay: parameters unchanged.
  {
    Tensor p = t1({1.0f, -2.0f}, true);
    const auto before = p.data();
    diff::AdamState state;
    diff::GradientMap grads;
    diff::adam_step({&p}, grads, state, cfg);
    CHECK(p.data() == before);
    CHECK(state.step_count() == 1);
  }

  // First step with nonzero gradient moves each coordinate by ~lr*sign(g).
  {
    Tensor p = t1({1.0f, -2.0f, 0.5f}, true);
    diff::AdamState state;
    diff::GradientMap grads;
    auto& g = grads.slot(p.id(), p.size());
    g = {0.3f, -4.0f, 0.001f};
    diff::adam_step({&p}, grads, state, cfg);
    CHECK(p.at(0) == doctest::Approx(1.0 - 1e-3).epsilon(1e-4));
    CHECK(p.at(1) == doctest::Approx(-2.0 + 1e-3).epsilon(1e-4));
    CHECK(p.at(2) == doctest::Approx(0.5 - 1e-3).epsilon(1e-2));
  }

  // Identical inputs give bitwise identical results.
  {
    auto run = [&] {
      Tensor p = Tensor({3}, {0.25f, -1.5f, 3.0f}, true);
      diff::AdamState state;
      for (int step = 0; step < 5; ++step) {
        diff::GradientMap grads;
        auto& g = grads.slot(p.id(), p.size());
        g = {0.1f, 0.2f, -0.3f};
        diff::adam_step({&p}, grads, state, cfg);
      }
      return p.data();
    };
    CHECK(run() == run());
  }
}

TEST_CASE("tensors reject non-finite values and shape mismatches") {
  CHECK_THROWS_AS(Tensor({2}, {1.0f, std::numeric_limits<float>::infinity()}), NumericError);
  CHECK_THROWS_AS(Tensor({2}, {1.0f}), DimensionError);
  CHECK_THROWS_AS(Tensor({0}, {}), DimensionError);
}
