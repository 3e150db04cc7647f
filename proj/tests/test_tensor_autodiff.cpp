#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "ssvmr/autodiff.hpp"
#include "ssvmr/error.hpp"
#include "ssvmr/optim.hpp"
#include "support.hpp"

using namespace ssvmr;
using ssvmr::testing::gradcheck;
using ssvmr::testing::random_tensor;

TEST_CASE("matmul with identity returns the other operand") {
  Rng rng = make_rng(1, {});
  const Tensor a = random_tensor(3, 4, rng);
  CHECK(matmul(Tensor::identity(3), a) == a);
  Tape t;
  CHECK(matmul(t.constant(Tensor::identity(3)), t.constant(a)).value() == a);
}

TEST_CASE("max_with_zero clips negatives") {
  Tape t;
  CHECK(max_with_zero(t.constant(Tensor::scalar(-2.5))).value().item() == 0.0);
  CHECK(max_with_zero(t.constant(Tensor::scalar(1.5))).value().item() == 1.5);
}

TEST_CASE("softmax of equal logits is uniform") {
  Tape t;
  const Tensor p = softmax(t.constant(Tensor::row_vector({0, 0, 0}))).value();
  for (double x : p.data()) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("gradient of a linear form is the other vector") {
  Tape t;
  const Tensor x = Tensor::row_vector({1.5, -2.0, 0.25});
  const Var w = t.variable(Tensor::row_vector({0.3, 0.1, -0.7}));
  t.backward(dot(w, t.constant(x)));
  CHECK(w.grad() == x);
}

TEST_CASE("relu derivative is a step") {
  Tape t;
  const Var x = t.variable(Tensor::row_vector({-1, 2}));
  t.backward(sum(relu(x)));
  CHECK(x.grad() == Tensor::row_vector({0, 1}));
}

TEST_CASE("untouched variables get zero gradient") {
  Tape t;
  const Var x = t.variable(Tensor::row_vector({1, 2}));
  const Var unused = t.variable(Tensor(2, 2, 3.0));
  t.backward(sum(x));
  CHECK(unused.grad() == Tensor(2, 2, 0.0));
}

TEST_CASE("backward on a non-scalar is a contract error") {
  Tape t;
  const Var x = t.variable(Tensor::row_vector({1, 2}));
  CHECK_THROWS_AS(t.backward(x), ContractError);
}

TEST_CASE("shape mismatches raise dimension errors") {
  Tape t;
  const Var a = t.variable(Tensor(2, 3));
  const Var b = t.variable(Tensor(3, 2));
  CHECK_THROWS_AS(add(a, b), DimensionError);
  CHECK_THROWS_AS(mul(a, b), DimensionError);
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
  CHECK_NOTHROW(matmul(a, b));
}

TEST_CASE("non-finite results raise numeric errors") {
  Tape t;
  CHECK_THROWS_AS(log(t.constant(Tensor::scalar(-1.0))), NumericError);
  CHECK_THROWS_AS(log(t.constant(Tensor::scalar(0.0))), NumericError);
  CHECK_THROWS_AS(t.variable(Tensor::scalar(std::nan(""))), NumericError);
}

TEST_CASE("every op matches central differences") {
  Rng rng = make_rng(11, {});
  using V = const std::vector<Var>&;
  struct Case {
    const char* name;
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    testing::Builder f;
    bool positive = false;
  };
  const std::vector<Case> cases{
      {"matmul", {{3, 4}, {4, 2}}, [](Tape&, V x) { return sum(matmul(x[0], x[1])); }},
      {"transpose", {{3, 2}, {3, 2}}, [](Tape&, V x) { return dot(transpose(x[0]), transpose(mul(x[0], x[1]))); }},
      {"add_sub", {{2, 3}, {2, 3}}, [](Tape&, V x) { return dot(add(x[0], x[1]), sub(x[0], x[1])); }},
      {"mul", {{2, 3}, {2, 3}}, [](Tape&, V x) { return sum(mul(mul(x[0], x[1]), x[0])); }},
      {"scale_add_scalar", {{2, 2}}, [](Tape&, V x) { return dot(scale(x[0], -1.7), add_scalar(x[0], 0.3)); }},
      {"relu", {{3, 3}, {3, 3}}, [](Tape&, V x) { return dot(relu(x[0]), x[1]); }},
      {"max_with_zero", {{3, 3}, {3, 3}}, [](Tape&, V x) { return dot(max_with_zero(x[0]), x[1]); }},
      {"tanh", {{2, 4}, {2, 4}}, [](Tape&, V x) { return dot(tanh(x[0]), x[1]); }},
      {"log", {{2, 3}, {2, 3}}, [](Tape&, V x) { return dot(log(x[0]), x[1]); }, true},
      {"dot", {{1, 5}, {1, 5}}, [](Tape&, V x) { return mul(dot(x[0], x[1]), dot(x[0], x[0])); }},
      {"l2_norm", {{3, 2}}, [](Tape&, V x) { return l2_norm(x[0]); }},
      {"softmax", {{2, 4}, {2, 4}}, [](Tape&, V x) { return dot(softmax(x[0]), x[1]); }},
      {"log_softmax", {{2, 4}, {2, 4}}, [](Tape&, V x) { return dot(log_softmax(x[0]), x[1]); }},
      {"concat_rows", {{1, 3}, {2, 3}, {3, 3}},
       [](Tape&, V x) {
         const std::vector<Var> parts{x[0], x[1]};
         return dot(concat_rows(parts), x[2]);
       }},
      {"mean_rows", {{4, 3}, {1, 3}}, [](Tape&, V x) { return dot(mean_rows(x[0]), x[1]); }},
      {"row_sums", {{4, 3}, {4, 1}}, [](Tape&, V x) { return dot(row_sums(x[0]), x[1]); }},
      {"dropout_mask_apply", {{3, 3}, {3, 3}},
       [](Tape&, V x) {
         Rng r = make_rng(5, {});
         return dot(dropout_mask_apply(x[0], make_dropout_mask(3, 3, 0.5, r)), x[1]);
       }},
  };
  for (const auto& c : cases) {
    for (int rep = 0; rep < 100; ++rep) {
      std::vector<Tensor> inputs;
      for (auto [r, k] : c.shapes) {
        Tensor x = random_tensor(r, k, rng);
        if (c.positive) {
          for (double& v : x.data()) v = std::abs(v) + 0.5;
        }
        inputs.push_back(x);
      }
      INFO(c.name << " rep " << rep);
      CHECK(gradcheck(c.f, inputs) < 1e-4);
    }
  }
}

TEST_CASE("gradients of a sum are sums of gradients") {
  Rng rng = make_rng(12, {});
  const Tensor x0 = random_tensor(3, 3, rng);
  auto f1 = [](const Var& x) { return sum(tanh(matmul(x, x))); };
  auto f2 = [](const Var& x) { return l2_norm(softmax(x)); };
  Tape a;
  const Var xa = a.variable(x0);
  a.backward(add(f1(xa), f2(xa)));
  Tape b;
  const Var xb = b.variable(x0);
  b.backward(f1(xb));
  Tape c;
  const Var xc = c.variable(x0);
  c.backward(f2(xc));
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(xa.grad()[i] == doctest::Approx(xb.grad()[i] + xc.grad()[i]));
}

TEST_CASE("Adam leaves parameters alone under zero gradients") {
  std::vector<Tensor> params{Tensor::row_vector({1.0, -2.0})};
  const std::vector<Tensor> grads{Tensor(1, 2, 0.0)};
  AdamState s = make_adam_state(params);
  for (int i = 0; i < 10; ++i) adam_step(s, params, grads);
  CHECK(params[0] == Tensor::row_vector({1.0, -2.0}));
  CHECK(s.step == 10);
}

TEST_CASE("first Adam step moves by the learning rate") {
  std::vector<Tensor> params{Tensor::scalar(0.0)};
  const std::vector<Tensor> grads{Tensor::scalar(1.0)};
  AdamState s = make_adam_state(params, {.learning_rate = 0.001});
  adam_step(s, params, grads);
  // m_hat = 1, v_hat = 1, update = -lr * 1 / (1 + eps)
  CHECK(params[0].item() == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("Adam covers at most the learning rate per step on a parabola") {
  std::vector<Tensor> params{Tensor::scalar(5.0)};
  AdamState s = make_adam_state(params, {.learning_rate = 4e-4});
  for (int i = 0; i < 2000; ++i) {
    const std::vector<Tensor> grads{Tensor::scalar(2.0 * params[0].item())};
    adam_step(s, params, grads);
  }
  // 2000 steps of at most lr each cannot cover the distance from 5 to 0
  // (4e-4 * 2000 = 0.8); the step count sets the reachable minimum.
  CHECK(params[0].item() >= 5.0 - 0.8 - 1e-9);
  CHECK(params[0].item() < 4.3);
}

TEST_CASE("Adam converges on a parabola with enough steps") {
  std::vector<Tensor> params{Tensor::scalar(5.0)};
  AdamState s = make_adam_state(params, {.learning_rate = 4e-4});
  for (int i = 0; i < 20000; ++i) {
    const std::vector<Tensor> grads{Tensor::scalar(2.0 * params[0].item())};
    adam_step(s, params, grads);
  }
  CHECK(std::abs(params[0].item()) < 0.1);
}

TEST_CASE("Adam names the parameter with a non-finite gradient") {
  std::vector<Tensor> params{Tensor::scalar(1.0), Tensor::scalar(2.0)};
  const std::vector<Tensor> grads{Tensor::scalar(0.0), Tensor::scalar(INFINITY)};
  const std::vector<std::string> names{"alpha", "beta"};
  AdamState s = make_adam_state(params);
  try {
    adam_step(s, params, grads, names);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("beta") != std::string::npos);
  }
}

TEST_CASE("dropout at rate zero is the identity") {
  Rng rng = make_rng(3, {});
  const Tensor x = random_tensor(4, 5, rng);
  CHECK(apply_dropout(x, 0.0, rng) == x);
}

TEST_CASE("inverted dropout keeps entries at twice their value for rate one half") {
  Rng rng = make_rng(4, {});
  const Tensor x = random_tensor(10, 10, rng);
  const Tensor y = apply_dropout(x, 0.5, rng);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK((y[i] == 0.0 || y[i] == 2.0 * x[i]));
}

TEST_CASE("dropout preserves the mean in expectation") {
  Rng rng = make_rng(5, {});
  const Tensor x(1, 1, 3.0);
  for (double rate : {0.5, 0.9}) {
    double total = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) total += apply_dropout(x, rate, rng).item();
    CHECK(std::abs(total / n - 3.0) < 0.02 * 3.0);
  }
}

TEST_CASE("dropout rejects rates outside [0, 1)") {
  Rng rng = make_rng(6, {});
  CHECK_THROWS_AS(make_dropout_mask(2, 2, 1.0, rng), ContractError);
  CHECK_THROWS_AS(make_dropout_mask(2, 2, -0.1, rng), ContractError);
}

TEST_CASE("dropout masks are reproducible from the seed") {
  Rng a = make_rng(7, {1, 2});
  Rng b = make_rng(7, {1, 2});
  Rng c = make_rng(7, {1, 3});
  const Tensor ma = make_dropout_mask(8, 8, 0.5, a);
  CHECK(ma == make_dropout_mask(8, 8, 0.5, b));
  CHECK_FALSE(ma == make_dropout_mask(8, 8, 0.5, c));
}
