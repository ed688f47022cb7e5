#include <doctest.h>

#include "sll/adam.hpp"

using namespace sll;

namespace {
Tensor param1(double v) {
  Tensor t = Tensor::from({1}, {v});
  t.set_requires_grad(true);
  return t;
}

void set_grad(Tensor& t, std::vector<double> g) {
  t.node()->ensure_grad();
  t.node()->grad = std::move(g);
}
}  // namespace

TEST_CASE("zero gradient on every step leaves parameters unchanged") {
  Tensor p = param1(2.5);
  std::vector<Tensor> params = {p};
  AdamState st;
  st.lr = 0.1;
  st.init(params);
  for (int i = 0; i < 10; ++i) {
    set_grad(p, {0.0});
    adam_step(params, st);
  }
  CHECK(p.values()[0] == 2.5);
  CHECK(st.step == 10);
}

TEST_CASE("bias-corrected first step moves by about lr") {
  // Hand evaluation of the recurrence: m=0.1, v=0.001, mhat=1, vhat=1,
  // update = lr * 1 / (1 + eps).
  Tensor p = param1(1.0);
  std::vector<Tensor> params = {p};
  AdamState st;
  st.lr = 0.1;
  set_grad(p, {1.0});
  adam_step(params, st);
  CHECK(p.values()[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("joint update equals independent updates per parameter") {
  Tensor a = param1(1.0), b = param1(-2.0);
  std::vector<Tensor> joint = {a, b};
  AdamState st;
  st.lr = 0.05;
  for (int i = 0; i < 5; ++i) {
    set_grad(a, {0.3});
    set_grad(b, {-0.7});
    adam_step(joint, st);
  }

  Tensor a2 = param1(1.0), b2 = param1(-2.0);
  std::vector<Tensor> only_a = {a2}, only_b = {b2};
  AdamState sa, sb;
  sa.lr = sb.lr = 0.05;
  for (int i = 0; i < 5; ++i) {
    set_grad(a2, {0.3});
    adam_step(only_a, sa);
    set_grad(b2, {-0.7});
    adam_step(only_b, sb);
  }
  CHECK(a.values()[0] == a2.values()[0]);
  CHECK(b.values()[0] == b2.values()[0]);
}

TEST_CASE("shape drift against the state raises a dimension error") {
  Tensor p = param1(0.0);
  std::vector<Tensor> params = {p};
  AdamState st;
  st.init(params);
  Tensor q = Tensor::zeros({3});
  q.set_requires_grad(true);
  std::vector<Tensor> wrong = {q};
  CHECK_THROWS_AS(adam_step(wrong, st), DimensionError);
}

TEST_CASE("step count strictly increases") {
  Tensor p = param1(0.0);
  std::vector<Tensor> params = {p};
  AdamState st;
  st.init(params);
  for (int i = 1; i <= 7; ++i) {
    set_grad(p, {0.1});
    adam_step(params, st);
    CHECK(st.step == i);
  }
}
