#include <doctest.h>

#include <cmath>
#include <cstring>

#include "glosslm/autodiff.hpp"
#include "support/fd_check.hpp"

using namespace glosslm;

namespace {

Parameter random_param(const std::string& name, int rows, int cols, std::uint64_t seed) {
  Tensor t(rows, cols);
  Rng rng(seed);
  for (float& v : t.data) v = rng.next_uniform(-0.5f, 0.5f);
  return Parameter(name, std::move(t));
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("relu clamps negatives") {
  Graph g;
  Value x = g.input(Tensor::from_rows(1, 2, {-1, 2}));
  const Tensor& y = g.value(g.relu(x));
  CHECK(y.at(0, 0) == 0.0f);
  CHECK(y.at(0, 1) == 2.0f);
}

TEST_CASE("matmul matches hand arithmetic on a 2x3 by 3x1 fixture") {
  Graph g;
  Value a = g.input(Tensor::from_rows(2, 3, {1, 2, 3, 4, 5, 6}));
  Value b = g.input(Tensor::from_rows(3, 1, {7, 8, 9}));
  const Tensor& c = g.value(g.matmul(a, b));
  CHECK(c.at(0, 0) == doctest::Approx(50.0f));
  CHECK(c.at(1, 0) == doctest::Approx(122.0f));
}

TEST_CASE("cross entropy of uniform logits is ln V") {
  Graph g;
  Value logits = g.input(Tensor::zeros(3, 4));
  const Tensor& loss = g.value(g.cross_entropy_sum(logits, {0, 2, 3}));
  CHECK(loss.at(0, 0) == doctest::Approx(3.0 * std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("shape and index violations are reported") {
  Graph g;
  Value a = g.input(Tensor::zeros(2, 3));
  Value b = g.input(Tensor::zeros(3, 3));
  CHECK_THROWS_WITH_AS(g.add(a, b), doctest::Contains("2x3"), ShapeError);
  Parameter table = random_param("emb", 4, 2, 1);
  Value t = g.param(table);
  CHECK_THROWS_AS(g.embedding_lookup(t, {0, 4}), IndexError);
  CHECK_THROWS_AS(g.cross_entropy_sum(a, {0, 5}), IndexError);
  CHECK_THROWS_AS(g.backward(a), ShapeError);  // loss must be 1x1
}

TEST_CASE("grad of sum(W x) matches finite differences") {
  Parameter w = random_param("w", 3, 2, 7);
  const Tensor x = Tensor::from_rows(2, 1, {0.3f, -0.7f});
  const Tensor ones = Tensor::full(1, 3, 1.0f);

  auto loss_value = [&]() {
    Graph g;
    Value wx = g.matmul(g.param(w), g.input(x));
    Value total = g.matmul(g.input(ones), wx);
    return static_cast<double>(g.value(total).at(0, 0));
  };

  Graph g;
  Value wx = g.matmul(g.param(w), g.input(x));
  Value total = g.matmul(g.input(ones), wx);
  g.backward(total);

  const auto fd = testing::fd_check({&w}, loss_value);
  INFO(fd.worst);
  CHECK(fd.max_rel_err < 1e-3);

  // outer-product structure: dW[i][j] = x[j]
  CHECK(w.grad.at(0, 0) == doctest::Approx(0.3f));
  CHECK(w.grad.at(2, 1) == doctest::Approx(-0.7f));
}

TEST_CASE("a composite with every primitive passes the finite-difference oracle") {
  Parameter emb = random_param("emb", 6, 3, 11);
  Parameter w1 = random_param("w1", 6, 4, 12);
  Parameter b1 = random_param("b1", 1, 4, 13);
  Parameter w2 = random_param("w2", 4, 5, 14);
  Parameter b2 = random_param("b2", 1, 5, 15);
  const std::vector<std::int32_t> ids_a = {1, 4, 0};
  const std::vector<std::int32_t> ids_b = {2, 3, 5};
  const std::vector<std::int32_t> targets = {4, 0, 2};
  const Tensor mask = make_dropout_mask(3, 5, 0.75f, 99);

  auto build = [&](Graph& g) {
    Value e = g.param(emb);
    Value left = g.embedding_lookup(e, ids_a);
    Value right = g.embedding_lookup(e, ids_b);
    const Value parts[] = {left, right};
    Value x = g.concat_cols(parts);
    Value hidden = g.relu(g.add_bias_row(g.matmul(x, g.param(w1)), g.param(b1)));
    Value gate = g.sigmoid(g.slice_cols(hidden, 0, 4));
    Value act = g.tanh(hidden);
    Value mixed = g.mul(gate, act);
    Value logits = g.apply_mask(g.add_bias_row(g.matmul(mixed, g.param(w2)), g.param(b2)),
                                mask);
    return g.scale(g.cross_entropy_sum(logits, targets), 1.0f / 3.0f);
  };

  auto loss_value = [&]() {
    Graph g;
    return static_cast<double>(g.value(build(g)).at(0, 0));
  };

  Graph g;
  g.backward(build(g));
  const auto fd = testing::fd_check({&emb, &w1, &b1, &w2, &b2}, loss_value);
  INFO(fd.worst);
  CHECK(fd.max_rel_err < 1e-3);
}

TEST_CASE("backward through concat routes gradients to the right column ranges") {
  Parameter left = random_param("left", 2, 3, 21);
  Parameter right = random_param("right", 2, 2, 22);
  const std::vector<std::int32_t> targets = {1, 3};

  auto build = [&](Graph& g) {
    const Value parts[] = {g.param(left), g.param(right)};
    return g.cross_entropy_sum(g.concat_cols(parts), targets);
  };
  auto loss_value = [&]() {
    Graph g;
    return static_cast<double>(g.value(build(g)).at(0, 0));
  };

  Graph g;
  g.backward(build(g));
  // per-slice finite differences
  const auto fd_left = testing::fd_check({&left}, loss_value);
  const auto fd_right = testing::fd_check({&right}, loss_value);
  INFO(fd_left.worst);
  CHECK(fd_left.max_rel_err < 1e-3);
  INFO(fd_right.worst);
  CHECK(fd_right.max_rel_err < 1e-3);
}

TEST_CASE("apply_mask with the all-ones mask is the identity in both passes") {
  Parameter w = random_param("w", 2, 3, 31);
  const std::vector<std::int32_t> targets = {0, 2};

  auto run = [&](bool masked) {
    w.zero_grad();
    Graph g;
    Value x = g.param(w);
    if (masked) x = g.apply_mask(x, make_dropout_mask(2, 3, 1.0f, 5));
    g.backward(g.cross_entropy_sum(x, targets));
    return std::make_pair(g.value(x), w.grad);
  };

  const auto [plain_val, plain_grad] = run(false);
  const auto [masked_val, masked_grad] = run(true);
  CHECK(plain_val.data == masked_val.data);
  CHECK(plain_grad.data == masked_grad.data);
}

TEST_CASE("gradients accumulate across backward passes until zeroed") {
  Parameter w = random_param("w", 2, 2, 41);
  const std::vector<std::int32_t> targets = {0, 1};

  auto backward_once = [&]() {
    Graph g;
    g.backward(g.cross_entropy_sum(g.param(w), targets));
  };
  backward_once();
  const Tensor once = w.grad;
  backward_once();
  for (std::size_t i = 0; i < once.size(); ++i)
    CHECK(w.grad.data[i] == doctest::Approx(2.0f * once.data[i]));
}

TEST_CASE("frozen parameters receive exactly zero gradient") {
  Parameter w = random_param("w", 2, 2, 51);
  w.trainable = false;
  Graph g;
  g.backward(g.cross_entropy_sum(g.param(w), {0, 1}));
  for (float v : w.grad.data) CHECK(v == 0.0f);
}

TEST_CASE("sgd_step applies the textbook update") {
  Parameter p("p", Tensor::full(1, 1, 1.0f));
  p.grad.at(0, 0) = 0.5f;
  Parameter* params[] = {&p};
  sgd_step(params, 0.1f, std::nullopt);
  CHECK(p.value.at(0, 0) == doctest::Approx(0.95f));
  CHECK(p.grad.at(0, 0) == 0.0f);  // grads zeroed afterwards
}

TEST_CASE("sgd_step leaves frozen parameters bit-identical") {
  Parameter p = random_param("p", 3, 3, 61);
  p.trainable = false;
  std::fill(p.grad.data.begin(), p.grad.data.end(), 1.0f);
  const Tensor before = p.value;
  Parameter* params[] = {&p};
  sgd_step(params, 10.0f, std::nullopt);
  CHECK(std::memcmp(before.ptr(), p.value.ptr(), before.size() * sizeof(float)) == 0);
}

TEST_CASE("global norm clipping rescales all gradients together") {
  // grads [6, 8] have global 2-norm 10; clip 5 halves both
  Parameter a("a", Tensor::full(1, 1, 0.0f));
  Parameter b("b", Tensor::full(1, 1, 0.0f));
  a.grad.at(0, 0) = 6.0f;
  b.grad.at(0, 0) = 8.0f;
  Parameter* params[] = {&a, &b};
  sgd_step(params, 1.0f, 5.0f);
  CHECK(a.value.at(0, 0) == doctest::Approx(-3.0f));
  CHECK(b.value.at(0, 0) == doctest::Approx(-4.0f));
}

TEST_CASE("sgd_step with lr 0 is a bit-identical no-op") {
  Parameter p = random_param("p", 4, 4, 71);
  Rng rng(72);
  for (float& v : p.grad.data) v = rng.next_uniform(-1.0f, 1.0f);
  const Tensor before = p.value;
  Parameter* params[] = {&p};
  sgd_step(params, 0.0f, 0.25f);
  CHECK(std::memcmp(before.ptr(), p.value.ptr(), before.size() * sizeof(float)) == 0);
}

TEST_CASE("non-finite gradients raise a numeric error naming the parameter") {
  Parameter p = random_param("embedding", 2, 2, 81);
  p.grad.at(0, 0) = std::numeric_limits<float>::quiet_NaN();
  Parameter* params[] = {&p};
  CHECK_THROWS_WITH_AS(sgd_step(params, 0.1f, std::nullopt), doctest::Contains("embedding"),
                       NumericError);
}

TEST_CASE("dropout masks follow the inverted-scaling contract") {
  const Tensor ones = make_dropout_mask(5, 5, 1.0f, 3);
  for (float v : ones.data) CHECK(v == 1.0f);

  const Tensor a = make_dropout_mask(100, 100, 0.5f, 17);
  const Tensor b = make_dropout_mask(100, 100, 0.5f, 17);
  CHECK(a.data == b.data);  // deterministic per seed

  double mean = 0.0;
  for (float v : a.data) {
    CHECK((v == 0.0f || v == 2.0f));
    mean += v;
  }
  mean /= static_cast<double>(a.size());
  // binomial bound: sd of the mean is 1/sqrt(10000)
  CHECK(std::abs(mean - 1.0) < 0.03);

  CHECK_THROWS_AS(make_dropout_mask(2, 2, 0.0f, 1), DomainError);
  CHECK_THROWS_AS(make_dropout_mask(2, 2, 1.5f, 1), DomainError);
}

TEST_CASE("log-softmax stays normalized and finite for logits in [-50, 50]") {
  Rng rng(91);
  for (int trial = 0; trial < 20; ++trial) {
    const int v = 2 + static_cast<int>(rng.next_below(10));
    Tensor logits(1, v);
    for (float& x : logits.data) x = rng.next_uniform(-50.0f, 50.0f);
    double total = 0.0;
    for (std::int32_t j = 0; j < v; ++j) {
      const std::int32_t tgt[] = {j};
      const double nll = ops::row_nll(logits, tgt)[0];
      REQUIRE(std::isfinite(nll));
      CHECK(nll >= -1e-6);  // probabilities never exceed 1
      total += std::exp(-nll);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
  }
}

}  // TEST_SUITE
