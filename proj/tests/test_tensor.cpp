#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "sepitfp/errors.hpp"
#include "sepitfp/tensor.hpp"

using namespace sepitfp;

namespace {

Tensor rand_tensor(Shape shape, std::mt19937_64& gen, bool rg = true) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = u(gen);
  return Tensor(std::move(shape), std::move(v), rg);
}

}  // namespace

TEST_CASE("forward value goldens") {
  const Tensor a({3}, {1.0, -2.0, 0.5});
  const Tensor b({3}, {4.0, 1.0, -1.0});
  CHECK(add(a, b).values() == std::vector<double>{5.0, -1.0, -0.5});
  CHECK(sub(a, b).values() == std::vector<double>{-3.0, -3.0, 1.5});
  CHECK(mul(a, b).values() == std::vector<double>{4.0, -2.0, -0.5});
  CHECK(scalar_mul(a, -2.0).values() == std::vector<double>{-2.0, 4.0, -1.0});
  CHECK(add_const(a, 1.0).values() == std::vector<double>{2.0, -1.0, 1.5});
  CHECK(relu_t(a).values() == std::vector<double>{1.0, 0.0, 0.5});
  CHECK(abs_t(a).values() == std::vector<double>{1.0, 2.0, 0.5});
  CHECK(exp_t(Tensor({1}, {1.0})).values()[0] ==
        doctest::Approx(2.718281828459045).epsilon(1e-15));
  CHECK(ln_t(Tensor({1}, {std::exp(2.0)})).values()[0] ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK(tanh_t(Tensor({1}, {0.5})).values()[0] ==
        doctest::Approx(std::tanh(0.5)).epsilon(1e-15));
  CHECK(sigmoid_t(Tensor({1}, {0.0})).values()[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("matmul golden and shape checks") {
  const Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b({3, 2}, {7, 8, 9, 10, 11, 12});
  const Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c.values() == std::vector<double>{58, 64, 139, 154});
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(add(a, b), ShapeError);
}

TEST_CASE("softmax rows sum to one and match closed form") {
  const Tensor x({2, 3}, {0.0, 1.0, 2.0, -1.0, 0.0, 1.0});
  const Tensor s = softmax_rows(x);
  for (int r = 0; r < 2; ++r) {
    double sum = 0.0;
    for (int c = 0; c < 3; ++c) sum += s.values()[3 * r + c];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  const double z = std::exp(0.0) + std::exp(1.0) + std::exp(2.0);
  CHECK(s.values()[0] == doctest::Approx(std::exp(0.0) / z).epsilon(1e-12));
  // shift invariance: both rows encode the same logit differences
  CHECK(s.values()[0] == doctest::Approx(s.values()[3]).epsilon(1e-12));
}

TEST_CASE("softmax survives large logits") {
  const Tensor x({1, 2}, {1000.0, 1001.0});
  const Tensor s = softmax_rows(x);
  CHECK(s.values()[1] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("ln rejects non-positive input") {
  CHECK_THROWS_AS(ln_t(Tensor({1}, {0.0})), DomainError);
  CHECK_THROWS_AS(ln_t(Tensor({2}, {1.0, -3.0})), DomainError);
}

TEST_CASE("structure ops") {
  const Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(transpose(a).values() == std::vector<double>{1, 4, 2, 5, 3, 6});
  CHECK(reshape(a, {3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(reshape(a, {4, 2}), ShapeError);
  CHECK(concat({Tensor({2}, {1, 2}), Tensor({1}, {3})}).values() ==
        std::vector<double>{1, 2, 3});
  CHECK(concat_cols({a, a}).shape() == Shape{2, 6});
  CHECK(slice_rows(a, 1, 2).values() == std::vector<double>{4, 5, 6});
  CHECK(slice_cols(a, 0, 2).values() == std::vector<double>{1, 2, 4, 5});
  CHECK_THROWS_AS(slice_rows(a, 1, 1), ShapeError);
}

TEST_CASE("pooling and conv forward goldens") {
  const Tensor x({4, 2}, {1, 10, 2, 20, 3, 30, 4, 40});
  CHECK(avg_pool_rows(x, 2).values() == std::vector<double>{1.5, 15, 3.5, 35});
  CHECK(global_avg_pool_1d(x).values() == std::vector<double>{2.5, 25});
  CHECK(max_pool_1d(x, 2, 2).values() == std::vector<double>{2, 20, 4, 40});
  CHECK(mean_all(x).item() == doctest::Approx(13.75).epsilon(1e-12));

  // identity kernel copies the channel
  const Tensor k({1, 2, 1}, {1.0, 0.0});
  const Tensor y = conv_1d(x, k, 1, 0);
  CHECK(y.shape() == Shape{4, 1});
  CHECK(y.values() == std::vector<double>{1, 2, 3, 4});

  // width-3 moving sum with zero padding
  const Tensor x1({5, 1}, {1, 2, 3, 4, 5});
  const Tensor k3({3, 1, 1}, {1.0, 1.0, 1.0});
  CHECK(conv_1d(x1, k3, 1, 1).values() == std::vector<double>{3, 6, 9, 12, 9});

  CHECK(conv_1d_output_length(128, 5, 1, 0) == 124);
  CHECK(pool_1d_output_length(124, 2, 2) == 62);
}

TEST_CASE("backward: matmul chain against finite differences") {
  std::mt19937_64 gen(5);
  auto f = [](const std::vector<Tensor>& in) {
    return mean_all(tanh_t(matmul(in[0], in[1])));
  };
  const auto rep = grad_check(f, {rand_tensor({3, 4}, gen), rand_tensor({4, 2}, gen)},
                              1e-6, 1e-6);
  INFO(rep.worst_location);
  CHECK(rep.pass);
}

TEST_CASE("backward: composite elementwise chain") {
  std::mt19937_64 gen(6);
  auto f = [](const std::vector<Tensor>& in) {
    const Tensor z = add(mul(in[0], in[1]), scalar_mul(in[0], 0.3));
    return mean_all(mul(sigmoid_t(z), exp_t(scalar_mul(abs_t(z), 0.5))));
  };
  const auto rep =
      grad_check(f, {rand_tensor({6}, gen), rand_tensor({6}, gen)}, 1e-6, 1e-6);
  INFO(rep.worst_location);
  CHECK(rep.pass);
}

TEST_CASE("backward: pooling, conv, slicing, softmax") {
  std::mt19937_64 gen(8);
  auto f = [](const std::vector<Tensor>& in) {
    Tensor y = conv_1d(in[0], in[1], 1, 1);
    y = max_pool_1d(y, 2, 2);
    y = softmax_rows(y);
    y = concat_cols({slice_cols(y, 0, 1), slice_cols(y, 1, 2)});
    return mean_all(mul(y, y));
  };
  const auto rep =
      grad_check(f, {rand_tensor({8, 2}, gen), rand_tensor({3, 2, 2}, gen)}, 1e-6, 1e-5);
  INFO(rep.worst_location);
  CHECK(rep.pass);
}

TEST_CASE("gradient accumulates over reused nodes") {
  const Tensor x({1}, {3.0}, true);
  const Tensor y = mean_all(mul(x, x));  // d/dx x^2 = 2x
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar roots and double invocation") {
  const Tensor x({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(backward(scalar_mul(x, 2.0)), ShapeError);
  const Tensor s = mean_all(x);
  backward(s);
  CHECK_THROWS_AS(backward(s), DomainError);
}

TEST_CASE("no-grad guard suppresses graph recording") {
  const Tensor x({2}, {1.0, 2.0}, true);
  NoGradGuard ng;
  const Tensor y = mean_all(mul(x, x));
  CHECK_FALSE(y.requires_grad());
  CHECK_THROWS(backward(y));
}

TEST_CASE("negative control: corrupted backward rule is caught") {
  // hand-built node whose backward deliberately doubles the true gradient;
  // grad_check must report a relative deviation near 1
  auto f = [](const std::vector<Tensor>& in) {
    NodePtr n = std::make_shared<TensorNode>();
    n->shape = in[0].shape();
    n->values.resize(in[0].values().size());
    for (std::size_t i = 0; i < n->values.size(); ++i) {
      n->values[i] = in[0].values()[i] * in[0].values()[i];
    }
    n->requires_grad = true;
    n->parents = {in[0].node()};
    n->backward_fn = [](TensorNode& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < p.values.size(); ++i) {
        p.grad[i] += self.grad[i] * 4.0 * p.values[i];  // true rule is 2x
      }
    };
    return mean_all(Tensor(n));
  };
  std::mt19937_64 gen(9);
  const auto rep = grad_check(f, {rand_tensor({4}, gen)}, 1e-6, 1e-6);
  CHECK_FALSE(rep.pass);
  CHECK(rep.max_rel_dev == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("non-finite results are rejected") {
  const Tensor big({1}, {1e308});
  CHECK_THROWS_AS(mul(big, big), NumericError);
  CHECK_THROWS_AS(exp_t(Tensor({1}, {1e4})), NumericError);
}
