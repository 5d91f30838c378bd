#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gradnoise/init.hpp"
#include "gradnoise/nn.hpp"
#include "support/precise_oracle.hpp"

using namespace gradnoise;
using namespace gradnoise::nn;

namespace {

AffineLayer layer(Tensor w, Tensor b) { return {std::move(w), std::move(b)}; }

MlpModel random_model(Rng& rng, std::vector<std::size_t> widths) {
  std::vector<std::pair<std::size_t, std::size_t>> dims;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) dims.emplace_back(widths[i], widths[i + 1]);
  auto layers = init::initialize(init::InitScheme::he(), dims, rng);
  for (auto& l : layers)
    for (double& b : l.bias.data()) b = rng.uniform(-0.5, 0.5);
  return MlpModel(std::move(layers));
}

Tensor random_batch(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t(Shape(rows, cols));
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("relu") {
  CHECK(relu(Tensor::vector({-1, 0, 2})) == Tensor::vector({0, 0, 2}));
  CHECK(relu(Tensor::vector({-3, -0.5})) == Tensor::vector({0, 0}));
  Rng rng(4);
  const auto x = random_batch(rng, 5, 6);
  CHECK(relu(relu(x)) == relu(x));
}

TEST_CASE("relu_backward") {
  CHECK(relu_backward(Tensor::vector({1, 1, 1}), Tensor::vector({-1, 0, 2})) == Tensor::vector({0, 0, 1}));
  CHECK(relu_backward(Tensor::vector({4, 5}), Tensor::vector({1, 2})) == Tensor::vector({4, 5}));
  CHECK(relu_backward(Tensor::vector({0, 0}), Tensor::vector({1, -2})) == Tensor::vector({0, 0}));
  CHECK_THROWS_AS(relu_backward(Tensor::vector({1}), Tensor::vector({1, 2})), DimensionError);
}

TEST_CASE("softmax_cross_entropy") {
  SUBCASE("uniform logits") {
    const auto r = softmax_cross_entropy(Tensor::vector({0, 0}), 0);
    CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(r.grad[0] == doctest::Approx(-0.5));
    CHECK(r.grad[1] == doctest::Approx(0.5));
    CHECK(softmax_cross_entropy(Tensor(Shape(10)), 3).loss == doctest::Approx(std::log(10.0)).epsilon(1e-15));
  }
  SUBCASE("large logits do not overflow") {
    const auto r = softmax_cross_entropy(Tensor::vector({1000, 0}), 0);
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss == doctest::Approx(0.0));
    CHECK(r.grad.all_finite());
  }
  SUBCASE("label out of range") {
    CHECK_THROWS_AS(softmax_cross_entropy(Tensor::vector({1, 2}), 2), std::out_of_range);
    const std::vector<int> labels{0, -1};
    CHECK_THROWS_AS(softmax_cross_entropy(Tensor(Shape(2, 3)), labels), std::out_of_range);
  }
  SUBCASE("loss is non-negative and gradient rows sum to zero") {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t classes = 2 + rng.uniform_index(9);
      Tensor logits{Shape(classes)};
      for (double& v : logits.data()) v = rng.gaussian(0.0, 20.0);
      const auto r = softmax_cross_entropy(logits, rng.uniform_index(classes));
      CHECK(r.loss >= 0.0);
      double s = 0.0;
      for (double g : r.grad.data()) s += g;
      CHECK(std::abs(s) < 1e-12);
    }
  }
  SUBCASE("batch overload averages") {
    const auto logits = Tensor::matrix({{0, 0}, {1000, 0}});
    const std::vector<int> labels{0, 0};
    const auto r = softmax_cross_entropy(logits, labels);
    CHECK(r.loss == doctest::Approx(std::log(2.0) / 2.0));
    CHECK(r.grad(0, 0) == doctest::Approx(-0.25));
    CHECK(r.grad(1, 0) == doctest::Approx(0.0));
  }
}

TEST_CASE("dropout_forward") {
  Rng rng(12);
  Tensor x(Shape(4, 5), 2.0);
  SUBCASE("rate 0 is identity with all-ones mask") {
    const auto r = dropout_forward(x, 0.0, rng, true);
    CHECK(r.output == x);
    CHECK(r.mask == Tensor(Shape(4, 5), 1.0));
  }
  SUBCASE("inference is identity") {
    CHECK(dropout_forward(x, 0.7, rng, false).output == x);
  }
  SUBCASE("rate outside [0, 1)") {
    CHECK_THROWS_AS(dropout_forward(x, 1.0, rng, true), std::invalid_argument);
    CHECK_THROWS_AS(dropout_forward(x, -0.1, rng, true), std::invalid_argument);
  }
  SUBCASE("survivor fraction at rate 0.5 over 10^5 units") {
    const auto r = dropout_forward(Tensor(Shape(100'000), 1.0), 0.5, rng, true);
    const double kept = std::accumulate(r.mask.data().begin(), r.mask.data().end(), 0.0) / 1e5;
    CHECK(kept >= 0.494);
    CHECK(kept <= 0.506);
    for (std::size_t i = 0; i < 100; ++i) CHECK(r.output[i] == (r.mask[i] == 1.0 ? 2.0 : 0.0));
  }
  SUBCASE("expectation is preserved") {
    // mean of 10^5 independent draws of dropout(x) at rate 0.3 for x = 1.5:
    // per-draw variance x^2 * rate / (1 - rate), 3-sigma band on the mean.
    const double rate = 0.3, value = 1.5;
    const auto r = dropout_forward(Tensor(Shape(100'000), value), rate, rng, true);
    const double mean = std::accumulate(r.output.data().begin(), r.output.data().end(), 0.0) / 1e5;
    const double sd = value * std::sqrt(rate / (1 - rate)) / std::sqrt(1e5);
    CHECK(std::abs(mean - value) < 3.0 * sd);
  }
}

TEST_CASE("MlpModel validates the layer chain") {
  CHECK_THROWS_AS(MlpModel({layer(Tensor(Shape(2, 3)), Tensor(Shape(3))), layer(Tensor(Shape(4, 2)), Tensor(Shape(2)))}),
                  DimensionError);
  CHECK_THROWS_AS(MlpModel({layer(Tensor(Shape(2, 3)), Tensor(Shape(2)))}), DimensionError);
  CHECK_THROWS_AS(MlpModel({layer(Tensor(Shape(2, 3)), Tensor(Shape(3)))}, 1.0), std::invalid_argument);
  const auto dims = mlp_dims(784, 50, 20, 10);
  CHECK(dims.size() == 21);
  CHECK(dims.front() == std::pair<std::size_t, std::size_t>{784, 50});
  CHECK(dims.back() == std::pair<std::size_t, std::size_t>{50, 10});
}

TEST_CASE("mlp_forward") {
  Rng rng(2);
  SUBCASE("zero weights give zero logits") {
    Rng init_rng(1);
    const MlpModel model(init::initialize(init::InitScheme::zero(), mlp_dims(6, 4, 3, 10), init_rng));
    const auto logits = mlp_forward(model, random_batch(rng, 3, 6), rng, false).logits;
    CHECK(logits.shape() == Shape(3, 10));
    CHECK(logits == Tensor(Shape(3, 10)));
  }
  SUBCASE("hand chain") {
    const MlpModel model({layer(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::vector({1, 1})),
                          layer(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::vector({0, 0}))});
    CHECK(mlp_forward(model, Tensor::matrix({{1, 2}}), rng, false).logits == Tensor::matrix({{2, 3}}));
  }
  SUBCASE("inference is a pure function") {
    const auto model = random_model(rng, {5, 7, 7, 3});
    const auto x = random_batch(rng, 4, 5);
    const auto a = mlp_forward(model, x, rng, false).logits;
    CHECK(a == mlp_forward(model, x, rng, false).logits);
    CHECK(a == mlp_logits(model, x));
  }
  SUBCASE("input width mismatch") {
    const auto model = random_model(rng, {5, 3});
    CHECK_THROWS_AS(mlp_forward(model, random_batch(rng, 2, 4), rng, false), DimensionError);
  }
  SUBCASE("cache reproduces the output") {
    const auto model = random_model(rng, {4, 6, 6, 3});
    const auto fwd = mlp_forward(model, random_batch(rng, 3, 4), rng, false);
    const auto& last = model.layers().back();
    Tensor logits = matmul(fwd.cache.inputs.back(), last.weights);
    for (std::size_t r = 0; r < logits.rows(); ++r)
      for (std::size_t c = 0; c < logits.cols(); ++c) logits(r, c) += last.bias[c];
    CHECK(logits == fwd.logits);
    CHECK(relu(fwd.cache.preacts.back()) == fwd.cache.inputs.back());
  }
}

TEST_CASE("mlp_backward") {
  Rng rng(3);
  SUBCASE("zero upstream gives zero gradients") {
    const auto model = random_model(rng, {4, 5, 3});
    const auto fwd = mlp_forward(model, random_batch(rng, 2, 4), rng, false);
    const auto g = mlp_backward(model, fwd.cache, Tensor(Shape(2, 3)));
    CHECK(g.norm() == 0.0);
    CHECK(g.size() == 4);
  }
  SUBCASE("single affine layer is an outer product") {
    const MlpModel model({layer(Tensor::matrix({{0.3, -0.2}, {0.1, 0.4}}), Tensor::vector({0, 0}))});
    const auto fwd = mlp_forward(model, Tensor::matrix({{1, 0}}), rng, false);
    const auto g = mlp_backward(model, fwd.cache, Tensor::matrix({{0.7, -1.1}}));
    CHECK(g[0].name == "layer0.weights");
    CHECK(g[0].value == Tensor::matrix({{0.7, -1.1}, {0, 0}}));
    CHECK(g[1].name == "layer0.bias");
    CHECK(g[1].value == Tensor::vector({0.7, -1.1}));
  }
  SUBCASE("shape of upstream must match logits") {
    const auto model = random_model(rng, {4, 3});
    const auto fwd = mlp_forward(model, random_batch(rng, 2, 4), rng, false);
    CHECK_THROWS_AS(mlp_backward(model, fwd.cache, Tensor(Shape(3, 3))), DimensionError);
  }
  SUBCASE("random 3-layer nets agree with high-precision central differences") {
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<std::size_t> widths(4);
      for (auto& w : widths) w = 2 + rng.uniform_index(4);
      const auto model = random_model(rng, widths);
      const auto x = random_batch(rng, 3, widths[0]);
      std::vector<int> labels(3);
      for (int& l : labels) l = static_cast<int>(rng.uniform_index(widths.back()));
      CHECK(oracle::check_mlp(model, x, labels) < 1e-6);
    }
  }
  SUBCASE("dropout masks are reused in the backward pass") {
    MlpModel model = random_model(rng, {3, 6, 6, 2});
    model = MlpModel(model.layers(), 0.5);
    Rng drop(99);
    const auto x = random_batch(rng, 2, 3);
    const std::vector<int> labels{0, 1};
    const auto fwd = mlp_forward(model, x, drop, true);
    const auto analytic = mlp_backward(model, fwd.cache, softmax_cross_entropy(fwd.logits, labels).grad);
    // with the masks frozen the network is an ordinary ReLU net; compare the
    // first-layer bias gradient against central differences of that net
    auto frozen_loss = [&](const MlpModel& m) {
      Tensor a = x;
      for (std::size_t l = 0; l < m.layers().size(); ++l) {
        Tensor z = matmul(a, m.layers()[l].weights);
        for (std::size_t r = 0; r < z.rows(); ++r)
          for (std::size_t c = 0; c < z.cols(); ++c) z(r, c) += m.layers()[l].bias[c];
        if (l + 1 == m.layers().size()) {
          a = z;
          break;
        }
        a = relu(z);
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) a(r, c) *= fwd.cache.masks[l](r, c) * 2.0;
      }
      return softmax_cross_entropy(a, labels).loss;
    };
    for (std::size_t i = 0; i < 6; ++i) {
      MlpModel up = model, down = model;
      up.layers()[0].bias[i] += 1e-6;
      down.layers()[0].bias[i] -= 1e-6;
      const double numeric = (frozen_loss(up) - frozen_loss(down)) / 2e-6;
      CHECK(analytic[1].value[i] == doctest::Approx(numeric).epsilon(1e-5));
    }
  }
}

TEST_CASE("gradient_check") {
  Rng rng(21);
  SUBCASE("linear model") {
    const auto model = random_model(rng, {4, 3});
    const std::vector<int> labels{0, 2, 1};
    CHECK(gradient_check(model, random_batch(rng, 3, 4), labels) < 1e-8);
  }
  SUBCASE("ReLU net with inputs away from kinks") {
    for (int trial = 0; trial < 5; ++trial) {
      const auto model = random_model(rng, {5, 6, 6, 4});
      Tensor x;
      bool clear = false;
      while (!clear) {
        x = random_batch(rng, 2, 5);
        clear = true;
        for (const auto& z : mlp_forward(model, x, rng, false).cache.preacts)
          for (double v : z.data()) clear &= std::abs(v) > 1e-3;
      }
      const std::vector<int> labels{1, 3};
      CHECK(gradient_check(model, x, labels) < 1e-6);
    }
  }
  SUBCASE("relative error floor") {
    CHECK(relative_error(0.0, 0.0) == 0.0);
    CHECK(relative_error(1e-13, 0.0) == doctest::Approx(0.1));
    CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
    CHECK(kDefaultFiniteDifferenceStep == 1e-5);
  }
}

TEST_CASE("accuracy") {
  SUBCASE("constant predictor on balanced labels is at chance") {
    // output bias favours class 4 regardless of input
    Tensor bias(Shape(10));
    bias[4] = 1.0;
    const MlpModel model({layer(Tensor(Shape(3, 10)), bias)});
    Rng rng(5);
    const auto x = random_batch(rng, 1000, 3);
    std::vector<int> labels(1000);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
    CHECK(accuracy(model, x, labels) == doctest::Approx(0.1));
  }
  SUBCASE("labels equal to the argmax give 1") {
    Rng rng(6);
    const auto model = random_model(rng, {4, 8, 5});
    const auto x = random_batch(rng, 2500, 4);
    const auto labels = predict(model, x);
    CHECK(labels.size() == 2500);
    CHECK(accuracy(model, x, labels) == 1.0);
  }
  SUBCASE("empty input is an error") {
    Rng rng(7);
    const auto model = random_model(rng, {4, 5});
    CHECK_THROWS(accuracy(model, Tensor(Shape(0, 4)), std::vector<int>{}));
  }
  SUBCASE("dropout is off at evaluation") {
    Rng rng(8);
    auto base = random_model(rng, {4, 16, 5});
    const MlpModel with_dropout(base.layers(), 0.9);
    const auto x = random_batch(rng, 50, 4);
    CHECK(predict(with_dropout, x) == predict(base, x));
  }
}
