#include <doctest.h>

#include <functional>

#include "helpers.hpp"
#include "trailmap/autograd.hpp"
#include "trailmap/errors.hpp"

using namespace trailmap;
using ag::Graph;
using ag::Var;

namespace {

struct Input {
  std::vector<int> shape;
  std::vector<double> value;
};

using OpFn = std::function<Var(Graph&, const std::vector<Var>&)>;

Input random_input(Rng& rng, std::vector<int> shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  Input in{std::move(shape), std::vector<double>(n)};
  for (double& v : in.value) v = rng.uniform(-1, 1);
  return in;
}

// Loss = <out, proj> for a fixed random projection.
double eval_loss(const OpFn& op, const std::vector<Input>& inputs, const std::vector<double>& proj) {
  Graph g;
  std::vector<Var> leaves;
  for (const auto& in : inputs) leaves.push_back(g.leaf(in.shape, in.value));
  const Var out = op(g, leaves);
  double s = 0.0;
  for (std::size_t i = 0; i < out->numel(); ++i) s += out->value[i] * proj[i];
  return s;
}

// Largest relative error between analytic and central-difference gradients.
double check_op(const OpFn& op, std::vector<Input> inputs, std::uint64_t seed) {
  Rng rng(seed);
  Graph g;
  std::vector<Var> leaves;
  for (const auto& in : inputs) leaves.push_back(g.leaf(in.shape, in.value));
  const Var out = op(g, leaves);
  std::vector<double> proj(out->numel());
  for (double& v : proj) v = rng.uniform(-1, 1);
  g.seed(out, proj);
  g.backward();

  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto analytic = leaves[k]->grad.empty() ? std::vector<double>(inputs[k].value.size(), 0.0) : leaves[k]->grad;
    for (std::size_t i = 0; i < inputs[k].value.size(); ++i) {
      const double keep = inputs[k].value[i];
      inputs[k].value[i] = keep + h;
      const double up = eval_loss(op, inputs, proj);
      inputs[k].value[i] = keep - h;
      const double down = eval_loss(op, inputs, proj);
      inputs[k].value[i] = keep;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, testutil::rel_err(analytic[i], fd, 1e-6));
    }
  }
  return worst;
}

}  // namespace

TEST_SUITE("autograd") {
  TEST_CASE("conv2d gradients") {
    Rng rng(71);
    for (int stride : {1, 2}) {
      const auto op = [stride](Graph& g, const std::vector<Var>& v) { return ag::conv2d(g, v[0], v[1], v[2], 3, stride, 1); };
      CHECK(check_op(op, {random_input(rng, {5, 6, 2}), random_input(rng, {18, 3}), random_input(rng, {3})}, 1) < 1e-6);
    }
  }

  TEST_CASE("conv2d output shape") {
    Graph g;
    const Var x = g.constant({8, 8, 3}, std::vector<double>(192, 0.0));
    const Var w = g.constant({27, 4}, std::vector<double>(108, 0.0));
    const Var b = g.constant({4}, std::vector<double>(4, 0.0));
    const Var y = ag::conv2d(g, x, w, b, 3, 2, 1);
    CHECK(y->shape == std::vector<int>{4, 4, 4});
    const Var bad = g.constant({26, 4}, std::vector<double>(104, 0.0));
    CHECK_THROWS_AS(ag::conv2d(g, x, bad, b, 3, 2, 1), ShapeError);
  }

  TEST_CASE("linear gradients") {
    Rng rng(72);
    const auto with_bias = [](Graph& g, const std::vector<Var>& v) { return ag::linear(g, v[0], v[1], v[2]); };
    CHECK(check_op(with_bias, {random_input(rng, {4, 3}), random_input(rng, {3, 5}), random_input(rng, {5})}, 2) < 1e-6);
    const auto no_bias = [](Graph& g, const std::vector<Var>& v) { return ag::linear(g, v[0], v[1], nullptr); };
    CHECK(check_op(no_bias, {random_input(rng, {2, 3, 4}), random_input(rng, {4, 2})}, 3) < 1e-6);
  }

  TEST_CASE("elementwise gradients") {
    Rng rng(73);
    const auto add = [](Graph& g, const std::vector<Var>& v) { return ag::add(g, v[0], v[1]); };
    CHECK(check_op(add, {random_input(rng, {3, 4}), random_input(rng, {3, 4})}, 4) < 1e-6);
    const auto silu = [](Graph& g, const std::vector<Var>& v) { return ag::silu(g, v[0]); };
    CHECK(check_op(silu, {random_input(rng, {10})}, 5) < 1e-6);
    const auto sig = [](Graph& g, const std::vector<Var>& v) { return ag::sigmoid(g, v[0]); };
    CHECK(check_op(sig, {random_input(rng, {10})}, 6) < 1e-6);
  }

  TEST_CASE("layer norm gradients and statistics") {
    Rng rng(74);
    const auto op = [](Graph& g, const std::vector<Var>& v) { return ag::layer_norm(g, v[0], v[1], v[2]); };
    CHECK(check_op(op, {random_input(rng, {3, 6}), random_input(rng, {6}), random_input(rng, {6})}, 7) < 1e-5);

    Graph g;
    const Input x = random_input(rng, {2, 8});
    const Var y = ag::layer_norm(g, g.constant(x.shape, x.value), g.constant({8}, std::vector<double>(8, 1.0)),
                                 g.constant({8}, std::vector<double>(8, 0.0)));
    for (int r = 0; r < 2; ++r) {
      double mean = 0.0;
      for (int c = 0; c < 8; ++c) mean += y->value[r * 8 + c];
      CHECK(std::abs(mean / 8) < 1e-12);
    }
  }

  TEST_CASE("attention gradients") {
    Rng rng(75);
    for (int heads : {1, 2}) {
      const auto op = [heads](Graph& g, const std::vector<Var>& v) { return ag::attention(g, v[0], v[1], v[2], heads); };
      CHECK(check_op(op, {random_input(rng, {3, 4}), random_input(rng, {5, 4}), random_input(rng, {5, 4})}, 8) < 1e-6);
    }
  }

  TEST_CASE("attention with identical keys averages the values") {
    Graph g;
    const Var q = g.constant({1, 2}, {0.3, -0.7});
    const Var k = g.constant({3, 2}, {1, 1, 1, 1, 1, 1});
    const Var v = g.constant({3, 2}, {1, 2, 3, 4, 5, 6});
    const Var y = ag::attention(g, q, k, v, 1);
    CHECK(y->value[0] == doctest::Approx(3.0));
    CHECK(y->value[1] == doctest::Approx(4.0));
  }

  TEST_CASE("gradients accumulate across uses") {
    Graph g;
    const Var x = g.leaf({2}, {0.5, -1.0});
    const Var y = ag::add(g, x, x);
    g.seed(y, std::vector<double>{1.0, 1.0});
    g.backward();
    CHECK(x->grad == std::vector<double>{2.0, 2.0});
  }
}
