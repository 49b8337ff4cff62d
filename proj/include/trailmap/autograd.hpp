#pragma once

// Minimal reverse-mode differentiation over dense double tensors. A Graph
// owns every node created during one forward pass; backward() walks the
// nodes in reverse creation order. Ops are coarse (conv, linear, attention)
// so the tape stays short.

#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace trailmap::ag {

struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool needs_grad = false;
  std::function<void(Node&)> backward;

  std::size_t numel() const { return value.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i < 0 ? static_cast<int>(shape.size()) + i : i)]; }
  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

using Var = Node*;

class Graph {
 public:
  Var constant(std::vector<int> shape, std::vector<double> value);
  Var leaf(std::vector<int> shape, std::vector<double> value);
  Var make(std::vector<int> shape, bool needs_grad);

  // Adds `g` to v's gradient; call for every loss output before backward().
  void seed(Var v, std::span<const double> g);
  void backward();

  std::size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node> nodes_;
};

// x: [H, W, C] channel-last, w: [k * k * C, C_out] ordered (ki, kj, c), b: [C_out].
Var conv2d(Graph& g, Var x, Var w, Var b, int k, int stride, int pad);

// Applies to the last dimension: x [..., D] * w [D, D_out] + b [D_out]. b may be null.
Var linear(Graph& g, Var x, Var w, Var b);

Var add(Graph& g, Var a, Var b);
Var silu(Graph& g, Var x);
Var sigmoid(Graph& g, Var x);

// Normalizes rows of x [N, D]; gamma, beta: [D].
Var layer_norm(Graph& g, Var x, Var gamma, Var beta, double eps = 1e-5);

// Multi-head scaled dot-product attention on already projected inputs:
// q [Nq, D], k [Nk, D], v [Nk, D] -> [Nq, D].
Var attention(Graph& g, Var q, Var k, Var v, int heads);

}  // namespace trailmap::ag
