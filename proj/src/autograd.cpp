#include "trailmap/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "trailmap/errors.hpp"
#include "trailmap/nn_kernels.hpp"

namespace trailmap::ag {

namespace {

std::size_t product(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

Var Graph::constant(std::vector<int> shape, std::vector<double> value) {
  require(product(shape) == value.size(), "constant: value size does not match shape");
  Node& n = nodes_.emplace_back();
  n.shape = std::move(shape);
  n.value = std::move(value);
  return &n;
}

Var Graph::leaf(std::vector<int> shape, std::vector<double> value) {
  Var v = constant(std::move(shape), std::move(value));
  v->needs_grad = true;
  return v;
}

Var Graph::make(std::vector<int> shape, bool needs_grad) {
  Node& n = nodes_.emplace_back();
  n.value.assign(product(shape), 0.0);
  n.shape = std::move(shape);
  n.needs_grad = needs_grad;
  return &n;
}

void Graph::seed(Var v, std::span<const double> g) {
  require(g.size() == v->numel(), "seed: gradient size does not match node");
  auto& dst = v->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void Graph::backward() {
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->backward && !it->grad.empty()) it->backward(*it);
  }
}

Var conv2d(Graph& g, Var x, Var w, Var b, int k, int stride, int pad) {
  require(x->shape.size() == 3, "conv2d: input must be [H, W, C]");
  const int h = x->dim(0);
  const int wd = x->dim(1);
  const int c = x->dim(2);
  const std::size_t kk = static_cast<std::size_t>(k) * k * c;
  require(w->shape.size() == 2 && static_cast<std::size_t>(w->dim(0)) == kk, "conv2d: weight must be [k*k*C, C_out]");
  const int co = w->dim(1);
  require(b == nullptr || static_cast<int>(b->numel()) == co, "conv2d: bias size");
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (wd + 2 * pad - k) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d: input smaller than kernel");
  const std::size_t positions = static_cast<std::size_t>(ho) * wo;

  // im2col
  auto col = std::make_shared<std::vector<double>>(positions * kk, 0.0);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      double* row = col->data() + (static_cast<std::size_t>(oy) * wo + ox) * kk;
      for (int ki = 0; ki < k; ++ki) {
        const int iy = oy * stride - pad + ki;
        if (iy < 0 || iy >= h) continue;
        for (int kj = 0; kj < k; ++kj) {
          const int ix = ox * stride - pad + kj;
          if (ix < 0 || ix >= wd) continue;
          const double* src = x->value.data() + (static_cast<std::size_t>(iy) * wd + ix) * c;
          std::copy_n(src, c, row + (static_cast<std::size_t>(ki) * k + kj) * c);
        }
      }
    }
  }

  Var y = g.make({ho, wo, co}, x->needs_grad || w->needs_grad || (b && b->needs_grad));
  if (b) {
    for (std::size_t p = 0; p < positions; ++p) std::copy_n(b->value.data(), co, y->value.data() + p * co);
  }
  kernels::gemm_nn(col->data(), w->value.data(), y->value.data(), positions, kk, static_cast<std::size_t>(co));

  if (y->needs_grad) {
    y->backward = [x, w, b, col, h, wd, c, k, stride, pad, ho, wo, co, kk, positions](Node& self) {
      const double* dy = self.grad.data();
      if (w->needs_grad) kernels::gemm_tn(col->data(), dy, w->ensure_grad().data(), kk, positions, static_cast<std::size_t>(co));
      if (b && b->needs_grad) {
        auto& db = b->ensure_grad();
        for (std::size_t p = 0; p < positions; ++p)
          for (int j = 0; j < co; ++j) db[static_cast<std::size_t>(j)] += dy[p * co + j];
      }
      if (x->needs_grad) {
        std::vector<double> dcol(positions * kk, 0.0);
        kernels::gemm_nt(dy, w->value.data(), dcol.data(), positions, static_cast<std::size_t>(co), kk);
        auto& dx = x->ensure_grad();
        for (int oy = 0; oy < ho; ++oy) {
          for (int ox = 0; ox < wo; ++ox) {
            const double* row = dcol.data() + (static_cast<std::size_t>(oy) * wo + ox) * kk;
            for (int ki = 0; ki < k; ++ki) {
              const int iy = oy * stride - pad + ki;
              if (iy < 0 || iy >= h) continue;
              for (int kj = 0; kj < k; ++kj) {
                const int ix = ox * stride - pad + kj;
                if (ix < 0 || ix >= wd) continue;
                double* dst = dx.data() + (static_cast<std::size_t>(iy) * wd + ix) * c;
                const double* src = row + (static_cast<std::size_t>(ki) * k + kj) * c;
                for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
              }
            }
          }
        }
      }
    };
  }
  return y;
}

Var linear(Graph& g, Var x, Var w, Var b) {
  require(w->shape.size() == 2, "linear: weight must be 2-D");
  const auto d = static_cast<std::size_t>(w->dim(0));
  const auto dout = static_cast<std::size_t>(w->dim(1));
  require(static_cast<std::size_t>(x->dim(-1)) == d, "linear: input width " + std::to_string(x->dim(-1)) +
                                                         " does not match weight rows " + std::to_string(d));
  require(b == nullptr || b->numel() == dout, "linear: bias size");
  const std::size_t rows = x->numel() / d;
  std::vector<int> shape = x->shape;
  shape.back() = static_cast<int>(dout);
  Var y = g.make(shape, x->needs_grad || w->needs_grad || (b && b->needs_grad));
  if (b) {
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(b->value.data(), dout, y->value.data() + r * dout);
  }
  kernels::gemm_nn(x->value.data(), w->value.data(), y->value.data(), rows, d, dout);
  if (y->needs_grad) {
    y->backward = [x, w, b, rows, d, dout](Node& self) {
      const double* dy = self.grad.data();
      if (x->needs_grad) kernels::gemm_nt(dy, w->value.data(), x->ensure_grad().data(), rows, dout, d);
      if (w->needs_grad) kernels::gemm_tn(x->value.data(), dy, w->ensure_grad().data(), d, rows, dout);
      if (b && b->needs_grad) {
        auto& db = b->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < dout; ++j) db[j] += dy[r * dout + j];
      }
    };
  }
  return y;
}

Var add(Graph& g, Var a, Var b) {
  require(a->numel() == b->numel(), "add: size mismatch");
  Var y = g.make(a->shape, a->needs_grad || b->needs_grad);
  for (std::size_t i = 0; i < a->numel(); ++i) y->value[i] = a->value[i] + b->value[i];
  if (y->needs_grad) {
    y->backward = [a, b](Node& self) {
      for (Var in : {a, b}) {
        if (!in->needs_grad) continue;
        auto& d = in->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
      }
    };
  }
  return y;
}

Var silu(Graph& g, Var x) {
  Var y = g.make(x->shape, x->needs_grad);
  for (std::size_t i = 0; i < x->numel(); ++i) {
    const double v = x->value[i];
    y->value[i] = v / (1.0 + std::exp(-v));
  }
  if (y->needs_grad) {
    y->backward = [x](Node& self) {
      auto& dx = x->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) {
        const double v = x->value[i];
        const double s = 1.0 / (1.0 + std::exp(-v));
        dx[i] += self.grad[i] * s * (1.0 + v * (1.0 - s));
      }
    };
  }
  return y;
}

Var sigmoid(Graph& g, Var x) {
  Var y = g.make(x->shape, x->needs_grad);
  for (std::size_t i = 0; i < x->numel(); ++i) y->value[i] = 1.0 / (1.0 + std::exp(-x->value[i]));
  if (y->needs_grad) {
    y->backward = [x](Node& self) {
      auto& dx = x->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) {
        const double s = self.value[i];
        dx[i] += self.grad[i] * s * (1.0 - s);
      }
    };
  }
  return y;
}

Var layer_norm(Graph& g, Var x, Var gamma, Var beta, double eps) {
  const auto d = static_cast<std::size_t>(x->dim(-1));
  require(gamma->numel() == d && beta->numel() == d, "layer_norm: affine size");
  const std::size_t rows = x->numel() / d;
  Var y = g.make(x->shape, x->needs_grad || gamma->needs_grad || beta->needs_grad);
  auto xhat = std::make_shared<std::vector<double>>(x->numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x->value.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (in[j] - mean) * is;
      (*xhat)[r * d + j] = xh;
      y->value[r * d + j] = xh * gamma->value[j] + beta->value[j];
    }
  }
  if (y->needs_grad) {
    y->backward = [x, gamma, beta, xhat, inv_std, rows, d](Node& self) {
      const double* dy = self.grad.data();
      if (gamma->needs_grad) {
        auto& dg = gamma->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) dg[j] += dy[r * d + j] * (*xhat)[r * d + j];
      }
      if (beta->needs_grad) {
        auto& dbeta = beta->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) dbeta[j] += dy[r * d + j];
      }
      if (x->needs_grad) {
        auto& dx = x->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_g = 0.0;
          double mean_gx = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double gh = dy[r * d + j] * gamma->value[j];
            mean_g += gh;
            mean_gx += gh * (*xhat)[r * d + j];
          }
          mean_g /= static_cast<double>(d);
          mean_gx /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double gh = dy[r * d + j] * gamma->value[j];
            dx[r * d + j] += (*inv_std)[r] * (gh - mean_g - (*xhat)[r * d + j] * mean_gx);
          }
        }
      }
    };
  }
  return y;
}

Var attention(Graph& g, Var q, Var k, Var v, int heads) {
  const auto d = static_cast<std::size_t>(q->dim(-1));
  require(k->dim(-1) == static_cast<int>(d) && v->dim(-1) == static_cast<int>(d), "attention: width mismatch");
  require(heads >= 1 && d % static_cast<std::size_t>(heads) == 0, "attention: width not divisible by heads");
  const std::size_t nq = q->numel() / d;
  const std::size_t nk = k->numel() / d;
  require(v->numel() / d == nk, "attention: key/value count mismatch");
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto nh = static_cast<std::size_t>(heads);

  auto slice = [](const std::vector<double>& src, std::size_t rows, std::size_t width, std::size_t off,
                  std::size_t dh_) {
    std::vector<double> out(rows * dh_);
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(src.data() + r * width + off, dh_, out.data() + r * dh_);
    return out;
  };

  Var y = g.make({static_cast<int>(nq), static_cast<int>(d)}, q->needs_grad || k->needs_grad || v->needs_grad);
  // Softmax weights per head, [heads][nq x nk].
  auto probs = std::make_shared<std::vector<std::vector<double>>>(nh);
  for (std::size_t hd = 0; hd < nh; ++hd) {
    const auto qh = slice(q->value, nq, d, hd * dh, dh);
    const auto kh = slice(k->value, nk, d, hd * dh, dh);
    const auto vh = slice(v->value, nk, d, hd * dh, dh);
    std::vector<double> s(nq * nk, 0.0);
    kernels::gemm_nt(qh.data(), kh.data(), s.data(), nq, dh, nk);
    for (std::size_t i = 0; i < nq; ++i) {
      double* row = s.data() + i * nk;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < nk; ++j) {
        row[j] *= scale;
        mx = std::max(mx, row[j]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < nk; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
      }
      for (std::size_t j = 0; j < nk; ++j) row[j] /= sum;
    }
    std::vector<double> oh(nq * dh, 0.0);
    kernels::gemm_nn(s.data(), vh.data(), oh.data(), nq, nk, dh);
    for (std::size_t i = 0; i < nq; ++i) std::copy_n(oh.data() + i * dh, dh, y->value.data() + i * d + hd * dh);
    (*probs)[hd] = std::move(s);
  }

  if (y->needs_grad) {
    y->backward = [q, k, v, probs, slice, nq, nk, d, dh, nh, scale](Node& self) {
      for (std::size_t hd = 0; hd < nh; ++hd) {
        const auto& p = (*probs)[hd];
        const auto qh = slice(q->value, nq, d, hd * dh, dh);
        const auto kh = slice(k->value, nk, d, hd * dh, dh);
        const auto vh = slice(v->value, nk, d, hd * dh, dh);
        const auto doh = slice(self.grad, nq, d, hd * dh, dh);
        if (v->needs_grad) {
          std::vector<double> dv(nk * dh, 0.0);
          kernels::gemm_tn(p.data(), doh.data(), dv.data(), nk, nq, dh);
          auto& dst = v->ensure_grad();
          for (std::size_t r = 0; r < nk; ++r)
            for (std::size_t j = 0; j < dh; ++j) dst[r * d + hd * dh + j] += dv[r * dh + j];
        }
        if (!q->needs_grad && !k->needs_grad) continue;
        std::vector<double> ds(nq * nk, 0.0);
        kernels::gemm_nt(doh.data(), vh.data(), ds.data(), nq, dh, nk);
        for (std::size_t i = 0; i < nq; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < nk; ++j) dot += ds[i * nk + j] * p[i * nk + j];
          for (std::size_t j = 0; j < nk; ++j) ds[i * nk + j] = p[i * nk + j] * (ds[i * nk + j] - dot) * scale;
        }
        if (q->needs_grad) {
          std::vector<double> dq(nq * dh, 0.0);
          kernels::gemm_nn(ds.data(), kh.data(), dq.data(), nq, nk, dh);
          auto& dst = q->ensure_grad();
          for (std::size_t r = 0; r < nq; ++r)
            for (std::size_t j = 0; j < dh; ++j) dst[r * d + hd * dh + j] += dq[r * dh + j];
        }
        if (k->needs_grad) {
          std::vector<double> dk(nk * dh, 0.0);
          kernels::gemm_tn(ds.data(), qh.data(), dk.data(), nk, nq, dh);
          auto& dst = k->ensure_grad();
          for (std::size_t r = 0; r < nk; ++r)
            for (std::size_t j = 0; j < dh; ++j) dst[r * d + hd * dh + j] += dk[r * dh + j];
        }
      }
    };
  }
  return y;
}

}  // namespace trailmap::ag
