#include "strand/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "strand/kernels.hpp"

namespace strand::ad {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::runtime_error(std::string("autodiff: ") + msg);
}

void accumulate(Tensor& dst, const Tensor& src) {
  kernels::add(dst.v.data(), src.v.data(), dst.v.data(), dst.size());
}

}  // namespace

int Graph::push(Tensor value, std::function<void(Graph&)> vjp) {
  Node n;
  n.grad = Tensor::zeros(value.shape);
  n.val = std::move(value);
  n.vjp = std::move(vjp);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::leaf(Tensor value) { return push(std::move(value), nullptr); }

int Graph::add(int a, int b) {
  require(val(a).same_shape(val(b)), "add: shape mismatch");
  Tensor out(val(a).shape);
  kernels::add(val(a).v.data(), val(b).v.data(), out.v.data(), out.size());
  int y = push(std::move(out), nullptr);
  nodes_.back().vjp = [a, b, y](Graph& g) {
    accumulate(g.grad(a), g.grad(y));
    accumulate(g.grad(b), g.grad(y));
  };
  return y;
}

int Graph::sub(int a, int b) {
  require(val(a).same_shape(val(b)), "sub: shape mismatch");
  Tensor out(val(a).shape);
  kernels::sub(val(a).v.data(), val(b).v.data(), out.v.data(), out.size());
  int y = push(std::move(out), nullptr);
  nodes_.back().vjp = [a, b, y](Graph& g) {
    const Tensor& dy = g.grad(y);
    accumulate(g.grad(a), dy);
    kernels::axpy(-1.0, dy.v.data(), g.grad(b).v.data(), dy.size());
  };
  return y;
}

int Graph::mul(int a, int b) {
  require(val(a).same_shape(val(b)), "mul: shape mismatch");
  Tensor out(val(a).shape);
  kernels::mul(val(a).v.data(), val(b).v.data(), out.v.data(), out.size());
  int y = push(std::move(out), nullptr);
  nodes_.back().vjp = [a, b, y](Graph& g) {
    const Tensor& dy = g.grad(y);
    Tensor tmp(dy.shape);
    kernels::mul(dy.v.data(), g.val(b).v.data(), tmp.v.data(), dy.size());
    accumulate(g.grad(a), tmp);
    kernels::mul(dy.v.data(), g.val(a).v.data(), tmp.v.data(), dy.size());
    accumulate(g.grad(b), tmp);
  };
  return y;
}

int Graph::scale(int a, double c) {
  Tensor out = val(a);
  kernels::scale(c, out.v.data(), out.size());
  int y = push(std::move(out), nullptr);
  nodes_.back().vjp = [a, c, y](Graph& g) {
    kernels::axpy(c, g.grad(y).v.data(), g.grad(a).v.data(), g.grad(y).size());
  };
  return y;
}

int Graph::add_bias(int x, int b) {
  const Tensor& xv = val(x);
  require(val(b).size() == xv.cols(), "add_bias: bias length mismatch");
  Tensor out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    kernels::add(out.row(i), val(b).v.data(), out.row(i), out.cols());
  int y = push(std::move(out), nullptr);
  nodes_.back().vjp = [x, b, y](Graph& g) {
    const Tensor& dy = g.grad(y);
    accumulate(g.grad(x), dy);
    Tensor& db = g.grad(b);
    for (std::size_t i = 0; i < dy.rows(); ++i)
      kernels::add(db.v.data(), dy.row(i), db.v.data(), dy.cols());
  };
  return y;
}

int Graph::matmul(int a, int b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  require(av.shape.size() == 2 && bv.shape.size() == 2 && av.cols() == bv.rows(),
          "matmul: shape mismatch");
  std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  kernels::matmul(av.v.data(), bv.v.data(), out.v.data(), m, k, n);
  int y = push(std::move(out), nullptr);
  nodes_.back().vjp = [a, b, y, m, k, n](Graph& g) {
    const Tensor& dy = g.grad(y);
    Tensor da({m, k});
    kernels::matmul_nt(dy.v.data(), g.val(b).v.data(), da.v.data(), m, n, k);
    accumulate(g.grad(a), da);
    Tensor db({k, n});
    kernels::matmul_tn(g.val(a).v.data(), dy.v.data(), db.v.data(), k, m, n);
    accumulate(g.grad(b), db);
  };
  return y;
}

int Graph::matmul_nt(int a, int b) {
  const Tensor& av = val(a);
  const Tensor& bv = val(b);
  require(av.shape.size() == 2 && bv.shape.size() == 2 && av.cols() == bv.cols(),
          "matmul_nt: shape mismatch");
  std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor out({m, n});
  kernels::matmul_nt(av.v.data(), bv.v.data(), out.v.data(), m, k, n);
  int y = push(std::move(out), nullptr);
  nodes_.back().vjp = [a, b, y, m, k, n](Graph& g) {
    const Tensor& dy = g.grad(y);
    Tensor da({m, k});
    kernels::matmul(dy.v.data(), g.val(b).v.data(), da.v.data(), m, n, k);
    accumulate(g.grad(a), da);
    Tensor db({n, k});
    kernels::matmul_tn(dy.v.data(), g.val(a).v.data(), db.v.data(), n, m, k);
    accumulate(g.grad(b), db);
  };
  return y;
}

int Graph::layer_norm(int x, int gain, int bias, double eps) {
  const Tensor& xv = val(x);
  std::size_t d = xv.cols();
  require(val(gain).size() == d && val(bias).size() == d, "layer_norm: param length mismatch");
  Tensor out(xv.shape);
  Tensor xhat(xv.shape);
  std::vector<double> inv_std(xv.rows());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    const double* row = xv.row(i);
    double mean = kernels::sum(row, d) / static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      double xh = (row[j] - mean) * is;
      xhat(i, j) = xh;
      out(i, j) = xh * val(gain)(j) + val(bias)(j);
    }
  }
  int y = push(std::move(out), nullptr);
  nodes_.back().vjp = [x, gain, bias, y, d, xhat = std::move(xhat),
                       inv_std = std::move(inv_std)](Graph& g) {
    const Tensor& dy = g.grad(y);
    Tensor& dx = g.grad(x);
    Tensor& dgain = g.grad(gain);
    Tensor& dbias = g.grad(bias);
    const Tensor& gv = g.val(gain);
    std::vector<double> dxh(d);
    for (std::size_t i = 0; i < dy.rows(); ++i) {
      double sum_dxh = 0.0, sum_dxh_xh = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        dxh[j] = dy(i, j) * gv(j);
        sum_dxh += dxh[j];
        sum_dxh_xh += dxh[j] * xhat(i, j);
        dgain(j) += dy(i, j) * xhat(i, j);
        dbias(j) += dy(i, j);
      }
      double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j)
        dx(i, j) += inv_std[i] * (dxh[j] - inv_d * sum_dxh - xhat(i, j) * inv_d * sum_dxh_xh);
    }
  };
  return y;
}

int Graph::gelu(int x) {
  const Tensor& xv = val(x);
  Tensor out(xv.shape);
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  for (std::size_t i = 0; i < xv.size(); ++i)
    out.v[i] = 0.5 * xv.v[i] * (1.0 + std::erf(xv.v[i] * inv_sqrt2));
  int y = push(std::move(out), nullptr);
  nodes_.back().vjp = [x, y](Graph& g) {
    const Tensor& dy = g.grad(y);
    const Tensor& xv = g.val(x);
    Tensor& dx = g.grad(x);
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      double v = xv.v[i];
      double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
      double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dx.v[i] += dy.v[i] * (cdf + v * pdf);
    }
  };
  return y;
}

namespace {

// In-place rotary rotation; sign = +1 forward, -1 for the backward rotation.
void apply_rope(Tensor& t, const std::vector<std::int64_t>& positions, std::size_t n_heads,
                std::size_t rot_dims, double base, double sign) {
  std::size_t d = t.cols();
  std::size_t head_dim = d / n_heads;
  std::size_t pairs = rot_dims / 2;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    double pos = static_cast<double>(positions[i]);
    double* row = t.row(i);
    for (std::size_t p = 0; p < pairs; ++p) {
      double theta = pos * std::pow(base, -2.0 * static_cast<double>(p) /
                                              static_cast<double>(rot_dims));
      double c = std::cos(theta), s = sign * std::sin(theta);
      for (std::size_t h = 0; h < n_heads; ++h) {
        double* x0 = row + h * head_dim + 2 * p;
        double a = x0[0], b = x0[1];
        x0[0] = a * c - b * s;
        x0[1] = a * s + b * c;
      }
    }
  }
}

}  // namespace

int Graph::rope(int x, const std::vector<std::int64_t>& positions, std::size_t n_heads,
                std::size_t rot_dims, double base) {
  const Tensor& xv = val(x);
  require(xv.rows() == positions.size(), "rope: position count mismatch");
  require(xv.cols() % n_heads == 0, "rope: width not divisible by heads");
  require(rot_dims % 2 == 0 && rot_dims <= xv.cols() / n_heads, "rope: bad rot_dims");
  Tensor out = xv;
  apply_rope(out, positions, n_heads, rot_dims, base, +1.0);
  int y = push(std::move(out), nullptr);
  nodes_.back().vjp = [x, y, positions, n_heads, rot_dims, base](Graph& g) {
    Tensor dx = g.grad(y);
    apply_rope(dx, positions, n_heads, rot_dims, base, -1.0);
    accumulate(g.grad(x), dx);
  };
  return y;
}

int Graph::slice_cols(int x, std::size_t c0, std::size_t w) {
  const Tensor& xv = val(x);
  require(c0 + w <= xv.cols(), "slice_cols: out of range");
  Tensor out({xv.rows(), w});
  for (std::size_t i = 0; i < xv.rows(); ++i)
    std::copy(xv.row(i) + c0, xv.row(i) + c0 + w, out.row(i));
  int y = push(std::move(out), nullptr);
  nodes_.back().vjp = [x, y, c0, w](Graph& g) {
    const Tensor& dy = g.grad(y);
    Tensor& dx = g.grad(x);
    for (std::size_t i = 0; i < dy.rows(); ++i)
      kernels::add(dx.row(i) + c0, dy.row(i), dx.row(i) + c0, w);
  };
  return y;
}

int Graph::concat_cols(const std::vector<int>& xs) {
  require(!xs.empty(), "concat_cols: empty");
  std::size_t rows = val(xs[0]).rows();
  std::size_t total = 0;
  for (int id : xs) {
    require(val(id).rows() == rows, "concat_cols: row mismatch");
    total += val(id).cols();
  }
  Tensor out({rows, total});
  std::size_t off = 0;
  for (int id : xs) {
    const Tensor& t = val(id);
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(t.row(i), t.row(i) + t.cols(), out.row(i) + off);
    off += t.cols();
  }
  int y = push(std::move(out), nullptr);
  nodes_.back().vjp = [xs, y](Graph& g) {
    const Tensor& dy = g.grad(y);
    std::size_t off = 0;
    for (int id : xs) {
      Tensor& dx = g.grad(id);
      for (std::size_t i = 0; i < dy.rows(); ++i)
        kernels::add(dx.row(i), dy.row(i) + off, dx.row(i), dx.cols());
      off += dx.cols();
    }
  };
  return y;
}

int Graph::concat_rows(const std::vector<int>& xs) {
  require(!xs.empty(), "concat_rows: empty");
  std::size_t cols = val(xs[0]).cols();
  std::size_t total = 0;
  for (int id : xs) {
    require(val(id).cols() == cols, "concat_rows: col mismatch");
    total += val(id).rows();
  }
  Tensor out({total, cols});
  std::size_t off = 0;
  for (int id : xs) {
    const Tensor& t = val(id);
    std::copy(t.v.begin(), t.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(off));
    off += t.size();
  }
  int y = push(std::move(out), nullptr);
  nodes_.back().vjp = [xs, y](Graph& g) {
    const Tensor& dy = g.grad(y);
    std::size_t off = 0;
    for (int id : xs) {
      Tensor& dx = g.grad(id);
      kernels::add(dx.v.data(), dy.v.data() + off, dx.v.data(), dx.size());
      off += dx.size();
    }
  };
  return y;
}

int Graph::select_rows(int x, const std::vector<std::size_t>& idx) {
  const Tensor& xv = val(x);
  Tensor out({idx.size(), xv.cols()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] < xv.rows(), "select_rows: index out of range");
    std::copy(xv.row(idx[i]), xv.row(idx[i]) + xv.cols(), out.row(i));
  }
  int y = push(std::move(out), nullptr);
  nodes_.back().vjp = [x, y, idx](Graph& g) {
    const Tensor& dy = g.grad(y);
    Tensor& dx = g.grad(x);
    for (std::size_t i = 0; i < idx.size(); ++i)
      kernels::add(dx.row(idx[i]), dy.row(i), dx.row(idx[i]), dx.cols());
  };
  return y;
}

int Graph::embed(int table, const std::vector<int>& ids, int zero_id) {
  const Tensor& tv = val(table);
  Tensor out({ids.size(), tv.cols()});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < tv.rows(),
            "embed: id out of range");
    if (ids[i] == zero_id) continue;  // zero row
    std::copy(tv.row(static_cast<std::size_t>(ids[i])),
              tv.row(static_cast<std::size_t>(ids[i])) + tv.cols(), out.row(i));
  }
  int y = push(std::move(out), nullptr);
  nodes_.back().vjp = [table, y, ids, zero_id](Graph& g) {
    const Tensor& dy = g.grad(y);
    Tensor& dt = g.grad(table);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] == zero_id) continue;
      kernels::add(dt.row(static_cast<std::size_t>(ids[i])), dy.row(i),
                   dt.row(static_cast<std::size_t>(ids[i])), dt.cols());
    }
  };
  return y;
}

int Graph::masked_softmax_rows(int x, const std::vector<std::uint8_t>& allowed) {
  const Tensor& xv = val(x);
  require(allowed.size() == xv.size(), "masked_softmax_rows: mask size mismatch");
  std::size_t cols = xv.cols();
  Tensor out(xv.shape);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    const double* row = xv.row(i);
    const std::uint8_t* arow = allowed.data() + i * cols;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j)
      if (arow[j] && row[j] > m) m = row[j];
    if (!std::isfinite(m)) continue;  // fully masked row stays zero
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j)
      if (arow[j]) z += std::exp(row[j] - m);
    for (std::size_t j = 0; j < cols; ++j)
      out(i, j) = arow[j] ? std::exp(row[j] - m) / z : 0.0;
  }
  int y = push(std::move(out), nullptr);
  nodes_.back().vjp = [x, y, allowed](Graph& g) {
    const Tensor& dy = g.grad(y);
    const Tensor& yv = g.val(y);
    Tensor& dx = g.grad(x);
    std::size_t cols = yv.cols();
    for (std::size_t i = 0; i < yv.rows(); ++i) {
      double inner = kernels::dot(dy.row(i), yv.row(i), cols);
      const std::uint8_t* arow = allowed.data() + i * cols;
      for (std::size_t j = 0; j < cols; ++j)
        if (arow[j]) dx(i, j) += yv(i, j) * (dy(i, j) - inner);
    }
  };
  return y;
}

int Graph::cross_entropy_sum(int logits, const std::vector<int>& targets, int ignore_id) {
  const Tensor& lv = val(logits);
  require(lv.rows() == targets.size(), "cross_entropy_sum: target count mismatch");
  std::size_t vocab = lv.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == ignore_id) continue;
    require(targets[i] >= 0 && static_cast<std::size_t>(targets[i]) < vocab,
            "cross_entropy_sum: target out of range");
    const double* row = lv.row(i);
    double m = kernels::max_value(row, vocab);
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - m);
    total += m + std::log(z) - row[static_cast<std::size_t>(targets[i])];
  }
  int y = push(Tensor::scalar(total), nullptr);
  nodes_.back().vjp = [logits, y, targets, ignore_id](Graph& g) {
    double droot = g.grad(y)(0);
    if (droot == 0.0) return;
    const Tensor& lv = g.val(logits);
    Tensor& dl = g.grad(logits);
    std::size_t vocab = lv.cols();
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (targets[i] == ignore_id) continue;
      const double* row = lv.row(i);
      double m = kernels::max_value(row, vocab);
      double z = 0.0;
      for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - m);
      for (std::size_t j = 0; j < vocab; ++j) {
        double p = std::exp(row[j] - m) / z;
        dl(i, j) += droot * (p - (static_cast<std::size_t>(targets[i]) == j ? 1.0 : 0.0));
      }
    }
  };
  return y;
}

int Graph::sum_all(int x) {
  double total = kernels::sum(val(x).v.data(), val(x).size());
  int y = push(Tensor::scalar(total), nullptr);
  nodes_.back().vjp = [x, y](Graph& g) {
    double droot = g.grad(y)(0);
    Tensor& dx = g.grad(x);
    for (double& d : dx.v) d += droot;
  };
  return y;
}

void Graph::backward(int root) {
  require(val(root).size() == 1, "backward: root must be scalar");
  grad(root).v[0] = 1.0;
  for (int id = root; id >= 0; --id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.vjp) n.vjp(*this);
  }
}

}  // namespace strand::ad
