#include "empsoa/ops.hpp"

#include <algorithm>
#include <cmath>

#include "empsoa/errors.hpp"
#include "empsoa/kernels.hpp"

namespace empsoa {
namespace {

using NodePtr = std::shared_ptr<detail::Node>;

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

bool recording(const std::vector<Tensor>& inputs) {
  if (!Tape::active()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.requires_grad(); });
}

// Creates the result node; when recording, marks it differentiable and hands
// the caller the raw node pointer for use inside the backward rule.
Tensor make_output(Shape shape, std::vector<double> value, bool track) {
  Tensor out = Tensor::from(std::move(shape), std::move(value));
  if (track) out.set_requires_grad(true);
  return out;
}

void record(const Tensor& out, Tape::BackwardFn fn) { Tape::active()->record(out.handle(), std::move(fn)); }

// Gradient sink for an input, or an empty span when it does not need one.
std::span<double> sink(const NodePtr& n) {
  return n->requires_grad ? n->grad_buffer() : std::span<double>{};
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r)
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  return static_cast<std::size_t>(a);
}

// (outer, axis length, inner) decomposition of a shape around an axis.
struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " @ " +
                         shape_string(b.shape()));
  std::vector<double> value(m * n);
  kernels::gemm(m, n, k, a.data(), false, b.data(), false, value, false);
  const bool track = recording({&a, &b});
  Tensor out = make_output({m, n}, std::move(value), track);
  if (track) {
    NodePtr an = a.handle(), bn = b.handle();
    detail::Node* on = out.node();
    record(out, [an, bn, on, m, n, k] {
      if (an->requires_grad)  // dA = dC · Bᵀ
        kernels::gemm(m, k, n, on->grad, false, bn->value, true, an->grad_buffer(), true);
      if (bn->requires_grad)  // dB = Aᵀ · dC
        kernels::gemm(k, n, m, an->value, true, on->grad, false, bn->grad_buffer(), true);
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> value(m * n);
  const auto src = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) value[j * m + i] = src[i * n + j];
  const bool track = recording({&a});
  Tensor out = make_output({n, m}, std::move(value), track);
  if (track) {
    NodePtr an = a.handle();
    detail::Node* on = out.node();
    record(out, [an, on, m, n] {
      auto g = an->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += on->grad[j * m + i];
    });
  }
  return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, name);
  const std::size_t n = a.size();
  std::vector<double> value(n);
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < n; ++i) value[i] = fwd(av[i], bv[i]);
  const bool track = recording({&a, &b});
  Tensor out = make_output(a.shape(), std::move(value), track);
  if (track) {
    NodePtr an = a.handle(), bn = b.handle();
    detail::Node* on = out.node();
    record(out, [an, bn, on, n, bwd] {
      auto ga = sink(an);
      auto gb = sink(bn);
      for (std::size_t i = 0; i < n; ++i) {
        const auto [da, db] = bwd(an->value[i], bn->value[i], on->grad[i]);
        if (!ga.empty()) ga[i] += da;
        if (!gb.empty()) gb[i] += db;
      }
    });
  }
  return out;
}

template <typename Fwd, typename Bwd>
Tensor unary_elementwise(const Tensor& x, Fwd fwd, Bwd bwd) {
  const std::size_t n = x.size();
  std::vector<double> value(n);
  const auto xv = x.data();
  for (std::size_t i = 0; i < n; ++i) value[i] = fwd(xv[i]);
  const bool track = recording({&x});
  Tensor out = make_output(x.shape(), std::move(value), track);
  if (track) {
    NodePtr xn = x.handle();
    detail::Node* on = out.node();
    record(out, [xn, on, n, bwd] {
      auto g = xn->grad_buffer();
      // bwd(input, output) is the local derivative.
      for (std::size_t i = 0; i < n; ++i) g[i] += on->grad[i] * bwd(xn->value[i], on->value[i]);
    });
  }
  return out;
}

struct Pair {
  double a, b;
};

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g) { return Pair{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g) { return Pair{g, -g}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g) { return Pair{g * y, g * x}; });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (x.rank() == 0) throw DimensionError("add_bias: scalar input");
  const std::size_t n = x.shape().back();
  if (b.size() != n)
    throw DimensionError("add_bias: bias " + shape_string(b.shape()) + " does not match last axis of " +
                         shape_string(x.shape()));
  const std::size_t total = x.size();
  std::vector<double> value(x.data().begin(), x.data().end());
  const auto bv = b.data();
  for (std::size_t i = 0; i < total; ++i) value[i] += bv[i % n];
  const bool track = recording({&x, &b});
  Tensor out = make_output(x.shape(), std::move(value), track);
  if (track) {
    NodePtr xn = x.handle(), bn = b.handle();
    detail::Node* on = out.node();
    record(out, [xn, bn, on, n, total] {
      auto gx = sink(xn);
      auto gb = sink(bn);
      for (std::size_t i = 0; i < total; ++i) {
        if (!gx.empty()) gx[i] += on->grad[i];
        if (!gb.empty()) gb[i % n] += on->grad[i];
      }
    });
  }
  return out;
}

Tensor affine(const Tensor& x, double alpha, double beta) {
  return unary_elementwise(
      x, [alpha, beta](double v) { return alpha * v + beta; },
      [alpha](double, double) { return alpha; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(
      x,
      [](double v) {
        // Split by sign so exp never overflows.
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data())
    if (!(v > 0)) throw ContractError("log of non-positive value");
  return unary_elementwise(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor softmax(const Tensor& x, int axis) {
  if (x.rank() == 0) throw DimensionError("softmax: scalar input");
  const std::size_t ax = normalize_axis(axis, x.rank(), "softmax");
  const AxisView v = axis_view(x.shape(), ax);
  if (v.len == 0) throw DimensionError("softmax: empty axis in " + shape_string(x.shape()));

  std::vector<double> value(x.size());
  if (v.inner == 1) {
    kernels::softmax_rows(v.outer, v.len, x.data(), {}, value);
  } else {
    // Strided axis: gather each line, normalize, scatter back.
    std::vector<double> line(v.len), out(v.len);
    const auto xv = x.data();
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t i = 0; i < v.inner; ++i) {
        for (std::size_t l = 0; l < v.len; ++l) line[l] = xv[(o * v.len + l) * v.inner + i];
        kernels::serial::softmax_rows(1, v.len, line, {}, out);
        for (std::size_t l = 0; l < v.len; ++l) value[(o * v.len + l) * v.inner + i] = out[l];
      }
  }
  const bool track = recording({&x});
  Tensor out = make_output(x.shape(), std::move(value), track);
  if (track) {
    NodePtr xn = x.handle();
    detail::Node* on = out.node();
    record(out, [xn, on, v] {
      auto g = xn->grad_buffer();
      if (v.inner == 1) {
        kernels::softmax_rows_backward(v.outer, v.len, on->value, on->grad, g);
        return;
      }
      std::vector<double> y(v.len), dy(v.len), dx(v.len);
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < v.inner; ++i) {
          for (std::size_t l = 0; l < v.len; ++l) {
            const std::size_t idx = (o * v.len + l) * v.inner + i;
            y[l] = on->value[idx];
            dy[l] = on->grad[idx];
            dx[l] = 0.0;
          }
          kernels::serial::softmax_rows_backward(1, v.len, y, dy, dx);
          for (std::size_t l = 0; l < v.len; ++l) g[(o * v.len + l) * v.inner + i] += dx[l];
        }
    });
  }
  return out;
}

Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> allowed) {
  if (x.rank() == 0) throw DimensionError("masked_softmax: scalar input");
  if (allowed.size() != x.size())
    throw DimensionError("masked_softmax: mask has " + std::to_string(allowed.size()) +
                         " entries for " + shape_string(x.shape()));
  const std::size_t cols = x.shape().back();
  if (cols == 0) throw DimensionError("masked_softmax: empty axis");
  const std::size_t rows = x.size() / cols;
  std::vector<double> value(x.size());
  kernels::softmax_rows(rows, cols, x.data(), allowed, value);
  const bool track = recording({&x});
  Tensor out = make_output(x.shape(), std::move(value), track);
  if (track) {
    NodePtr xn = x.handle();
    detail::Node* on = out.node();
    // Masked entries have y = 0, so the plain softmax rule already gives them zero gradient.
    record(out, [xn, on, rows, cols] {
      kernels::softmax_rows_backward(rows, cols, on->value, on->grad, xn->grad_buffer());
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, first.size(), "concat");
  Shape shape = first;
  shape[ax] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size())
      throw DimensionError("concat: rank mismatch " + shape_string(first) + " vs " +
                           shape_string(p.shape()));
    for (std::size_t d = 0; d < first.size(); ++d)
      if (d != ax && p.shape()[d] != first[d])
        throw DimensionError("concat: incompatible shapes " + shape_string(first) + " and " +
                             shape_string(p.shape()) + " on axis " + std::to_string(ax));
    shape[ax] += p.shape()[ax];
  }
  const AxisView ov = axis_view(shape, ax);
  std::vector<double> value(shape_size(shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.shape()[ax];
    const auto src = p.data();
    for (std::size_t o = 0; o < ov.outer; ++o)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * len * ov.inner), len * ov.inner,
                  value.begin() + static_cast<std::ptrdiff_t>((o * ov.len + offset) * ov.inner));
    offset += len;
  }
  const bool track = recording(parts);
  Tensor out = make_output(shape, std::move(value), track);
  if (track) {
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.handle());
    detail::Node* on = out.node();
    record(out, [nodes, offsets, on, ov, ax] {
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i]->requires_grad) continue;
        auto g = nodes[i]->grad_buffer();
        const std::size_t len = nodes[i]->shape[ax];
        for (std::size_t o = 0; o < ov.outer; ++o)
          for (std::size_t j = 0; j < len * ov.inner; ++j)
            g[o * len * ov.inner + j] += on->grad[(o * ov.len + offsets[i]) * ov.inner + j];
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "slice");
  if (begin > end || end > x.shape()[ax])
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + shape_string(x.shape()));
  const AxisView iv = axis_view(x.shape(), ax);
  Shape shape = x.shape();
  shape[ax] = end - begin;
  const std::size_t len = end - begin;
  std::vector<double> value(shape_size(shape));
  const auto src = x.data();
  for (std::size_t o = 0; o < iv.outer; ++o)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((o * iv.len + begin) * iv.inner),
                len * iv.inner, value.begin() + static_cast<std::ptrdiff_t>(o * len * iv.inner));
  const bool track = recording({&x});
  Tensor out = make_output(shape, std::move(value), track);
  if (track) {
    NodePtr xn = x.handle();
    detail::Node* on = out.node();
    record(out, [xn, on, iv, begin, len] {
      auto g = xn->grad_buffer();
      for (std::size_t o = 0; o < iv.outer; ++o)
        for (std::size_t j = 0; j < len * iv.inner; ++j)
          g[(o * iv.len + begin) * iv.inner + j] += on->grad[o * len * iv.inner + j];
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size())
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  const bool track = recording({&x});
  Tensor out = make_output(std::move(shape), x.to_vector(), track);
  if (track) {
    NodePtr xn = x.handle();
    detail::Node* on = out.node();
    record(out, [xn, on] {
      auto g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  require_matrix(x, "gather_rows");
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> value(indices.size() * cols);
  const auto src = x.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows)
      throw ContractError("gather_rows: index " + std::to_string(indices[i]) + " outside " +
                          std::to_string(rows) + " rows");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols), cols,
                value.begin() + static_cast<std::ptrdiff_t>(i * cols));
  }
  const bool track = recording({&x});
  Tensor out = make_output({indices.size(), cols}, std::move(value), track);
  if (track) {
    NodePtr xn = x.handle();
    detail::Node* on = out.node();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    record(out, [xn, on, idx = std::move(idx), cols] {
      auto g = xn->grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t c = 0; c < cols; ++c) g[idx[i] * cols + c] += on->grad[i * cols + c];
    });
  }
  return out;
}

Tensor repeat_rows(const Tensor& x, std::size_t m) {
  require_matrix(x, "repeat_rows");
  if (x.rows() != 1) throw DimensionError("repeat_rows: expected [1xn], got " + shape_string(x.shape()));
  const std::vector<std::size_t> idx(m, 0);
  return gather_rows(x, idx);
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const bool track = recording({&x});
  Tensor out = make_output({}, {total}, track);
  if (track) {
    NodePtr xn = x.handle();
    detail::Node* on = out.node();
    record(out, [xn, on] {
      for (auto& g : xn->grad_buffer()) g += on->grad[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor mean_rows(const Tensor& x) {
  require_matrix(x, "mean_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (m == 0) throw ContractError("mean_rows of a matrix with no rows");
  std::vector<double> value(n, 0.0);
  const auto src = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) value[j] += src[i * n + j];
  for (auto& v : value) v /= static_cast<double>(m);
  const bool track = recording({&x});
  Tensor out = make_output({1, n}, std::move(value), track);
  if (track) {
    NodePtr xn = x.handle();
    detail::Node* on = out.node();
    record(out, [xn, on, m, n] {
      auto g = xn->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += on->grad[j] / static_cast<double>(m);
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gamma.size() != cols || beta.size() != cols)
    throw DimensionError("layer_norm: gain/bias do not match width of " + shape_string(x.shape()));
  std::vector<double> value(rows * cols);
  std::vector<double> mu(rows), rstd(rows);
  kernels::layer_norm_rows(rows, cols, x.data(), gamma.data(), beta.data(), eps, value, mu, rstd);
  const bool track = recording({&x, &gamma, &beta});
  Tensor out = make_output(x.shape(), std::move(value), track);
  if (track) {
    NodePtr xn = x.handle(), gn = gamma.handle(), bn = beta.handle();
    detail::Node* on = out.node();
    record(out, [xn, gn, bn, on, rows, cols, mu = std::move(mu), rstd = std::move(rstd)] {
      std::vector<double> dx(rows * cols, 0.0), dg(cols, 0.0), db(cols, 0.0);
      kernels::layer_norm_rows_backward(rows, cols, xn->value, gn->value, mu, rstd, on->grad, dx,
                                        dg, db);
      auto add_into = [](const NodePtr& n, const std::vector<double>& d) {
        if (!n->requires_grad) return;
        auto g = n->grad_buffer();
        for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i];
      };
      add_into(xn, dx);
      add_into(gn, dg);
      add_into(bn, db);
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ContractError("dropout rate must be below 1");
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

namespace {
// max(p, eps) that lets NaN through, so a broken distribution stays visible.
double clamp_prob(double p, double eps) { return p < eps ? eps : p; }
}  // namespace

Tensor cross_entropy(const Tensor& probs, std::span<const std::size_t> targets, double eps,
                     std::span<const double> weights) {
  require_matrix(probs, "cross_entropy");
  const std::size_t t = probs.rows(), c = probs.cols();
  if (targets.size() != t)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         shape_string(probs.shape()));
  if (!weights.empty() && weights.size() != t)
    throw DimensionError("cross_entropy: weight count differs from target count");
  if (t == 0) throw ContractError("cross_entropy over zero positions");
  const auto p = probs.data();
  double total = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    if (targets[i] >= c) throw ContractError("cross_entropy: target outside class range");
    const double w = weights.empty() ? 1.0 : weights[i];
    total -= w * std::log(clamp_prob(p[i * c + targets[i]], eps));
  }
  const double inv_t = 1.0 / static_cast<double>(t);
  const bool track = recording({&probs});
  Tensor out = make_output({}, {total * inv_t}, track);
  if (track) {
    NodePtr pn = probs.handle();
    detail::Node* on = out.node();
    std::vector<std::size_t> tg(targets.begin(), targets.end());
    std::vector<double> w(weights.begin(), weights.end());
    record(out, [pn, on, tg = std::move(tg), w = std::move(w), c, eps, inv_t] {
      auto g = pn->grad_buffer();
      for (std::size_t i = 0; i < tg.size(); ++i) {
        const double pv = pn->value[i * c + tg[i]];
        if (pv <= eps) continue;  // clamped region is flat
        const double wi = w.empty() ? 1.0 : w[i];
        g[i * c + tg[i]] -= on->grad[0] * wi * inv_t / pv;
      }
    });
  }
  return out;
}

}  // namespace empsoa
