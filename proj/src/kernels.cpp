#include "empsoa/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace empsoa::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

inline double elem(std::span<const double> m, bool trans, std::size_t rows, std::size_t cols,
                   std::size_t r, std::size_t c) {
  // m is logically rows×cols; stored transposed when trans is set.
  return trans ? m[c * rows + r] : m[r * cols + c];
}

// One output row of C, k-outer so the inner loop streams a row of B.
inline void gemm_row(std::size_t i, std::size_t m, std::size_t n, std::size_t k,
                     std::span<const double> a, bool trans_a, std::span<const double> b,
                     bool trans_b, std::span<double> c, bool accumulate) {
  double* out = c.data() + i * n;
  if (!accumulate) std::fill(out, out + n, 0.0);
  if (trans_b) {
    // Rows of B are contiguous here: one dot product per output, same p order.
    std::vector<double> arow(k);
    for (std::size_t p = 0; p < k; ++p) arow[p] = elem(a, trans_a, m, k, i, p);
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data() + j * k;
      double acc = out[j];
      for (std::size_t p = 0; p < k; ++p) {
        if (arow[p] == 0.0) continue;
        acc += arow[p] * brow[p];
      }
      out[j] = acc;
    }
    return;
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double av = elem(a, trans_a, m, k, i, p);
    if (av == 0.0) continue;
    const double* brow = b.data() + p * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
  }
}

inline void softmax_row(std::size_t r, std::size_t cols, std::span<const double> x,
                        std::span<const std::uint8_t> allowed, std::span<double> y) {
  const double* in = x.data() + r * cols;
  double* out = y.data() + r * cols;
  const std::uint8_t* mask = allowed.empty() ? nullptr : allowed.data() + r * cols;
  // NaN inputs must survive into the output rather than look fully masked.
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cols; ++c) {
    if (mask && !mask[c]) continue;
    if (std::isnan(in[c])) {
      mx = in[c];
      break;
    }
    mx = std::max(mx, in[c]);
  }
  if (mx == -std::numeric_limits<double>::infinity()) {
    std::fill(out, out + cols, 0.0);
    return;
  }
  double total = 0.0;
  for (std::size_t c = 0; c < cols; ++c) {
    out[c] = (!mask || mask[c]) ? std::exp(in[c] - mx) : 0.0;
    total += out[c];
  }
  for (std::size_t c = 0; c < cols; ++c) out[c] /= total;
}

inline void softmax_backward_row(std::size_t r, std::size_t cols, std::span<const double> y,
                                 std::span<const double> dy, std::span<double> dx) {
  const double* yr = y.data() + r * cols;
  const double* dyr = dy.data() + r * cols;
  double dot = 0.0;
  for (std::size_t c = 0; c < cols; ++c) dot += dyr[c] * yr[c];
  double* dxr = dx.data() + r * cols;
  for (std::size_t c = 0; c < cols; ++c) dxr[c] += yr[c] * (dyr[c] - dot);
}

inline void layer_norm_row(std::size_t r, std::size_t cols, std::span<const double> x,
                           std::span<const double> gamma, std::span<const double> beta,
                           double eps, std::span<double> y, std::span<double> mean,
                           std::span<double> rstd) {
  const double* in = x.data() + r * cols;
  double mu = 0.0;
  for (std::size_t c = 0; c < cols; ++c) mu += in[c];
  mu /= static_cast<double>(cols);
  double var = 0.0;
  for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
  var /= static_cast<double>(cols);
  const double rs = 1.0 / std::sqrt(var + eps);
  mean[r] = mu;
  rstd[r] = rs;
  double* out = y.data() + r * cols;
  for (std::size_t c = 0; c < cols; ++c) out[c] = (in[c] - mu) * rs * gamma[c] + beta[c];
}

inline void layer_norm_backward_row(std::size_t r, std::size_t cols, std::span<const double> x,
                                    std::span<const double> gamma, std::span<const double> mean,
                                    std::span<const double> rstd, std::span<const double> dy,
                                    std::span<double> dx) {
  const double* in = x.data() + r * cols;
  const double* g = dy.data() + r * cols;
  const double mu = mean[r];
  const double rs = rstd[r];
  const double n = static_cast<double>(cols);
  double sum_gh = 0.0;
  double sum_gh_xhat = 0.0;
  for (std::size_t c = 0; c < cols; ++c) {
    const double gh = g[c] * gamma[c];
    sum_gh += gh;
    sum_gh_xhat += gh * (in[c] - mu) * rs;
  }
  double* out = dx.data() + r * cols;
  for (std::size_t c = 0; c < cols; ++c) {
    const double xhat = (in[c] - mu) * rs;
    out[c] += rs * (g[c] * gamma[c] - sum_gh / n - xhat * sum_gh_xhat / n);
  }
}

inline void layer_norm_param_col(std::size_t c, std::size_t rows, std::size_t cols,
                                 std::span<const double> x, std::span<const double> mean,
                                 std::span<const double> rstd, std::span<const double> dy,
                                 std::span<double> dgamma, std::span<double> dbeta) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = dy[r * cols + c];
    dgamma[c] += g * (x[r * cols + c] - mean[r]) * rstd[r];
    dbeta[c] += g;
  }
}

}  // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a, bool trans_a,
          std::span<const double> b, bool trans_b, std::span<double> c, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
  [[maybe_unused]] const bool big = m * n * k >= kParallelWork && m > 1;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    gemm_row(static_cast<std::size_t>(i), m, n, k, a, trans_a, b, trans_b, c, accumulate);
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<const std::uint8_t> allowed, std::span<double> y) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
  [[maybe_unused]] const bool big = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t r = 0; r < n; ++r)
    softmax_row(static_cast<std::size_t>(r), cols, x, allowed, y);
}

void softmax_rows_backward(std::size_t rows, std::size_t cols, std::span<const double> y,
                           std::span<const double> dy, std::span<double> dx) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
  [[maybe_unused]] const bool big = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t r = 0; r < n; ++r)
    softmax_backward_row(static_cast<std::size_t>(r), cols, y, dy, dx);
}

void layer_norm_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                     std::span<const double> gamma, std::span<const double> beta, double eps,
                     std::span<double> y, std::span<double> mean, std::span<double> rstd) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
  [[maybe_unused]] const bool big = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t r = 0; r < n; ++r)
    layer_norm_row(static_cast<std::size_t>(r), cols, x, gamma, beta, eps, y, mean, rstd);
}

void layer_norm_rows_backward(std::size_t rows, std::size_t cols, std::span<const double> x,
                              std::span<const double> gamma, std::span<const double> mean,
                              std::span<const double> rstd, std::span<const double> dy,
                              std::span<double> dx, std::span<double> dgamma,
                              std::span<double> dbeta) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
  const auto ncols = static_cast<std::ptrdiff_t>(cols);
  [[maybe_unused]] const bool big = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t r = 0; r < n; ++r)
    layer_norm_backward_row(static_cast<std::size_t>(r), cols, x, gamma, mean, rstd, dy, dx);
  // Parameter gradients reduce over rows, so split over columns instead.
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t c = 0; c < ncols; ++c)
    layer_norm_param_col(static_cast<std::size_t>(c), rows, cols, x, mean, rstd, dy, dgamma,
                         dbeta);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a, bool trans_a,
          std::span<const double> b, bool trans_b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = elem(a, trans_a, m, k, i, p);
        if (av == 0.0) continue;
        acc += av * elem(b, trans_b, k, n, p, j);
      }
      c[i * n + j] = acc;
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<const std::uint8_t> allowed, std::span<double> y) {
  for (std::size_t r = 0; r < rows; ++r) softmax_row(r, cols, x, allowed, y);
}

void softmax_rows_backward(std::size_t rows, std::size_t cols, std::span<const double> y,
                           std::span<const double> dy, std::span<double> dx) {
  for (std::size_t r = 0; r < rows; ++r) softmax_backward_row(r, cols, y, dy, dx);
}

void layer_norm_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                     std::span<const double> gamma, std::span<const double> beta, double eps,
                     std::span<double> y, std::span<double> mean, std::span<double> rstd) {
  for (std::size_t r = 0; r < rows; ++r)
    layer_norm_row(r, cols, x, gamma, beta, eps, y, mean, rstd);
}

void layer_norm_rows_backward(std::size_t rows, std::size_t cols, std::span<const double> x,
                              std::span<const double> gamma, std::span<const double> mean,
                              std::span<const double> rstd, std::span<const double> dy,
                              std::span<double> dx, std::span<double> dgamma,
                              std::span<double> dbeta) {
  for (std::size_t r = 0; r < rows; ++r)
    layer_norm_backward_row(r, cols, x, gamma, mean, rstd, dy, dx);
  for (std::size_t c = 0; c < cols; ++c)
    layer_norm_param_col(c, rows, cols, x, mean, rstd, dy, dgamma, dbeta);
}

}  // namespace serial
}  // namespace empsoa::kernels
