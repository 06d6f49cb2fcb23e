#pragma once

// Plain nested-loop reference math on row-major matrices. Deliberately
// naive: no kernels, no tape, nothing shared with the library beyond reading
// parameter values out of tensors.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "empsoa/tensor.hpp"

namespace empsoa::oracle {

struct Mat {
  std::size_t r = 0, c = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0) : r(rows), c(cols), v(rows * cols, fill) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * c + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * c + j]; }
};

inline Mat of(const Tensor& t) {
  Mat m(t.rank() == 1 ? 1 : t.rows(), t.rank() == 1 ? t.size() : t.cols());
  m.v = t.to_vector();
  return m;
}

inline Mat mm(const Mat& a, const Mat& b) {
  Mat out(a.r, b.c);
  for (std::size_t i = 0; i < a.r; ++i)
    for (std::size_t j = 0; j < b.c; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.c; ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

inline Mat plus(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
  return a;
}

inline Mat plus_row(Mat a, const Mat& row) {
  for (std::size_t i = 0; i < a.r; ++i)
    for (std::size_t j = 0; j < a.c; ++j) a(i, j) += row.v[j];
  return a;
}

inline Mat cols(const Mat& a, std::size_t b, std::size_t e) {
  Mat out(a.r, e - b);
  for (std::size_t i = 0; i < a.r; ++i)
    for (std::size_t j = b; j < e; ++j) out(i, j - b) = a(i, j);
  return out;
}

inline Mat rows(const Mat& a, const std::vector<std::size_t>& idx) {
  Mat out(idx.size(), a.c);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < a.c; ++j) out(i, j) = a(idx[i], j);
  return out;
}

inline Mat relu(Mat a) {
  for (auto& x : a.v) x = x > 0 ? x : 0;
  return a;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Mat sigmoid(Mat a) {
  for (auto& x : a.v) x = sigmoid(x);
  return a;
}

inline Mat layer_norm(const Mat& a, const Mat& gamma, const Mat& beta, double eps = 1e-6) {
  Mat out(a.r, a.c);
  for (std::size_t i = 0; i < a.r; ++i) {
    double mu = 0, var = 0;
    for (std::size_t j = 0; j < a.c; ++j) mu += a(i, j);
    mu /= a.c;
    for (std::size_t j = 0; j < a.c; ++j) var += (a(i, j) - mu) * (a(i, j) - mu);
    var /= a.c;
    for (std::size_t j = 0; j < a.c; ++j) out(i, j) = (a(i, j) - mu) / std::sqrt(var + eps) * gamma.v[j] + beta.v[j];
  }
  return out;
}

// Row softmax over allowed entries (allowed empty = all); rows with nothing
// allowed become zeros.
inline Mat softmax(const Mat& s, const std::vector<std::uint8_t>& allowed = {}) {
  Mat out(s.r, s.c);
  for (std::size_t i = 0; i < s.r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < s.c; ++j)
      if (allowed.empty() || allowed[i * s.c + j]) mx = std::max(mx, s(i, j));
    if (!std::isfinite(mx)) continue;
    double z = 0;
    for (std::size_t j = 0; j < s.c; ++j)
      if (allowed.empty() || allowed[i * s.c + j]) z += std::exp(s(i, j) - mx);
    for (std::size_t j = 0; j < s.c; ++j)
      if (allowed.empty() || allowed[i * s.c + j]) out(i, j) = std::exp(s(i, j) - mx) / z;
  }
  return out;
}

// Concatenated heads of softmax(scale · Q_h K_hᵀ) V_h, then · wo if given.
inline Mat attention(const Mat& qin, const Mat& kin, const Mat& wq, const Mat& wk, const Mat& wv, const Mat* wo,
                     std::size_t heads, const std::vector<std::uint8_t>& allowed, bool scaled) {
  const std::size_t d = wq.c, dh = d / heads;
  const Mat q = mm(qin, wq), k = mm(kin, wk), v = mm(kin, wv);
  Mat out(qin.r, d);
  for (std::size_t h = 0; h < heads; ++h) {
    Mat s(qin.r, kin.r);
    for (std::size_t i = 0; i < qin.r; ++i)
      for (std::size_t j = 0; j < kin.r; ++j) {
        double dot = 0;
        for (std::size_t t = h * dh; t < (h + 1) * dh; ++t) dot += q(i, t) * k(j, t);
        s(i, j) = scaled ? dot / std::sqrt(static_cast<double>(dh)) : dot;
      }
    const Mat p = softmax(s, allowed);
    for (std::size_t i = 0; i < qin.r; ++i)
      for (std::size_t t = h * dh; t < (h + 1) * dh; ++t) {
        double acc = 0;
        for (std::size_t j = 0; j < kin.r; ++j) acc += p(i, j) * v(j, t);
        out(i, t) = acc;
      }
  }
  return wo ? mm(out, *wo) : out;
}

inline double max_abs_diff(const Mat& a, const Tensor& t) {
  const auto b = t.to_vector();
  if (b.size() != a.v.size()) return std::numeric_limits<double>::infinity();
  double m = 0;
  for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::abs(a.v[i] - b[i]));
  return m;
}

}  // namespace empsoa::oracle
