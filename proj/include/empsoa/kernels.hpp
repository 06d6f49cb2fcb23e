#pragma once

// Dense row-major kernels behind the tensor ops.
//
// Every kernel exists twice: the OpenMP version in `empsoa::kernels` used by
// the library, and a plain loop version in `empsoa::kernels::serial` kept as
// the reference the tests and the benchmark compare against. Parallel loops
// only split over output rows, so each output element is computed by exactly
// one thread with the same summation order as the serial kernel and the two
// agree bit for bit.

#include <cstddef>
#include <cstdint>
#include <span>

namespace empsoa::kernels {

// C[m×n] (+)= op(A) · op(B), op(A) is m×k and op(B) is k×n.
// With trans_a, A is stored k×m; with trans_b, B is stored n×k.
void gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a, bool trans_a,
          std::span<const double> b, bool trans_b, std::span<double> c, bool accumulate);

// Row-wise softmax over `cols`. When `allowed` is non-empty, entries with
// allowed == 0 get probability exactly 0; a fully masked row becomes all zeros.
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<const std::uint8_t> allowed, std::span<double> y);

// dx = y ⊙ (dy − rowsum(dy ⊙ y)), accumulated into dx.
void softmax_rows_backward(std::size_t rows, std::size_t cols, std::span<const double> y,
                           std::span<const double> dy, std::span<double> dx);

// y = (x − mean) · rstd · gamma + beta per row; mean/rstd are saved per row.
void layer_norm_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                     std::span<const double> gamma, std::span<const double> beta, double eps,
                     std::span<double> y, std::span<double> mean, std::span<double> rstd);

// Accumulates into dx, dgamma, dbeta.
void layer_norm_rows_backward(std::size_t rows, std::size_t cols, std::span<const double> x,
                              std::span<const double> gamma, std::span<const double> mean,
                              std::span<const double> rstd, std::span<const double> dy,
                              std::span<double> dx, std::span<double> dgamma,
                              std::span<double> dbeta);

namespace serial {

void gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a, bool trans_a,
          std::span<const double> b, bool trans_b, std::span<double> c, bool accumulate);
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<const std::uint8_t> allowed, std::span<double> y);
void softmax_rows_backward(std::size_t rows, std::size_t cols, std::span<const double> y,
                           std::span<const double> dy, std::span<double> dx);
void layer_norm_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                     std::span<const double> gamma, std::span<const double> beta, double eps,
                     std::span<double> y, std::span<double> mean, std::span<double> rstd);
void layer_norm_rows_backward(std::size_t rows, std::size_t cols, std::span<const double> x,
                              std::span<const double> gamma, std::span<const double> mean,
                              std::span<const double> rstd, std::span<const double> dy,
                              std::span<double> dx, std::span<double> dgamma,
                              std::span<double> dbeta);

}  // namespace serial

// Number of threads OpenMP will use for a parallel region (1 without OpenMP).
int max_threads();

}  // namespace empsoa::kernels
