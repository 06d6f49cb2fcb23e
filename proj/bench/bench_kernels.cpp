// OpenMP kernels vs the serial reference. Prints median wall time of each and
// checks that both produce the same bits. Thread count follows OMP_NUM_THREADS.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "empsoa/kernels.hpp"

namespace k = empsoa::kernels;

namespace {

double median_ms(const std::function<void()>& fn, int reps) {
  std::vector<double> t;
  fn();  // warm-up
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::nth_element(t.begin(), t.begin() + t.size() / 2, t.end());
  return t[t.size() / 2];
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

void row(const std::string& name, double par, double ser, bool same) {
  std::printf("%-28s %10.3f %10.3f %8.2fx  %s\n", name.c_str(), ser, par, ser / par, same ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 7;
  std::mt19937_64 rng(1);
  std::printf("threads: %d, median of %d runs\n", k::max_threads(), reps);
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");
  bool all_same = true;

  for (bool tb : {false, true})
    for (std::size_t n : {64, 256, 512}) {
      const auto a = random_vec(n * n, rng), b = random_vec(n * n, rng);
      std::vector<double> cp(n * n), cs(n * n);
      const double par = median_ms([&] { k::gemm(n, n, n, a, false, b, tb, cp, false); }, reps);
      const double ser = median_ms([&] { k::serial::gemm(n, n, n, a, false, b, tb, cs, false); }, reps);
      const bool same = cp == cs;
      all_same &= same;
      row("gemm " + std::to_string(n) + "^3" + (tb ? " (A·Bt)" : ""), par, ser, same);
    }

  for (std::size_t rows : {128, 1024}) {
    const std::size_t cols = 512;
    const auto x = random_vec(rows * cols, rng), dy = random_vec(rows * cols, rng);
    std::vector<std::uint8_t> allowed(rows * cols);
    for (std::size_t i = 0; i < allowed.size(); ++i) allowed[i] = (i % cols) <= (i / cols) % cols;
    std::vector<double> yp(x.size()), ys(x.size());
    const std::string shape = std::to_string(rows) + "x" + std::to_string(cols);
    double par = median_ms([&] { k::softmax_rows(rows, cols, x, allowed, yp); }, reps);
    double ser = median_ms([&] { k::serial::softmax_rows(rows, cols, x, allowed, ys); }, reps);
    bool same = yp == ys;
    all_same &= same;
    row("softmax " + shape, par, ser, same);

    std::vector<double> dxp(x.size()), dxs(x.size());
    par = median_ms([&] { std::fill(dxp.begin(), dxp.end(), 0.0); k::softmax_rows_backward(rows, cols, yp, dy, dxp); }, reps);
    ser = median_ms([&] { std::fill(dxs.begin(), dxs.end(), 0.0); k::serial::softmax_rows_backward(rows, cols, ys, dy, dxs); }, reps);
    same = dxp == dxs;
    all_same &= same;
    row("softmax backward " + shape, par, ser, same);

    const auto gamma = random_vec(cols, rng), beta = random_vec(cols, rng);
    std::vector<double> mp(rows), rp(rows), ms(rows), rs(rows);
    par = median_ms([&] { k::layer_norm_rows(rows, cols, x, gamma, beta, 1e-5, yp, mp, rp); }, reps);
    ser = median_ms([&] { k::serial::layer_norm_rows(rows, cols, x, gamma, beta, 1e-5, ys, ms, rs); }, reps);
    same = yp == ys && mp == ms && rp == rs;
    all_same &= same;
    row("layer norm " + shape, par, ser, same);
  }
  return all_same ? 0 : 1;
}
