#pragma once

// Shared test helpers: seeded random tensors and a central finite-difference
// gradient checker that is independent of the tape under test.

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "empsoa/tensor.hpp"

namespace empsoa::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

inline Tensor random_param(Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t = random_tensor(std::move(shape), rng, lo, hi);
  t.set_requires_grad(true);
  return t;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

// Relative error |a − n| / max(|a|, |n|, floor). The floor keeps gradients
// that are zero in exact arithmetic from dividing noise by noise.
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares tape gradients of `loss_fn` against central differences with step h
// for every scalar in every tensor of `params`. `names` labels the report.
inline GradCheckReport grad_check(const std::vector<Tensor>& params,
                                  const std::function<Tensor()>& loss_fn, double h = 1e-4,
                                  double floor = 1e-6,
                                  const std::vector<std::string>& names = {}) {
  for (auto p : params) p.zero_grad();
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = loss_fn();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
  }
  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    auto data = p.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const long double fp = loss_fn().item();
      data[i] = saved - h;
      const long double fm = loss_fn().item();
      data[i] = saved;
      const double numeric = static_cast<double>((fp - fm) / (2.0L * h));
      const double rel = relative_error(analytic[pi][i], numeric, floor);
      ++report.checked;
      report.max_abs_error = std::max(report.max_abs_error, std::abs(analytic[pi][i] - numeric));
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = (pi < names.size() ? names[pi] : "param" + std::to_string(pi)) + "[" +
                       std::to_string(i) + "] analytic=" + std::to_string(analytic[pi][i]) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  return report;
}

// Overwrites every parameter of a store with U(lo, hi) draws, so that tests
// do not depend on the zero / one initial biases and gains.
template <class Store>
void randomize(Store& store, std::mt19937_64& rng, double lo = -0.5, double hi = 0.5) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& [path, t] : store.entries()) {
    Tensor p = t;
    for (auto& x : p.mutable_data()) x = dist(rng);
  }
}

template <class Store>
std::vector<Tensor> all_params(const Store& store, std::vector<std::string>* names = nullptr) {
  std::vector<Tensor> out;
  for (const auto& [path, t] : store.entries()) {
    out.push_back(t);
    if (names) names->push_back(path);
  }
  return out;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("empsoa_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::filesystem::path source_dir() { return EMPSOA_SOURCE_DIR; }

}  // namespace empsoa::testing
