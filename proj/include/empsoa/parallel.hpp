#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace empsoa {

// OpenMP loop over [0, n) that carries the first exception out of the
// parallel region instead of terminating. fn must only write slot i.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  std::exception_ptr error;
  std::mutex guard;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      std::lock_guard lock(guard);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace empsoa
