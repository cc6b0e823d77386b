#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#include <omp.h>

namespace sandreg {

/// Execution policy for the cluster-level kernels. `serial` runs the
/// reference loops; `parallel` runs the OpenMP variants. Both reduce in
/// cluster order so their outputs agree bit for bit.
enum class Exec { serial, parallel };

inline int max_threads() { return omp_get_max_threads(); }
inline void set_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

/// Calls fn(i) for every i in [0, n). Under Exec::parallel iterations are
/// spread over OpenMP threads; an exception thrown by any iteration is
/// rethrown after the loop, choosing the lowest failing index.
template <class Fn>
void for_each_index(Exec exec, std::size_t n, Fn&& fn) {
  if (exec == Exec::serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic)
  for (long long k = 0; k < count; ++k) {
    try {
      fn(static_cast<std::size_t>(k));
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace sandreg
