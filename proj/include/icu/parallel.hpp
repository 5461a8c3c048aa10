#pragma once

#include <cstdint>
#include <exception>
#include <mutex>

namespace icu {

/// Selects between the OpenMP kernel and its serial reference.
enum class Exec { serial, parallel };

/// Sets the OpenMP thread count used by `Exec::parallel` kernels; values < 1 restore the default.
void set_thread_count(int threads);
int thread_count();

/// Deterministic child seed for stream `index` of a run seeded with `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/**
 * Calls f(i) for i in [0, count).
 *
 * The parallel variant uses a dynamic OpenMP schedule; the first exception thrown by any
 * iteration is rethrown after the loop. Callers write results into per-index slots so the
 * outcome does not depend on the execution order.
 */
template <class F>
void for_each_index(Exec exec, int count, F&& f) {
  if (exec == Exec::serial || count < 2) {
    for (int i = 0; i < count; ++i) f(i);
    return;
  }
  std::exception_ptr error;
  std::mutex guard;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) {
    try {
      f(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(guard);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace icu
