#include "icu/parallel.hpp"

#include <omp.h>

#include <array>
#include <random>

namespace icu {

namespace {

int default_threads() {
  static const int n = omp_get_max_threads();
  return n;
}

}  // namespace

void set_thread_count(int threads) { omp_set_num_threads(threads < 1 ? default_threads() : threads); }

int thread_count() { return omp_get_max_threads(); }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace icu
