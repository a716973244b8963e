#include "rankedcl/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace rankedcl {
namespace {

std::atomic<std::size_t> g_override{0};

std::size_t env_threads() {
  if (const char* v = std::getenv("RANKEDCL_THREADS")) {
    try {
      const long n = std::stol(v);
      if (n > 0) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

std::size_t max_threads() {
  const std::size_t o = g_override.load();
  return o > 0 ? o : env_threads();
}

void set_max_threads(std::size_t n) { g_override.store(n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn, std::size_t min_chunk) {
  const std::size_t chunks = std::min(max_threads(), std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_chunk)));
  if (chunks <= 1) {
    if (n > 0) fn(0, n);
    return;
  }
  const std::size_t step = (n + chunks - 1) / chunks;
  std::vector<std::jthread> workers;
  workers.reserve(chunks);
  for (std::size_t begin = 0; begin < n; begin += step) {
    workers.emplace_back([&fn, begin, end = std::min(n, begin + step)] { fn(begin, end); });
  }
}

}  // namespace rankedcl
