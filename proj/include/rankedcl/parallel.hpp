#ifndef RANKEDCL_PARALLEL_HPP
#define RANKEDCL_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace rankedcl {

/// Thread cap: RANKEDCL_THREADS if set and positive, otherwise hardware concurrency.
std::size_t max_threads();
/// Overrides the cap for the rest of the process; 0 restores the environment default.
void set_max_threads(std::size_t n);

/// Splits [0, n) into contiguous chunks and runs fn(begin, end) on each.
/// Chunks never share indices, so writes keyed by index are race-free and
/// the result does not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t min_chunk = 64);

}  // namespace rankedcl

#endif  // RANKEDCL_PARALLEL_HPP
