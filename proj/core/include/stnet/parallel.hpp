#pragma once

#include <cstddef>
#include <functional>

namespace stnet {

/// Upper bound on worker threads used inside kernels. Results never depend on
/// this value: work is split over independent output elements only.
void set_max_threads(std::size_t n);
std::size_t max_threads();

/// Calls fn(begin, end) over contiguous chunks of [0, n).
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace stnet
