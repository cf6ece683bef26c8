#pragma once

#include <cstddef>
#include <functional>

namespace dsb {

// Runs body(i) for i in [0, count) on up to `jobs` threads. Work is split into
// contiguous index blocks, so results written per index do not depend on the
// thread count. The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& body);

std::size_t default_jobs();

}  // namespace dsb
