#pragma once

#include <cstddef>
#include <functional>

namespace mixedabc {

/// Worker count: hardware concurrency, capped by MIXEDABC_THREADS when set.
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Work is split into contiguous blocks; each
/// index is executed exactly once and writes only its own outputs, so results
/// do not depend on the number of workers. Exceptions from any block are
/// rethrown on the calling thread (the lowest failing block wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace mixedabc
