#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace otfit {

/// Process-wide worker count used by the data-parallel scans (default 1).
void set_thread_count(int n);
int thread_count() noexcept;

/// Runs body(begin, end) over disjoint chunks of [0, count). Each index is
/// touched by exactly one worker; callers write per-index results and
/// reduce afterwards in index order, so output does not depend on the
/// worker count. Runs inline when `work` (rough op count) is small.
template <class Body>
void parallel_for(std::size_t count, std::size_t work, Body&& body) {
  const int workers = thread_count();
  constexpr std::size_t kMinWorkPerThread = 1u << 18;
  if (workers <= 1 || count < 2 || work < kMinWorkPerThread * 2) {
    body(std::size_t{0}, count);
    return;
  }
  const std::size_t n = std::min<std::size_t>(
      {static_cast<std::size_t>(workers), count, std::max<std::size_t>(1, work / kMinWorkPerThread)});
  const std::size_t chunk = (count + n - 1) / n;
  std::vector<std::jthread> pool;
  pool.reserve(n - 1);
  for (std::size_t t = 1; t < n; ++t) {
    const std::size_t b = t * chunk;
    const std::size_t e = std::min(count, b + chunk);
    if (b < e) pool.emplace_back([&body, b, e] { body(b, e); });
  }
  body(std::size_t{0}, std::min(count, chunk));
}

}  // namespace otfit
