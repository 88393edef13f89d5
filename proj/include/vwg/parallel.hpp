#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace vwg {

// Worker cap: VWG_THREADS env var, default = available cores.
inline unsigned max_threads() {
  static const unsigned cached = [] {
    if (const char* env = std::getenv("VWG_THREADS")) {
      const long n = std::strtol(env, nullptr, 10);
      if (n >= 1) return static_cast<unsigned>(n);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
  }();
  return cached;
}

// Runs fn(i) for i in [0, n). Each item must be independent; any combining of
// results happens afterwards in the caller, in a fixed order, so results stay
// deterministic no matter how work was distributed.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(max_threads(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace vwg
