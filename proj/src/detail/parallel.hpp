#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace stainform::detail {

/// Runs fn(begin, end) over `threads` contiguous chunks of [0, n).
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t chunks = std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(n, 1));
  if (chunks <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(chunks - 1);
  for (std::size_t i = 1; i < chunks; ++i)
    workers.emplace_back([&, i] { fn(n * i / chunks, n * (i + 1) / chunks); });
  fn(0, n / chunks);
  for (auto& t : workers) t.join();
}

}  // namespace stainform::detail
