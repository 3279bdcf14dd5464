#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace mpac {

// Runs fn(begin, end) over disjoint index ranges, possibly on several
// threads. Safe only when iterations write to disjoint locations; results
// are then independent of the thread count by construction.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (n == 0) return;
  threads = std::max(1, threads);
  if (threads == 1 || n < 2048) {
    fn(std::size_t{0}, n);
    return;
  }
  std::size_t workers = std::min<std::size_t>(threads, n);
  std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t b = w * chunk;
    std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& t : pool) t.join();
}

// Fixed-partition variant for reductions: the index space is always split
// into the same `pieces` ranges regardless of thread count, so combining
// per-piece partials in piece order gives bit-identical results for any
// number of threads.
inline constexpr std::size_t kReducePieces = 64;

template <typename Fn>
void parallel_pieces(std::size_t n, int threads, Fn&& fn) {
  if (n == 0) return;
  std::size_t pieces = std::min(kReducePieces, n);
  std::size_t chunk = (n + pieces - 1) / pieces;
  parallel_for(pieces, threads, [&](std::size_t pb, std::size_t pe) {
    for (std::size_t p = pb; p < pe; ++p) {
      std::size_t b = p * chunk;
      std::size_t e = std::min(n, b + chunk);
      if (b < e) fn(p, b, e);
    }
  });
}

}  // namespace mpac
