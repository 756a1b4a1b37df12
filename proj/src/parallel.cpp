#include "imave/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace imave {

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("IMAVE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

std::size_t default_chunk(std::size_t n) {
  // Fixed-by-n chunking keeps partial-sum order independent of workers.
  if (n <= 256) return 64;
  return 128;
}

void parallel_chunks(std::size_t n, std::size_t chunk_size, int workers,
                     const std::function<void(std::size_t, std::size_t,
                                              std::size_t)>& fn) {
  if (n == 0) return;
  if (chunk_size == 0) chunk_size = default_chunk(n);
  const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
  const std::size_t w = std::min<std::size_t>(
      static_cast<std::size_t>(std::max(workers, 1)), n_chunks);

  if (w <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) {
      const std::size_t b = c * chunk_size;
      fn(c, b, std::min(b + chunk_size, n));
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  auto body = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks || failed.load()) return;
      const std::size_t b = c * chunk_size;
      try {
        fn(c, b, std::min(b + chunk_size, n));
      } catch (...) {
        if (!failed.exchange(true)) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(w - 1);
  for (std::size_t t = 1; t < w; ++t) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
  if (failed.load() && first_error) std::rethrow_exception(first_error);
}

}  // namespace imave
