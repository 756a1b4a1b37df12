#pragma once

#include <cstddef>
#include <functional>

namespace imave {

// Resolves a worker count: explicit request > IMAVE_THREADS env > hardware.
int resolve_workers(int requested);

// Runs fn(chunk_index, begin, end) over [0, n) split into fixed-size chunks.
// Chunk boundaries depend only on n and chunk_size, never on the worker
// count, so per-chunk partial results combined in chunk order give identical
// floating-point sums for any number of workers. fn must only write to
// chunk- or index-owned slots.
void parallel_chunks(std::size_t n, std::size_t chunk_size, int workers,
                     const std::function<void(std::size_t, std::size_t,
                                              std::size_t)>& fn);

// Default chunk size for n work items: a function of n alone.
std::size_t default_chunk(std::size_t n);

}  // namespace imave
