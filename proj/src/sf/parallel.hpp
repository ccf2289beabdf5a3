#pragma once

#include <cstdint>
#include <functional>

namespace sf {

// Work is always cut into chunks whose boundaries depend only on the problem
// size, never on the worker count. Each chunk writes to disjoint outputs (or
// to a per-chunk partial that the caller reduces in chunk order), so results
// are bit-identical at any thread count.
void set_thread_count(int n);  // 0 = hardware concurrency
int thread_count();

using ChunkFn = std::function<void(std::int64_t chunk, std::int64_t begin, std::int64_t end)>;

void parallel_chunks(std::int64_t n_items, std::int64_t chunk_size, const ChunkFn& fn);

inline std::int64_t chunk_count(std::int64_t n_items, std::int64_t chunk_size) {
    return chunk_size > 0 ? (n_items + chunk_size - 1) / chunk_size : 0;
}

}  // namespace sf
