#pragma once
#include <cstddef>
#include <functional>

namespace vhj {

// Number of worker threads. Reads VHJ_THREADS, falls back to hardware concurrency.
int thread_count();
void set_thread_count(int n);

// Work is cut into fixed chunks that do not depend on the thread count, so any
// per-chunk partial result combined in chunk order is reproducible.
constexpr std::size_t kChunk = 2048;

inline std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

// fn(chunk_index, begin, end)
void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace vhj
