#include "parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace vhj {

namespace {
std::atomic<int> g_threads{0};
}

int thread_count() {
  int n = g_threads.load();
  if (n > 0) return n;
  if (const char* env = std::getenv("VHJ_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

void set_thread_count(int n) { g_threads.store(n > 0 ? n : 0); }

void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  std::size_t nc = chunk_count(n);
  int nt = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), nc);
  if (nt <= 1) {
    for (std::size_t c = 0; c < nc; ++c) fn(c, c * kChunk, std::min(n, (c + 1) * kChunk));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      std::size_t c = next.fetch_add(1);
      if (c >= nc) return;
      try {
        fn(c, c * kChunk, std::min(n, (c + 1) * kChunk));
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
        next.store(nc);
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace vhj
