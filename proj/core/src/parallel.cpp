#include "nails/parallel.hpp"

#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nails {

int worker_threads() {
  if (const char* env = std::getenv("NAILS_THREADS")) {
    const int n = std::atoi(env);
    return n >= 1 ? n : 1;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(Index n, const std::function<void(Index)>& body) {
  const int workers = worker_threads();
  if (workers <= 1 || n < 64) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  const int used = static_cast<int>(std::min<Index>(workers, n));
  const Index chunk = (n + used - 1) / used;
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(used);
  for (int w = 0; w < used; ++w) {
    const Index lo = w * chunk;
    const Index hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body, &error, &error_mutex] {
      try {
        for (Index i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace nails
