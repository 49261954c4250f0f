/*
 Copyright 2026 The lqstab Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef LQSTAB_PARALLEL_HPP
#define LQSTAB_PARALLEL_HPP

#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace lqstab {

/// Worker count resolution: explicit request > LQSTAB_WORKERS env var >
/// hardware concurrency, clamped to [1, 16].
inline int resolve_workers(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("LQSTAB_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && v <= 1024) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) return 1;
  return static_cast<int>(hw > 16 ? 16 : hw);
}

/// Runs body(i) for i in [0, n). Work items must be independent; results
/// keyed by i are deterministic regardless of worker count. The first
/// exception (smallest index) is rethrown after all workers join.
template <typename Body>
void parallel_for(long n, int workers, Body&& body) {
  if (n <= 0) return;
  workers = resolve_workers(workers);
  if (workers <= 1 || n == 1) {
    for (long i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<long> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::atomic<bool> failed{false};

  auto worker = [&] {
    for (;;) {
      const long i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
      }
    }
  };

  std::vector<std::thread> pool;
  const int count = static_cast<int>(std::min<long>(workers, n));
  pool.reserve(static_cast<std::size_t>(count));
  for (int w = 0; w < count; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  if (failed.load()) {
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
}

}  // namespace lqstab

#endif  // LQSTAB_PARALLEL_HPP
