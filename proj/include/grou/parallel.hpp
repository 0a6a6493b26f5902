#pragma once

#include "grou/core.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace grou {

/// Explicit request, else GROU_THREADS, else the hardware concurrency.
inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GROU_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

template <class R>
struct Outcome {
  std::optional<R> value;
  std::string error;
};

/// Evaluates fn(0..n-1) on a pool of worker threads. Results keep index order,
/// so the reduction never depends on scheduling. Numerical failures are kept
/// per index; input errors are rethrown since they would hit every index.
template <class R, class F>
std::vector<Outcome<R>> parallel_map(Index n, unsigned threads, F fn) {
  std::vector<Outcome<R>> out(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> fatal(static_cast<std::size_t>(n));
  std::atomic<Index> next{0};
  auto worker = [&] {
    for (Index i = next++; i < n; i = next++) {
      auto& slot = out[static_cast<std::size_t>(i)];
      try {
        slot.value = fn(i);
      } catch (const Error& e) {
        if (e.is_input_error()) fatal[static_cast<std::size_t>(i)] = std::current_exception();
        slot.error = e.what();
      } catch (...) {
        fatal[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  const unsigned count = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<Index>(1, n))));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& f : fatal) {
    if (f) std::rethrow_exception(f);
  }
  return out;
}

}  // namespace grou
