#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hyperwalk {

// Base for every error the library raises. Callers that only want to
// distinguish "our" failures from std ones catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

// Parse failure with the 1-based line number of the offending input.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Cap on the number of group elements an enumeration may touch.
struct Budget {
  std::size_t max_elements = 50'000'000;

  void check(std::size_t used, const char* what) const {
    if (used > max_elements) {
      throw BudgetExceeded(std::string(what) + ": enumeration budget of " +
                           std::to_string(max_elements) + " elements exceeded");
    }
  }
};

// SplitMix64 finalizer; used to derive independent stream seeds from a master
// seed and a counter.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t master, std::uint64_t stream) {
  return Rng(stream_seed(master, stream));
}

namespace detail {
inline std::atomic<unsigned>& worker_override() {
  static std::atomic<unsigned> n{0};
  return n;
}
}  // namespace detail

// Pool size: set_worker_count() if called, else HYPERWALK_THREADS, else the
// hardware concurrency. Results never depend on it.
inline void set_worker_count(unsigned n) { detail::worker_override() = n; }

inline unsigned worker_count() {
  if (unsigned o = detail::worker_override(); o > 0) return o;
  if (const char* env = std::getenv("HYPERWALK_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1u : n;
}

// Runs fn(task) for task in [0, tasks) on a small pool. Each task must write
// only to its own output slot; callers reduce in task order afterwards so the
// result does not depend on scheduling or worker count.
inline void parallel_tasks(std::size_t tasks, const std::function<void(std::size_t)>& fn,
                           unsigned workers = 0) {
  if (workers == 0) workers = worker_count();
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, tasks));
  if (workers <= 1) {
    for (std::size_t t = 0; t < tasks; ++t) fn(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t t = next++; t < tasks; t = next++) fn(t);
      } catch (...) {
        errors[w] = std::current_exception();
        next = tasks;
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Fixed-size chunking of `count` items. Chunk c always covers the same items
// and gets stream seed c, regardless of the number of workers.
struct Chunking {
  std::size_t count;
  std::size_t chunk = 1024;

  std::size_t chunks() const { return count == 0 ? 0 : (count + chunk - 1) / chunk; }
  std::size_t begin(std::size_t c) const { return c * chunk; }
  std::size_t end(std::size_t c) const { return std::min(count, (c + 1) * chunk); }
};

}  // namespace hyperwalk
