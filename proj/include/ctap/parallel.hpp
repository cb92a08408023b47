#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace ctap {

// Fixed-size pool of worker threads. parallel_for splits [0, n) into one
// contiguous block per thread; the calling thread takes block 0. Blocks are a
// pure function of (n, size()), so kernels writing disjoint outputs are
// deterministic.
class ThreadPool {
 public:
  explicit ThreadPool(unsigned threads = 1) : n_threads_(std::max(1u, threads)) {
    workers_.reserve(n_threads_ - 1);
    for (unsigned w = 1; w < n_threads_; ++w) {
      workers_.emplace_back([this, w] { worker_loop(w); });
    }
  }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  ~ThreadPool() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
      ++generation_;
    }
    wake_.notify_all();
    for (auto& t : workers_) t.join();
  }

  unsigned size() const { return n_threads_; }

  // fn(begin, end) is called once per non-empty block.
  void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    if (n_threads_ == 1 || n == 1) {
      fn(0, n);
      return;
    }
    {
      std::lock_guard lock(mutex_);
      task_ = &fn;
      task_n_ = n;
      pending_ = n_threads_ - 1;
      error_ = nullptr;
      ++generation_;
    }
    wake_.notify_all();
    run_block(0, fn, n);
    std::unique_lock lock(mutex_);
    done_.wait(lock, [this] { return pending_ == 0; });
    task_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void run_block(unsigned w, const std::function<void(std::size_t, std::size_t)>& fn,
                 std::size_t n) {
    const std::size_t begin = n * w / n_threads_;
    const std::size_t end = n * (w + 1) / n_threads_;
    if (begin < end) fn(begin, end);
  }

  void worker_loop(unsigned w) {
    std::size_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t, std::size_t)>* fn = nullptr;
      std::size_t n = 0;
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return generation_ != seen; });
        seen = generation_;
        if (stop_) return;
        fn = task_;
        n = task_n_;
      }
      try {
        run_block(w, *fn, n);
      } catch (...) {
        std::lock_guard lock(mutex_);
        if (!error_) error_ = std::current_exception();
      }
      {
        std::lock_guard lock(mutex_);
        if (--pending_ == 0) done_.notify_one();
      }
    }
  }

  unsigned n_threads_;
  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t, std::size_t)>* task_ = nullptr;
  std::size_t task_n_ = 0;
  std::size_t generation_ = 0;
  unsigned pending_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

// Pairwise sum in a fixed tree order. Together with per-slab partial sums this
// gives reductions that are bitwise independent of the thread count.
inline double pairwise_sum(std::span<const double> v) {
  if (v.empty()) return 0.0;
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

// Thread count from an explicit request, else SIM_THREADS, else 1.
inline unsigned resolve_thread_count(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SIM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

}  // namespace ctap
