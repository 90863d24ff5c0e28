#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace rfp {

/// Work is always split into a fixed number of shards (independent of the
/// worker count), so floating-point reductions that sum per-shard partials
/// in shard order are bit-identical no matter how many threads execute.
inline constexpr int kShards = 16;

class ThreadPool {
 public:
  static ThreadPool& instance();

  /// Runs fn(shard, begin, end) for each shard of [0, n). fn must only
  /// write to shard-disjoint state; returns after all shards finish.
  void for_shards(std::int64_t n, const std::function<void(int, std::int64_t, std::int64_t)>& fn,
                  int shards = kShards);

  int worker_count() const { return static_cast<int>(workers_.size()) + 1; }

  ~ThreadPool();

 private:
  ThreadPool();
  void worker_loop();

  struct Batch {
    const std::function<void(int, std::int64_t, std::int64_t)>* fn = nullptr;
    std::int64_t n = 0;
    int shards = 0;
    int next = 0;
    int done = 0;
  };

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_work_;
  std::condition_variable cv_done_;
  Batch batch_;
  bool has_work_ = false;
  bool stop_ = false;
};

/// Shard boundaries for item i of `shards` over [0, n): contiguous, balanced.
inline std::int64_t shard_begin(std::int64_t n, int shards, int s) {
  return n * s / shards;
}
inline std::int64_t shard_end(std::int64_t n, int shards, int s) {
  return n * (s + 1) / shards;
}

}  // namespace rfp
