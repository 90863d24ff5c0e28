#include "rfp/parallel.hpp"

#include <cstdlib>

namespace rfp {

ThreadPool& ThreadPool::instance() {
  static ThreadPool pool;
  return pool;
}

ThreadPool::ThreadPool() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("RFP_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && v <= 256) hw = static_cast<unsigned>(v);
  }
  // caller participates, so spawn hw-1 workers
  for (unsigned i = 1; i < hw; ++i) {
    workers_.emplace_back([this] { worker_loop(); });
  }
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    stop_ = true;
  }
  cv_work_.notify_all();
  for (auto& t : workers_) t.join();
}

void ThreadPool::worker_loop() {
  for (;;) {
    int shard = -1;
    const std::function<void(int, std::int64_t, std::int64_t)>* fn = nullptr;
    std::int64_t n = 0;
    int shards = 0;
    {
      std::unique_lock<std::mutex> lock(mu_);
      cv_work_.wait(lock, [this] { return stop_ || (has_work_ && batch_.next < batch_.shards); });
      if (stop_) return;
      shard = batch_.next++;
      fn = batch_.fn;
      n = batch_.n;
      shards = batch_.shards;
    }
    (*fn)(shard, shard_begin(n, shards, shard), shard_end(n, shards, shard));
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (++batch_.done == batch_.shards) {
        has_work_ = false;
        cv_done_.notify_all();
      }
    }
  }
}

void ThreadPool::for_shards(std::int64_t n,
                            const std::function<void(int, std::int64_t, std::int64_t)>& fn,
                            int shards) {
  if (n <= 0) return;
  if (shards < 1) shards = 1;
  if (workers_.empty() || shards == 1) {
    for (int s = 0; s < shards; ++s) fn(s, shard_begin(n, shards, s), shard_end(n, shards, s));
    return;
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    batch_ = Batch{&fn, n, shards, 0, 0};
    has_work_ = true;
  }
  cv_work_.notify_all();
  // caller helps drain the shard queue
  for (;;) {
    int shard = -1;
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (batch_.next < batch_.shards) shard = batch_.next++;
    }
    if (shard < 0) break;
    fn(shard, shard_begin(n, shards, shard), shard_end(n, shards, shard));
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (++batch_.done == batch_.shards) {
        has_work_ = false;
        cv_done_.notify_all();
        return;
      }
    }
  }
  std::unique_lock<std::mutex> lock(mu_);
  cv_done_.wait(lock, [this] { return !has_work_; });
}

}  // namespace rfp
