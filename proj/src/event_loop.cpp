/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "oppnet/event_loop.hpp"

namespace oppnet {

RealTimeLoop::RealTimeLoop() : start_(std::chrono::steady_clock::now()) {}

TimePoint RealTimeLoop::now() const {
  auto elapsed = std::chrono::steady_clock::now() - start_;
  return TimePoint{std::chrono::duration_cast<Duration>(elapsed)};
}

void RealTimeLoop::post_at(TimePoint at, Task task) {
  {
    std::lock_guard lock(mutex_);
    // Past deadlines run immediately: wall time keeps moving while callers compute `at`.
    queue_.push(Entry{at, next_seq_++, std::move(task)});
  }
  cv_.notify_all();
}

void RealTimeLoop::stop() {
  {
    std::lock_guard lock(mutex_);
    stopped_ = true;
  }
  cv_.notify_all();
}

bool RealTimeLoop::run_one(TimePoint deadline, bool stop_when_idle) {
  std::unique_lock lock(mutex_);
  for (;;) {
    if (stopped_) return false;
    auto t = now();
    if (t >= deadline) return false;
    if (queue_.empty()) {
      if (stop_when_idle) return false;
      cv_.wait_for(lock, std::chrono::duration_cast<std::chrono::microseconds>(deadline - t));
      continue;
    }
    if (queue_.top().at <= t) break;
    auto wake = std::min(queue_.top().at, deadline);
    cv_.wait_for(lock, std::chrono::duration_cast<std::chrono::microseconds>(wake - t));
  }
  Task task = std::move(const_cast<Entry&>(queue_.top()).task);
  queue_.pop();
  lock.unlock();
  task();
  return true;
}

void RealTimeLoop::run_for(Duration budget) {
  auto deadline = now() + budget;
  while (run_one(deadline, false)) {
  }
}

void RealTimeLoop::run_until_idle() {
  while (run_one(TimePoint::max(), true)) {
  }
}

}  // namespace oppnet
