/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <queue>
#include <vector>

#include "oppnet/common.hpp"

namespace oppnet {

using Task = std::function<void()>;

/// Timer/task scheduling seam shared by the simulator and real-time drivers.
/// Components hold an EventLoop& and never read a wall clock directly.
class EventLoop {
 public:
  virtual ~EventLoop() = default;

  virtual TimePoint now() const = 0;

  /// Runs `task` at `at`. Scheduling in the past is a logic error.
  virtual void post_at(TimePoint at, Task task) = 0;

  void post_after(Duration delay, Task task) { post_at(now() + delay, std::move(task)); }
  void post(Task task) { post_at(now(), std::move(task)); }
};

/// Wall-clock event loop for hardware use. post_at() may be called from any
/// thread; tasks run on the thread calling run_for()/run_until_idle().
class RealTimeLoop final : public EventLoop {
 public:
  RealTimeLoop();

  TimePoint now() const override;
  void post_at(TimePoint at, Task task) override;

  /// Runs due tasks until `budget` of wall time has elapsed.
  void run_for(Duration budget);
  /// Runs tasks (sleeping for future ones) until the queue is empty.
  void run_until_idle();
  void stop();

 private:
  struct Entry {
    TimePoint at;
    std::uint64_t seq;
    Task task;
    bool operator>(const Entry& o) const { return at != o.at ? at > o.at : seq > o.seq; }
  };

  bool run_one(TimePoint deadline, bool stop_when_idle);

  std::chrono::steady_clock::time_point start_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue_;
  std::uint64_t next_seq_ = 0;
  bool stopped_ = false;
};

}  // namespace oppnet
