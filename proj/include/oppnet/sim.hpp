/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "oppnet/common.hpp"
#include "oppnet/event_loop.hpp"

namespace oppnet::sim {

using Rng = std::mt19937_64;

struct SimEvent {
  TimePoint at;
  std::uint64_t seq = 0;
  Task action;
  std::string label;
};

struct RunStats {
  TimePoint now;
  std::uint64_t executed = 0;
  std::size_t pending = 0;
};

/// Deterministic discrete-event loop. Events run in (at, seq) order; an event
/// may only schedule at or after the current time.
class Simulator final : public EventLoop {
 public:
  TimePoint now() const override { return now_; }

  /// Throws std::logic_error when `at` is before now().
  void post_at(TimePoint at, Task task) override { schedule(at, std::move(task)); }

  std::uint64_t schedule(TimePoint at, Task action, std::string label = {});
  std::uint64_t schedule(SimEvent event) {
    return schedule(event.at, std::move(event.action), std::move(event.label));
  }

  /// Executes every event with at <= t_end, then advances the clock to t_end.
  RunStats run_until(TimePoint t_end);
  /// Drains the queue.
  RunStats run();

  std::size_t pending() const { return queue_.size(); }
  std::uint64_t executed() const { return executed_; }

  /// Observer called before each event executes.
  void set_trace(std::function<void(const SimEvent&)> trace) { trace_ = std::move(trace); }

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  bool step(TimePoint limit);

  TimePoint now_{};
  std::uint64_t next_seq_ = 0;
  std::uint64_t executed_ = 0;
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> queue_;
  std::function<void(const SimEvent&)> trace_;
};

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Independent per-node generator derived from the scenario seed and the node
/// name, so adding a node leaves other nodes' draws untouched.
Rng split_rng(std::uint64_t seed, std::string_view stream_name);

struct LinkModel {
  double base_latency_ms = 0.0;
  /// Half-width of the uniform latency jitter.
  double jitter_ms = 0.0;
  /// Per-transmission loss probability.
  double loss_p = 0.0;
  double max_range_m = std::numeric_limits<double>::infinity();
  double distance_m = 0.0;

  bool in_range() const { return distance_m <= max_range_m; }
  void validate() const;
};

/// One transmission over `link`: nullopt when lost, else the sampled latency.
/// Out-of-range links always lose. Draws exactly two variates when in range.
std::optional<Duration> link_transmit(const LinkModel& link, Rng& rng);

struct Position {
  double x = 0.0;
  double y = 0.0;
};

double distance(const Position& a, const Position& b);

using NodeId = std::size_t;

/// Shared radio channel: a transmission from one node reaches each online,
/// linked, in-range neighbour independently.
class RadioMedium {
 public:
  using Receiver = std::function<void(NodeId from, ByteView frame)>;

  RadioMedium(Simulator& sim, std::uint64_t seed) : sim_(sim), seed_(seed) {}

  NodeId add_node(std::string name, Position position);
  /// Symmetric link; distance is taken from node positions.
  void set_link(NodeId a, NodeId b, LinkModel model);
  const LinkModel* link(NodeId a, NodeId b) const;

  void attach(NodeId node, Receiver receiver);

  /// Broadcasts `frame`; each receiver gets it at now + airtime + latency.
  void transmit(NodeId from, ByteView frame, Duration airtime);

  bool online(NodeId node) const { return nodes_.at(node).online; }
  void set_online(NodeId node, bool online);
  /// Scripted departure/arrival. Listeners registered with on_churn run at
  /// each transition.
  void churn(NodeId node, std::optional<TimePoint> leave_at, std::optional<TimePoint> join_at);
  void on_churn(NodeId node, std::function<void(bool online)> listener);

  /// Hop-limited reachability over in-range links between online nodes.
  bool reachable(NodeId from, NodeId to, unsigned max_hops) const;

  Rng& rng(NodeId node) { return nodes_.at(node).rng; }
  const std::string& name(NodeId node) const { return nodes_.at(node).name; }
  const Position& position(NodeId node) const { return nodes_.at(node).position; }
  std::size_t size() const { return nodes_.size(); }
  Simulator& simulator() { return sim_; }

  struct Stats {
    std::uint64_t transmissions = 0;
    std::uint64_t deliveries = 0;
    std::uint64_t losses = 0;
  };
  const Stats& stats() const { return stats_; }

 private:
  struct Node {
    std::string name;
    Position position;
    Rng rng;
    bool online = true;
    Receiver receiver;
    std::vector<std::function<void(bool)>> churn_listeners;
  };

  Simulator& sim_;
  std::uint64_t seed_;
  std::vector<Node> nodes_;
  std::map<std::pair<NodeId, NodeId>, LinkModel> links_;
  Stats stats_;
};

}  // namespace oppnet::sim
