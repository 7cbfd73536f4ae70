/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "oppnet/sim.hpp"

#include <cmath>
#include <deque>

namespace oppnet::sim {

std::uint64_t Simulator::schedule(TimePoint at, Task action, std::string label) {
  if (at < now_) {
    throw std::logic_error("event scheduled at " + std::to_string(at.time_since_epoch().count()) +
                           "us, before now " + std::to_string(now_.time_since_epoch().count()) + "us");
  }
  auto seq = next_seq_++;
  queue_.push(SimEvent{at, seq, std::move(action), std::move(label)});
  return seq;
}

bool Simulator::step(TimePoint limit) {
  if (queue_.empty() || queue_.top().at > limit) return false;
  SimEvent ev = std::move(const_cast<SimEvent&>(queue_.top()));
  queue_.pop();
  now_ = ev.at;
  if (trace_) trace_(ev);
  ++executed_;
  if (ev.action) ev.action();
  return true;
}

RunStats Simulator::run_until(TimePoint t_end) {
  std::uint64_t before = executed_;
  while (step(t_end)) {
  }
  if (t_end > now_) now_ = t_end;
  return RunStats{now_, executed_ - before, queue_.size()};
}

RunStats Simulator::run() {
  std::uint64_t before = executed_;
  while (step(TimePoint::max())) {
  }
  return RunStats{now_, executed_ - before, queue_.size()};
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng split_rng(std::uint64_t seed, std::string_view stream_name) {
  return Rng(splitmix64(seed ^ splitmix64(fnv1a(stream_name))));
}

void LinkModel::validate() const {
  if (!(loss_p >= 0.0 && loss_p <= 1.0)) throw std::invalid_argument("loss_p must be in [0, 1]");
  if (base_latency_ms < 0.0 || jitter_ms < 0.0) throw std::invalid_argument("latency and jitter must be >= 0");
  if (distance_m < 0.0 || max_range_m < 0.0) throw std::invalid_argument("distances must be >= 0");
}

std::optional<Duration> link_transmit(const LinkModel& link, Rng& rng) {
  if (!link.in_range()) return std::nullopt;
  double u_loss = uniform01(rng);
  double u_jitter = uniform01(rng);
  if (u_loss < link.loss_p) return std::nullopt;
  double ms = link.base_latency_ms + (2.0 * u_jitter - 1.0) * link.jitter_ms;
  return from_ms(std::max(0.0, ms));
}

double distance(const Position& a, const Position& b) { return std::hypot(a.x - b.x, a.y - b.y); }

NodeId RadioMedium::add_node(std::string name, Position position) {
  Node n;
  n.rng = split_rng(seed_, name);
  n.name = std::move(name);
  n.position = position;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

void RadioMedium::set_link(NodeId a, NodeId b, LinkModel model) {
  model.distance_m = distance(nodes_.at(a).position, nodes_.at(b).position);
  model.validate();
  links_[{a, b}] = model;
  links_[{b, a}] = model;
}

const LinkModel* RadioMedium::link(NodeId a, NodeId b) const {
  auto it = links_.find({a, b});
  return it == links_.end() ? nullptr : &it->second;
}

void RadioMedium::attach(NodeId node, Receiver receiver) { nodes_.at(node).receiver = std::move(receiver); }

void RadioMedium::transmit(NodeId from, ByteView frame, Duration airtime) {
  if (!nodes_.at(from).online) return;
  ++stats_.transmissions;
  auto shared = std::make_shared<const Bytes>(frame.begin(), frame.end());
  for (NodeId to = 0; to < nodes_.size(); ++to) {
    if (to == from) continue;
    const LinkModel* l = link(from, to);
    if (l == nullptr) continue;
    auto latency = link_transmit(*l, nodes_[from].rng);
    if (!latency) {
      ++stats_.losses;
      continue;
    }
    sim_.schedule(sim_.now() + airtime + *latency, [this, from, to, shared] {
      auto& n = nodes_[to];
      if (!n.online || !n.receiver) return;
      ++stats_.deliveries;
      n.receiver(from, *shared);
    });
  }
}

void RadioMedium::set_online(NodeId node, bool online) {
  auto& n = nodes_.at(node);
  if (n.online == online) return;
  n.online = online;
  for (auto& l : n.churn_listeners) l(online);
}

void RadioMedium::churn(NodeId node, std::optional<TimePoint> leave_at, std::optional<TimePoint> join_at) {
  if (leave_at && join_at && *join_at < *leave_at) {
    throw std::invalid_argument("churn: join must not precede leave");
  }
  if (leave_at) sim_.schedule(*leave_at, [this, node] { set_online(node, false); }, "churn.leave");
  if (join_at) sim_.schedule(*join_at, [this, node] { set_online(node, true); }, "churn.join");
}

void RadioMedium::on_churn(NodeId node, std::function<void(bool)> listener) {
  nodes_.at(node).churn_listeners.push_back(std::move(listener));
}

bool RadioMedium::reachable(NodeId from, NodeId to, unsigned max_hops) const {
  if (from == to) return true;
  if (!nodes_.at(from).online || !nodes_.at(to).online) return false;
  std::vector<unsigned> hops(nodes_.size(), ~0U);
  std::deque<NodeId> frontier{from};
  hops[from] = 0;
  while (!frontier.empty()) {
    NodeId n = frontier.front();
    frontier.pop_front();
    if (hops[n] == max_hops) continue;
    for (NodeId m = 0; m < nodes_.size(); ++m) {
      if (hops[m] != ~0U || !nodes_[m].online) continue;
      const LinkModel* l = link(n, m);
      if (l == nullptr || !l->in_range()) continue;
      if (m == to) return true;
      hops[m] = hops[n] + 1;
      frontier.push_back(m);
    }
  }
  return false;
}

}  // namespace oppnet::sim
