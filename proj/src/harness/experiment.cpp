/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include <cmath>
#include <memory>

#include "oppnet/harness.hpp"
#include "oppnet/p2p/host.hpp"
#include "oppnet/pubsub.hpp"

namespace oppnet::harness {

namespace {

using mesh::MeshAddress;

Duration seconds(double s) { return from_ms(1000.0 * s); }

/// One Raspberry Pi + radio board pair: host stack, bridge, serial line,
/// gateway firmware and mesh client.
struct Node {
  Node(sim::Simulator& sim, mesh::MeshNetwork& network, const ScenarioConfig& cfg,
       const NodeSpec& spec, sim::NodeId id)
      : name(spec.name),
        sim_id(id),
        identity_rng(sim::split_rng(cfg.seed, spec.name + "/identity")),
        ephemeral_rng(sim::split_rng(cfg.seed, spec.name + "/ephemeral")),
        client(network, id, cfg.mesh),
        pipe(make_memory_pipe(sim, PipeOptions{cfg.serial_baud})),
        gateway(client, pipe.second),
        bridge(sim, pipe.first, cfg.bridge),
        host(sim, p2p::KeyPair::from_rng(identity_rng), host_config(cfg), [this](MeshAddress dst, Bytes m) {
          transport(dst, std::move(m));
        }),
        router(sim, host.peer_id().str(), pubsub::RouterConfig{cfg.strict_floodsub}) {
    std::set<MeshAddress> groups;
    for (auto g : spec.groups) groups.insert(MeshAddress(g));
    client.provision(MeshAddress(spec.unicast), groups);
    host.set_ephemeral_source([this] { return p2p::KeyPair::from_rng(ephemeral_rng); });

    client.on_receive([this](const mesh::Received& r) {
      switch (r.opcode) {
        case mesh::Opcode::data:
          gateway.handle(r);
          break;
        case mesh::Opcode::presence:
        case mesh::Opcode::presence_reply: {
          bool reply = r.opcode == mesh::Opcode::presence_reply;
          auto peer = to_string(r.payload);
          if (host.handle_presence(r.src, peer, reply)) {
            client.send(r.src, to_bytes(host.peer_id().str()), {}, mesh::Opcode::presence_reply);
          }
          if (on_discovered) on_discovered(peer);
          break;
        }
      }
    });
    bridge.on_delivery([this](const bridge::Delivery& d) {
      host.handle_message(MeshAddress(frame::mesh_address_of(d.source)), d.payload);
    });
    pubsub::bind_router(host, router);
  }

  static p2p::HostConfig host_config(const ScenarioConfig& cfg) {
    p2p::HostConfig h;
    h.keep_alive = seconds(cfg.keep_alive_s);
    return h;
  }

  void transport(MeshAddress dst, Bytes message) {
    auto handle = bridge.send(message, frame::device_address(dst.value()));
    if (on_bridge_send) on_bridge_send(handle);
  }

  void announce() { client.broadcast_presence(host.peer_id().str()); }

  /// Departure: every layer drops its in-flight state.
  void leave() {
    client.reset();
    gateway.reset();
    bridge.reset();
    host.reset();
    router.clear_neighbors();
  }

  std::string name;
  sim::NodeId sim_id;
  sim::Rng identity_rng;
  sim::Rng ephemeral_rng;
  mesh::MeshClient client;
  std::pair<std::shared_ptr<BytePort>, std::shared_ptr<BytePort>> pipe;
  mesh::SerialGateway gateway;
  bridge::Bridge bridge;
  p2p::Host host;
  pubsub::FloodSubRouter router;
  std::function<void(const std::string& peer)> on_discovered;
  std::function<void(const bridge::SendHandle&)> on_bridge_send;
};

struct Packet {
  TimePoint sent{};
  std::optional<TimePoint> received;
  std::vector<bridge::SendHandle> handles;
};

class Experiment {
 public:
  explicit Experiment(const ScenarioConfig& cfg) : cfg_(cfg), medium_(sim_, cfg.seed), network_(medium_) {
    for (const auto& spec : cfg_.nodes) {
      auto id = medium_.add_node(spec.name, spec.position);
      ids_[spec.name] = id;
    }
    for (const auto& l : cfg_.links) medium_.set_link(ids_.at(l.a), ids_.at(l.b), l.model);
    for (const auto& spec : cfg_.nodes) {
      nodes_[spec.name] = std::make_unique<Node>(sim_, network_, cfg_, spec, ids_.at(spec.name));
    }
    sender_ = nodes_.at(cfg_.sender).get();
    receiver_ = nodes_.at(cfg_.receiver).get();
    receiver_id_ = receiver_->host.peer_id().str();
    packets_.resize(cfg_.packet_count);
    interval_ = seconds(cfg_.send_interval_s);
  }

  RunReport run() {
    for (auto& [name, node] : nodes_) {
      Node* n = node.get();
      medium_.on_churn(n->sim_id, [this, n](bool online) {
        if (!online) {
          n->leave();
        } else {
          n->announce();
          if (n == receiver_) subscribe_receiver();
        }
      });
    }
    for (const auto& c : cfg_.churn) {
      std::optional<TimePoint> leave, join;
      if (c.leave_s) leave = kEpoch + seconds(*c.leave_s);
      if (c.join_s) join = kEpoch + seconds(*c.join_s);
      medium_.churn(ids_.at(c.node), leave, join);
    }

    subscribe_receiver();
    sender_->on_discovered = [this](const std::string& peer) {
      if (peer == receiver_id_) maybe_connect();
    };
    sender_->host.on_connection_closed([this](const p2p::PeerId& peer, const std::string& stage) {
      if (peer.str() == receiver_id_ && !connecting_) {
        last_failure_ = stage;
        schedule_reconnect(stage);
      }
    });
    sender_->router.on_subscription([this](const std::string& peer, const std::string& topic, bool sub) {
      if (peer == receiver_id_ && topic == cfg_.topic && sub) start_publishing();
    });
    sender_->on_bridge_send = [this](const bridge::SendHandle& h) {
      if (current_) {
        packets_[*current_].handles.push_back(h);
      } else if (deferred_) {
        packets_[*deferred_].handles.push_back(h);
      }
    };
    for (auto& [name, node] : nodes_) node->announce();

    // Connection budget, the publishing window, then time to drain.
    const auto connect_budget = seconds(600);
    const auto drain = seconds(120);
    const auto step = seconds(10);
    auto horizon = kEpoch + connect_budget;
    while (true) {
      sim_.run_until(sim_.now() + step);
      if (!started_) {
        if (sim_.now() >= horizon) break;
        continue;
      }
      auto last = start_ + interval_ * static_cast<std::int64_t>(cfg_.packet_count - 1);
      if (sim_.now() < last) continue;
      bool all = std::all_of(packets_.begin(), packets_.end(), [](const Packet& p) { return p.received.has_value(); });
      if (all || sim_.now() >= last + drain) break;
    }
    if (!started_) {
      throw Error("no connection to the receiver within " + format_ms(to_ms(connect_budget)) + " ms" +
                  (last_failure_.empty() ? std::string() : " (last failure: " + last_failure_ + ")"));
    }
    return report();
  }

 private:
  void subscribe_receiver() {
    receiver_->router.subscribe(cfg_.topic, [this](const pubsub::PubSubMessage& m) {
      if (m.payload.size() < 4) return;
      std::size_t index = 0;
      for (int i = 0; i < 4; ++i) index = (index << 8) | m.payload[static_cast<std::size_t>(i)];
      if (index < packets_.size() && !packets_[index].received) packets_[index].received = sim_.now();
    });
  }

  void maybe_connect() {
    if (connecting_) return;
    auto existing = sender_->host.connection(*p2p::PeerId::parse(receiver_id_));
    if (existing && existing->ready()) return;
    connecting_ = true;
    sender_->host.connect_to_peer(*p2p::PeerId::parse(receiver_id_), [this](std::shared_ptr<p2p::Connection> c) {
      connecting_ = false;
      if (c->ready()) {
        if (!ready_at_) ready_at_ = sim_.now();
        if (!started_) {
          sim_.post_after(interval_, [this] { start_publishing(); });
        }
        return;
      }
      last_failure_ = c->state().failure_stage;
      schedule_reconnect(last_failure_);
    });
  }

  /// A reset means the receiver announced itself again; that announcement
  /// already triggers a fresh dial.
  void schedule_reconnect(const std::string& stage) {
    if (stage == "reset") return;
    sim_.post_after(interval_, [this] {
      if (sender_->host.routing_table().lookup(*p2p::PeerId::parse(receiver_id_))) maybe_connect();
    });
  }

  void start_publishing() {
    if (started_) return;
    started_ = true;
    start_ = sim_.now();
    publish(0);
  }

  void publish(std::size_t i) {
    auto& p = packets_[i];
    p.sent = sim_.now();
    Bytes payload(cfg_.message_size_bytes, 0);
    for (int b = 0; b < 4; ++b) payload[static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(i >> (24 - 8 * b));
    for (std::size_t k = 4; k < payload.size(); ++k) payload[k] = static_cast<std::uint8_t>('a' + (i + k) % 26);

    deferred_.reset();
    current_ = i;
    sender_->router.publish(cfg_.topic, payload);
    current_.reset();
    if (p.handles.empty()) deferred_ = i;

    if (i + 1 < packets_.size()) {
      sim_.post_after(interval_, [this, i] { publish(i + 1); });
    }
  }

  RunReport report() {
    std::vector<PacketRecord> records;
    records.reserve(packets_.size());
    for (std::size_t i = 0; i < packets_.size(); ++i) {
      const auto& p = packets_[i];
      PacketRecord r;
      r.index = i;
      r.sent_ms = to_ms(p.sent - kEpoch);
      if (p.received) {
        r.recv_ms = to_ms(*p.received - kEpoch);
        r.latency_ms = to_ms(*p.received - p.sent);
        r.status = PacketStatus::delivered;
        if (!p.handles.empty() && p.handles.front().first_write() && p.handles.back().last_write()) {
          const auto& first = p.handles.front();
          const auto& last = p.handles.back();
          r.hold_ms = to_ms(first.enqueued_at() - p.sent);
          r.bridge_queue_ms = to_ms(*first.first_write() - first.enqueued_at());
          r.bridge_write_ms = to_ms(*last.last_write() - *first.first_write());
          r.radio_ms = to_ms(*p.received - *last.last_write());
        }
      }
      records.push_back(r);
    }
    auto rep = report_stats(std::move(records));
    rep.seed = cfg_.seed;
    if (ready_at_) rep.ready_ms = to_ms(*ready_at_ - kEpoch);
    if (auto c = sender_->host.connection(*p2p::PeerId::parse(receiver_id_))) rep.keep_alive_probes = c->stats().probes;
    return rep;
  }

  ScenarioConfig cfg_;
  sim::Simulator sim_;
  sim::RadioMedium medium_;
  mesh::MeshNetwork network_;
  std::map<std::string, sim::NodeId> ids_;
  std::map<std::string, std::unique_ptr<Node>> nodes_;
  Node* sender_ = nullptr;
  Node* receiver_ = nullptr;
  std::string receiver_id_;

  Duration interval_{};
  bool connecting_ = false;
  bool started_ = false;
  TimePoint start_{};
  std::optional<TimePoint> ready_at_;
  std::string last_failure_;
  std::vector<Packet> packets_;
  std::optional<std::size_t> current_;
  std::optional<std::size_t> deferred_;
};

}  // namespace

RunReport run_experiment(const ScenarioConfig& config) {
  config.validate();
  Experiment e(config);
  return e.run();
}

}  // namespace oppnet::harness
