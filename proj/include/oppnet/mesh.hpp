/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

#include "oppnet/byte_port.hpp"
#include "oppnet/frame.hpp"
#include "oppnet/mesh_address.hpp"
#include "oppnet/sim.hpp"

namespace oppnet::mesh {

/// Network-transmit and segmentation/reassembly (SAR) parameters.
struct MeshConfig {
  /// Extra network transmissions per message.
  unsigned t_count = 2;
  /// Step of the interval between those extra transmissions, in ms.
  unsigned t_int_ms = 20;
  unsigned tx_seg_int_step = 5;
  unsigned rx_seg_int_step = 5;
  /// Payload bytes per lower-transport segment.
  std::size_t seg_payload = 12;
  /// Largest payload sent without segmentation.
  std::size_t unsegmented_max = 11;
  std::size_t max_segments = 32;
  /// Segment retransmissions after the first attempt.
  unsigned retries_unicast = 1;
  unsigned retries_multicast = 2;
  /// Relay received traffic not addressed to this node (one extra hop per
  /// relay, bounded by ttl).
  bool relay = false;
  unsigned ttl = 1;

  std::size_t max_payload() const { return seg_payload * max_segments; }
  void validate() const;
};

/// Average time to transmit `n_segments` segments, each with t_count extra
/// network transmissions spaced t_int + 10 ms apart:
///   (10 + (t_int + 10) * t_count) * n
/// Throws std::invalid_argument when n_segments is 0.
Duration avg_tx_time(const MeshConfig& cfg, std::size_t n_segments);

/// Gap between two consecutive segments for a SAR step value: (step + 1) * 10 ms.
Duration seg_interval(unsigned step);

/// Accumulated inter-segment gap for `n_segments` on the transmit side.
Duration inter_segment_time(const MeshConfig& cfg, std::size_t n_segments);

/// Start-to-start spacing of segment transmissions: the transmit gap plus the
/// time taken by the t_count extra network transmissions.
Duration segment_slot(const MeshConfig& cfg);

inline std::size_t segment_count(const MeshConfig& cfg, std::size_t payload_len) {
  return payload_len <= cfg.unsegmented_max ? 1 : (payload_len + cfg.seg_payload - 1) / cfg.seg_payload;
}

enum class Opcode : std::uint8_t { data = 0x01, presence = 0x02, presence_reply = 0x03 };

enum class Completion { acked, unacknowledged, failed };

struct SendResult {
  Completion status = Completion::failed;
  TimePoint started{};
  TimePoint finished{};
  std::size_t segments = 0;
  std::size_t transmissions = 0;
};

struct Received {
  MeshAddress src;
  MeshAddress dst;
  Opcode opcode = Opcode::data;
  Bytes payload;
  TimePoint at{};
};

class MeshClient;

/// Address registry for the clients sharing one network key.
class MeshNetwork {
 public:
  explicit MeshNetwork(sim::RadioMedium& medium) : medium_(medium) {}

  sim::RadioMedium& medium() { return medium_; }

  /// Throws std::invalid_argument when the address is taken.
  void register_client(MeshAddress unicast, MeshClient& client);
  void unregister_client(MeshAddress unicast);
  MeshClient* find(MeshAddress unicast) const;

 private:
  sim::RadioMedium& medium_;
  std::map<MeshAddress, MeshClient*> clients_;
};

/// Simulated Bluetooth Mesh client attached to one radio node. Outgoing
/// messages are sent one at a time, FIFO. Segmented unicast messages use
/// per-segment ACKs delayed by the receive segment interval; unacked
/// segments are retransmitted up to retries_unicast times. Segmented group
/// messages are unacknowledged and repeated retries_multicast extra times.
class MeshClient {
 public:
  using SendCallback = std::function<void(const SendResult&)>;

  MeshClient(MeshNetwork& network, sim::NodeId node, MeshConfig config = {});
  ~MeshClient();

  MeshClient(const MeshClient&) = delete;
  MeshClient& operator=(const MeshClient&) = delete;

  /// Throws std::invalid_argument on an address collision or a non-unicast
  /// address.
  void provision(MeshAddress unicast, std::set<MeshAddress> groups);
  bool provisioned() const { return unicast_.is_unicast(); }

  /// Queues a message. Throws SizeError for empty payloads or payloads over
  /// seg_payload * max_segments bytes.
  void send(MeshAddress dst, ByteView payload, SendCallback done = {}, Opcode opcode = Opcode::data);

  /// Announces `peer_id` to every group this client subscribes to.
  void broadcast_presence(std::string_view peer_id);

  void on_receive(std::function<void(const Received&)> fn) { on_receive_ = std::move(fn); }

  /// Drops queued and in-flight messages (their callbacks report failed)
  /// and receive-side reassembly state.
  void reset();

  MeshAddress address() const { return unicast_; }
  const std::set<MeshAddress>& groups() const { return groups_; }
  const MeshConfig& config() const { return config_; }
  sim::NodeId node() const { return node_; }
  std::size_t queued() const { return queue_.size() + (active_ ? 1 : 0); }

  bool accepts(MeshAddress dst) const { return dst == unicast_ || groups_.contains(dst); }

 private:
  struct Outgoing {
    MeshAddress dst;
    Opcode opcode;
    Bytes payload;
    SendCallback done;
  };

  struct Session {
    std::uint32_t id = 0;
    Outgoing msg;
    std::vector<Bytes> segments;
    std::vector<bool> acked;
    std::vector<unsigned> attempts;
    std::size_t acked_count = 0;
    std::deque<std::uint16_t> tx_queue;
    unsigned retries = 0;
    bool expects_acks = false;
    TimePoint started{};
    std::size_t transmissions = 0;
  };

  struct RxSession {
    std::vector<std::optional<Bytes>> parts;
    std::size_t have = 0;
    bool delivered = false;
    TimePoint last_seen{};
    Opcode opcode = Opcode::data;
  };

  void start_next();
  void slot();
  void finish(Completion status);
  void on_ack_timeout(std::uint32_t session, std::uint16_t index, unsigned attempt);
  void on_frame(sim::NodeId from, ByteView frame);
  void send_ack(MeshAddress to, std::uint32_t session, std::uint16_t index);
  void transmit_pdu(const Bytes& pdu);
  Duration ack_timeout() const;
  void purge_rx(TimePoint now);

  MeshNetwork& network_;
  sim::RadioMedium& medium_;
  sim::Simulator& sim_;
  sim::NodeId node_;
  MeshConfig config_;
  MeshAddress unicast_;
  std::set<MeshAddress> groups_;

  std::deque<Outgoing> queue_;
  std::optional<Session> active_;
  std::uint32_t next_session_ = 1;
  std::uint32_t next_seq_ = 0;
  std::optional<TimePoint> last_slot_;
  bool slot_scheduled_ = false;
  std::uint64_t generation_ = 0;

  std::map<std::pair<MeshAddress, std::uint32_t>, RxSession> rx_;
  std::map<std::pair<MeshAddress, std::uint32_t>, TimePoint> seen_pdus_;
  std::function<void(const Received&)> on_receive_;
  std::shared_ptr<int> alive_ = std::make_shared<int>(0);
};

/// Firmware-side adapter between a serial byte port and a mesh client: each
/// frame read from the port is sent as one mesh message to the frame's
/// destination; each received data message is written back to the port with
/// its address field rewritten to the sender's address.
class SerialGateway {
 public:
  SerialGateway(MeshClient& client, std::shared_ptr<BytePort> port);
  ~SerialGateway();

  SerialGateway(const SerialGateway&) = delete;
  SerialGateway& operator=(const SerialGateway&) = delete;

  /// Feeds a message received by the client; data messages go to the port.
  void handle(const Received& message);
  void reset();

  struct Stats {
    std::uint64_t frames_out = 0;
    std::uint64_t frames_in = 0;
    std::uint64_t send_failures = 0;
    std::uint64_t parse_errors = 0;
  };
  const Stats& stats() const { return stats_; }

 private:
  void on_serial(ByteView bytes);

  MeshClient& client_;
  std::shared_ptr<BytePort> port_;
  frame::StreamParser parser_;
  Stats stats_;
  std::shared_ptr<int> alive_ = std::make_shared<int>(0);
};

}  // namespace oppnet::mesh
