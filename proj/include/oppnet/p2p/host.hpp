/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oppnet/event_loop.hpp"
#include "oppnet/mesh_address.hpp"
#include "oppnet/p2p/identity.hpp"
#include "oppnet/p2p/multistream.hpp"
#include "oppnet/p2p/muxer.hpp"
#include "oppnet/p2p/secure_channel.hpp"

namespace oppnet::p2p {

using mesh::MeshAddress;
using namespace std::chrono_literals;

class LookupError : public Error {
 public:
  using Error::Error;
};

/// Peer id to mesh client address, learned from presence broadcasts.
class RoutingTable {
 public:
  struct Entry {
    MeshAddress address;
    TimePoint learned_at{};
  };

  void update(const PeerId& peer, MeshAddress address, TimePoint now);
  std::optional<Entry> lookup(const PeerId& peer) const;
  std::optional<PeerId> peer_at(MeshAddress address) const;
  void remove(const PeerId& peer) { entries_.erase(peer); }
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  const std::map<PeerId, Entry>& entries() const { return entries_; }

 private:
  std::map<PeerId, Entry> entries_;
};

/// First byte of every host message carried by the Bridge.
namespace envelope {
inline constexpr std::uint8_t hello = 0x01;
inline constexpr std::uint8_t hello_ack = 0x02;
inline constexpr std::uint8_t plain = 0x03;
inline constexpr std::uint8_t sealed = 0x04;
}  // namespace envelope

/// Phases only move forward, in declaration order; failed is terminal.
enum class Phase { idle, peer_exchanged, multistream_agreed, secured, muxed, ready, failed };

std::string_view to_string(Phase phase);

struct ConnectionState {
  Phase phase = Phase::idle;
  std::string selected_security;
  std::string selected_muxer;
  /// Present from Secured onwards.
  std::optional<SymmetricKey> session_key;
  /// Stage that failed: connect, multistream, security, handshake, muxer,
  /// pubsub, auth, keepalive, transport or reset.
  std::string failure_stage;
};

struct HostConfig {
  std::vector<std::string> security_proposals{std::string(protocol::tls), std::string(protocol::noise)};
  std::vector<std::string> security_supported{std::string(protocol::noise)};
  std::vector<std::string> muxers{std::string(protocol::yamux)};
  std::string pubsub_protocol{protocol::floodsub};

  /// HELLO is resent this often while unanswered, connect_attempts times.
  Duration hello_timeout = 30s;
  unsigned connect_attempts = 3;
  /// Deadline for each upgrade stage after the peer exchange.
  Duration stage_timeout = 60s;
  /// Liveness probe period for dialed connections; zero disables. The first
  /// probe is due keep_alive after the first application write.
  Duration keep_alive = 540s;
  Duration probe_timeout = 30s;
  /// Largest stream payload per muxer frame; longer writes are split.
  std::size_t max_frame_payload = 1900;
};

class Connection;

/// Ordered byte stream multiplexed over a connection. Protocol negotiation
/// for the stream runs before any data is delivered.
class Stream {
 public:
  std::uint64_t id() const { return id_; }
  const std::string& protocol() const { return protocol_; }
  bool ready() const { return ready_; }
  bool closed() const { return closed_; }
  bool failed() const { return failed_; }

  /// Throws Error unless the stream is ready and open.
  void write(ByteView data);
  void close();

  void on_data(std::function<void(ByteView)> fn) { on_data_ = std::move(fn); }
  /// Called when frames were lost; data resumes at the start of a later write.
  void on_gap(std::function<void()> fn) { on_gap_ = std::move(fn); }
  void on_ready(std::function<void(bool ok)> fn) { on_ready_ = std::move(fn); }

  Stream(std::weak_ptr<Connection> conn, std::uint64_t id, MultistreamSelect negotiation, bool outbound);

 private:
  friend class Connection;

  std::weak_ptr<Connection> conn_;
  std::uint64_t id_;
  MultistreamSelect negotiation_;
  bool outbound_;
  std::string protocol_;
  bool ready_ = false;
  bool closed_ = false;
  bool failed_ = false;
  bool awaiting_boundary_ = false;
  std::function<void(ByteView)> on_data_;
  std::function<void()> on_gap_;
  std::function<void(bool)> on_ready_;
};

/// One peer connection: peer-id exchange, security negotiation, handshake,
/// muxer negotiation over the sealed channel, then the pub/sub stream.
class Connection : public std::enable_shared_from_this<Connection> {
 public:
  using Sender = std::function<void(Bytes message)>;

  struct Callbacks {
    std::function<void(Connection&)> on_ready;
    std::function<void(Connection&)> on_failed;
    std::function<void(Connection&, std::shared_ptr<Stream>)> on_inbound_stream;
  };

  Connection(EventLoop& loop, Role role, KeyPair local_static, PeerId local_id, PeerId remote_id,
             MeshAddress remote_address, const HostConfig& config, Sender sender, KeyPair ephemeral,
             Callbacks callbacks, std::vector<std::string> inbound_protocols);

  /// Initiator: sends HELLO. Responder: answers HELLO and sends the
  /// multistream header without waiting.
  void start();
  void receive(std::uint8_t tag, ByteView body);

  /// Throws Error unless the muxer is negotiated.
  std::shared_ptr<Stream> open_stream(const std::string& protocol_id);

  void fail(const std::string& stage);

  Role role() const { return role_; }
  const ConnectionState& state() const { return state_; }
  bool ready() const { return state_.phase == Phase::ready; }
  const PeerId& remote() const { return remote_id_; }
  MeshAddress remote_address() const { return remote_address_; }
  std::shared_ptr<Stream> pubsub_stream() const { return pubsub_stream_; }

  struct Stats {
    std::uint64_t records_sent = 0;
    std::uint64_t records_received = 0;
    std::uint64_t records_lost = 0;
    std::uint64_t probes = 0;
    std::optional<TimePoint> last_probe_sent;
    std::optional<TimePoint> last_probe_answered;
  };
  const Stats& stats() const { return stats_; }

 private:
  friend class Stream;

  void send_envelope(std::uint8_t tag, ByteView body);
  void send_plain(const std::vector<Bytes>& messages);
  void send_sealed(ByteView plaintext, bool bypass_hold = false);
  void send_frame(const MuxFrame& frame, bool bypass_hold = false);
  void stream_write(Stream& s, ByteView data);

  void on_plain(ByteView body);
  void on_handshake(ByteView body);
  void on_sealed(ByteView body);
  void on_frame(MuxFrame frame);
  void on_stream_negotiation(Stream& s, ByteView bytes);
  void enter_secured(const SessionKeys& keys);
  void advance(Phase phase);
  void arm_stage(const std::string& stage, Duration timeout);
  void send_hello();
  void arm_keep_alive(TimePoint at);
  void probe();
  bool is_remote_stream(std::uint64_t id) const;

  EventLoop& loop_;
  Role role_;
  KeyPair static_;
  KeyPair ephemeral_;
  PeerId local_id_;
  PeerId remote_id_;
  MeshAddress remote_address_;
  HostConfig config_;
  Sender sender_;
  Callbacks callbacks_;
  std::vector<std::string> inbound_protocols_;

  ConnectionState state_;
  std::string stage_;
  std::uint64_t stage_token_ = 0;
  unsigned hello_attempts_ = 0;

  std::optional<MultistreamSelect> negotiation_;
  bool handshaking_ = false;
  std::optional<HandshakeInitiator> initiator_;
  std::optional<SecureChannel> channel_;
  std::uint64_t last_counter_ = 0;

  std::map<std::uint64_t, std::shared_ptr<Stream>> streams_;
  std::uint64_t next_stream_id_;
  std::shared_ptr<Stream> pubsub_stream_;

  bool holding_ = false;
  bool keep_alive_armed_ = false;
  std::uint64_t probe_token_ = 0;
  std::deque<Bytes> held_;
  Stats stats_;
};

/// The libp2p-style host of one node.
class Host {
 public:
  using Transport = std::function<void(MeshAddress dst, Bytes message)>;
  using ConnectCallback = std::function<void(std::shared_ptr<Connection>)>;
  using StreamHandler = std::function<void(std::shared_ptr<Connection>, std::shared_ptr<Stream>)>;

  Host(EventLoop& loop, KeyPair identity, HostConfig config, Transport transport);

  const PeerId& peer_id() const { return peer_id_; }
  const KeyPair& identity() const { return identity_; }
  RoutingTable& routing_table() { return routing_; }
  const RoutingTable& routing_table() const { return routing_; }
  const HostConfig& config() const { return config_; }

  /// Source of handshake ephemerals; defaults to the OS CSPRNG.
  void set_ephemeral_source(std::function<KeyPair()> source) { ephemeral_source_ = std::move(source); }

  /// Records a presence announcement. An unsolicited announcement from a
  /// peer we hold a connection to means that peer restarted, so the stale
  /// connection is dropped. Returns true when a presence reply is due.
  bool handle_presence(MeshAddress from, std::string_view peer_id, bool is_reply);

  /// A message delivered by the Bridge.
  void handle_message(MeshAddress from, ByteView message);

  /// Dials a peer learned through presence. The callback receives the
  /// connection once it is ready or failed. Throws LookupError when the peer
  /// is not in the routing table.
  void connect_to_peer(const PeerId& peer, ConnectCallback done);

  std::shared_ptr<Connection> connection(const PeerId& peer) const;
  std::vector<std::shared_ptr<Connection>> connections() const;

  /// Listeners accumulate; each fires for every connection.
  void on_connection_ready(std::function<void(std::shared_ptr<Connection>)> fn) { on_ready_.push_back(std::move(fn)); }
  void on_connection_closed(std::function<void(const PeerId&, const std::string& stage)> fn) {
    on_closed_.push_back(std::move(fn));
  }

  /// Runs `task` on the host's event loop. Safe from any thread when the
  /// loop's post_at is.
  void submit(Task task) { loop_.post(std::move(task)); }
  void set_stream_handler(const std::string& protocol_id, StreamHandler handler);

  /// Drops every connection and the routing table.
  void reset();

 private:
  std::shared_ptr<Connection> make_connection(Role role, const PeerId& remote, MeshAddress address);
  void remove_connection(const PeerId& peer, const std::shared_ptr<Connection>& conn);
  std::vector<std::string> inbound_protocols() const;

  EventLoop& loop_;
  KeyPair identity_;
  PeerId peer_id_;
  HostConfig config_;
  Transport transport_;
  std::function<KeyPair()> ephemeral_source_;
  RoutingTable routing_;
  std::map<PeerId, std::shared_ptr<Connection>> connections_;
  std::map<MeshAddress, PeerId> by_address_;
  std::map<PeerId, std::vector<ConnectCallback>> pending_;
  std::map<std::string, StreamHandler> stream_handlers_;
  std::vector<std::function<void(std::shared_ptr<Connection>)>> on_ready_;
  std::vector<std::function<void(const PeerId&, const std::string&)>> on_closed_;
  std::shared_ptr<int> alive_ = std::make_shared<int>(0);
};

}  // namespace oppnet::p2p
