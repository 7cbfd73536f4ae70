/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "oppnet/p2p/host.hpp"

#include <algorithm>

namespace oppnet::p2p {

namespace {

Bytes concat(const std::vector<Bytes>& parts) {
  Bytes out;
  for (const auto& p : parts) append(out, p);
  return out;
}

PublicKey key_at(ByteView b, std::size_t at) {
  PublicKey k{};
  std::copy_n(b.begin() + static_cast<std::ptrdiff_t>(at), k.size(), k.begin());
  return k;
}

}  // namespace

// ---- RoutingTable ----

void RoutingTable::update(const PeerId& peer, MeshAddress address, TimePoint now) {
  entries_.insert_or_assign(peer, Entry{address, now});
}

std::optional<RoutingTable::Entry> RoutingTable::lookup(const PeerId& peer) const {
  auto it = entries_.find(peer);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<PeerId> RoutingTable::peer_at(MeshAddress address) const {
  for (const auto& [peer, e] : entries_) {
    if (e.address == address) return peer;
  }
  return std::nullopt;
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::idle: return "idle";
    case Phase::peer_exchanged: return "peer_exchanged";
    case Phase::multistream_agreed: return "multistream_agreed";
    case Phase::secured: return "secured";
    case Phase::muxed: return "muxed";
    case Phase::ready: return "ready";
    case Phase::failed: return "failed";
  }
  return "unknown";
}

// ---- Stream ----

Stream::Stream(std::weak_ptr<Connection> conn, std::uint64_t id, MultistreamSelect negotiation, bool outbound)
    : conn_(std::move(conn)), id_(id), negotiation_(std::move(negotiation)), outbound_(outbound) {}

void Stream::write(ByteView data) {
  if (!ready_ || closed_ || failed_) throw Error("stream " + std::to_string(id_) + " is not writable");
  auto c = conn_.lock();
  if (!c || c->state().phase == Phase::failed) throw Error("connection is closed");
  c->stream_write(*this, data);
}

void Stream::close() {
  if (closed_) return;
  closed_ = true;
  auto c = conn_.lock();
  if (c && c->state().phase != Phase::failed) c->send_frame({id_, mux_flag::fin, {}});
}

// ---- Connection ----

Connection::Connection(EventLoop& loop, Role role, KeyPair local_static, PeerId local_id, PeerId remote_id,
                       MeshAddress remote_address, const HostConfig& config, Sender sender, KeyPair ephemeral,
                       Callbacks callbacks, std::vector<std::string> inbound_protocols)
    : loop_(loop),
      role_(role),
      static_(local_static),
      ephemeral_(ephemeral),
      local_id_(std::move(local_id)),
      remote_id_(std::move(remote_id)),
      remote_address_(remote_address),
      config_(config),
      sender_(std::move(sender)),
      callbacks_(std::move(callbacks)),
      inbound_protocols_(std::move(inbound_protocols)),
      next_stream_id_(role == Role::initiator ? 1 : 2) {}

void Connection::start() {
  if (role_ == Role::initiator) {
    send_hello();
    return;
  }
  send_envelope(envelope::hello_ack, to_bytes(local_id_.str()));
  advance(Phase::peer_exchanged);
  negotiation_ = MultistreamSelect::responder(config_.security_supported);
  arm_stage("multistream", config_.stage_timeout);
  send_plain(negotiation_->start());
}

void Connection::send_hello() {
  if (state_.phase != Phase::idle) return;
  if (hello_attempts_ == config_.connect_attempts) {
    fail("connect");
    return;
  }
  ++hello_attempts_;
  stage_ = "connect";
  auto token = ++stage_token_;
  send_envelope(envelope::hello, to_bytes(local_id_.str()));
  loop_.post_after(config_.hello_timeout, [w = weak_from_this(), token] {
    auto self = w.lock();
    if (self && self->stage_token_ == token) self->send_hello();
  });
}

void Connection::arm_stage(const std::string& stage, Duration timeout) {
  stage_ = stage;
  auto token = ++stage_token_;
  loop_.post_after(timeout, [w = weak_from_this(), token] {
    auto self = w.lock();
    if (!self || self->stage_token_ != token) return;
    if (self->state_.phase == Phase::ready || self->state_.phase == Phase::failed) return;
    self->fail(self->stage_);
  });
}

void Connection::advance(Phase phase) {
  if (state_.phase == Phase::failed) return;
  if (static_cast<int>(phase) > static_cast<int>(state_.phase)) state_.phase = phase;
}

void Connection::fail(const std::string& stage) {
  if (state_.phase == Phase::failed) return;
  auto self = shared_from_this();
  state_.failure_stage = stage;
  state_.phase = Phase::failed;
  ++stage_token_;
  ++probe_token_;
  holding_ = false;
  held_.clear();
  for (auto& [id, s] : streams_) s->failed_ = true;
  if (callbacks_.on_failed) callbacks_.on_failed(*this);
}

void Connection::send_envelope(std::uint8_t tag, ByteView body) {
  Bytes m;
  m.reserve(body.size() + 1);
  m.push_back(tag);
  append(m, body);
  try {
    sender_(std::move(m));
  } catch (const Error&) {
    fail("transport");
  }
}

void Connection::send_plain(const std::vector<Bytes>& messages) {
  if (messages.empty()) return;
  send_envelope(envelope::plain, concat(messages));
}

void Connection::send_sealed(ByteView plaintext, bool bypass_hold) {
  if (!channel_ || state_.phase == Phase::failed) return;
  if (holding_ && !bypass_hold) {
    // Sealed at release time so record counters stay in send order.
    held_.emplace_back(plaintext.begin(), plaintext.end());
    return;
  }
  auto record = channel_->seal(plaintext);
  ++stats_.records_sent;
  send_envelope(envelope::sealed, record);
}

void Connection::send_frame(const MuxFrame& frame, bool bypass_hold) { send_sealed(encode(frame), bypass_hold); }

void Connection::stream_write(Stream& s, ByteView data) {
  if (data.empty()) return;
  if (role_ == Role::initiator && config_.keep_alive > Duration::zero() && !keep_alive_armed_ &&
      state_.phase == Phase::ready) {
    keep_alive_armed_ = true;
    arm_keep_alive(loop_.now() + config_.keep_alive);
  }
  const auto chunk = std::max<std::size_t>(1, config_.max_frame_payload);
  for (std::size_t off = 0; off < data.size(); off += chunk) {
    auto n = std::min(chunk, data.size() - off);
    std::uint8_t flags = mux_flag::data;
    if (off == 0) flags |= mux_flag::start;
    auto part = data.subspan(off, n);
    send_frame({s.id(), flags, Bytes(part.begin(), part.end())});
  }
}

void Connection::receive(std::uint8_t tag, ByteView body) {
  if (state_.phase == Phase::failed) return;
  auto self = shared_from_this();
  switch (tag) {
    case envelope::hello_ack: {
      if (role_ != Role::initiator || state_.phase != Phase::idle) return;
      auto id = PeerId::parse(oppnet::to_string(body));
      if (!id || *id != remote_id_) {
        fail("connect");
        return;
      }
      advance(Phase::peer_exchanged);
      negotiation_ = MultistreamSelect::initiator(config_.security_proposals);
      arm_stage("multistream", config_.stage_timeout);
      send_plain(negotiation_->start());
      return;
    }
    case envelope::plain:
      on_plain(body);
      return;
    case envelope::sealed:
      on_sealed(body);
      return;
    default:
      return;
  }
}

void Connection::on_plain(ByteView body) {
  if (handshaking_) {
    on_handshake(body);
    return;
  }
  if (!negotiation_ || (state_.phase != Phase::peer_exchanged && state_.phase != Phase::multistream_agreed)) return;

  auto out = negotiation_->on_bytes(body);
  if (negotiation_->header_agreed() && state_.phase == Phase::peer_exchanged) {
    advance(Phase::multistream_agreed);
    arm_stage("security", config_.stage_timeout);
  }
  send_plain(out);
  if (state_.phase == Phase::failed) return;

  switch (negotiation_->status()) {
    case NegotiationStatus::in_progress:
      return;
    case NegotiationStatus::header_mismatch:
      fail("multistream");
      return;
    case NegotiationStatus::no_common_protocol:
    case NegotiationStatus::protocol_error:
      fail("security");
      return;
    case NegotiationStatus::agreed:
      break;
  }
  state_.selected_security = *negotiation_->selected();
  if (state_.selected_security != protocol::noise) {
    fail("security");
    return;
  }
  auto rest = negotiation_->take_remaining();
  negotiation_.reset();
  handshaking_ = true;
  arm_stage("handshake", config_.stage_timeout);
  if (role_ == Role::initiator) {
    initiator_.emplace(static_, ephemeral_);
    send_envelope(envelope::plain, initiator_->write_message1());
  }
  if (!rest.empty()) on_handshake(rest);
}

void Connection::on_handshake(ByteView body) {
  handshaking_ = false;
  if (role_ == Role::initiator) {
    SessionKeys keys;
    try {
      keys = initiator_->read_message2(body);
    } catch (const HandshakeError&) {
      fail("handshake");
      return;
    }
    initiator_.reset();
    if (PeerId::from_public_key(keys.remote_static) != remote_id_) {
      fail("handshake");
      return;
    }
    enter_secured(keys);
    return;
  }

  HandshakeResponder responder(static_, ephemeral_);
  Bytes message2;
  try {
    responder.read_message1(body);
    if (PeerId::from_public_key(key_at(body, 32)) != remote_id_) throw HandshakeError("static key does not match");
    message2 = responder.write_message2();
  } catch (const HandshakeError&) {
    fail("handshake");
    return;
  }
  send_envelope(envelope::plain, message2);
  if (state_.phase == Phase::failed) return;
  enter_secured(responder.keys());
}

void Connection::enter_secured(const SessionKeys& keys) {
  channel_.emplace(keys);
  state_.session_key = keys.secret;
  advance(Phase::secured);
  arm_stage("muxer", config_.stage_timeout);
  negotiation_ = role_ == Role::initiator ? MultistreamSelect::initiator(config_.muxers)
                                          : MultistreamSelect::responder(config_.muxers);
  send_sealed(concat(negotiation_->start()));
}

void Connection::on_sealed(ByteView body) {
  if (!channel_) return;
  Bytes plaintext;
  try {
    plaintext = channel_->open(body);
  } catch (const AuthenticationError&) {
    fail("auth");
    return;
  }
  ++stats_.records_received;
  std::uint64_t counter = 0;
  for (std::size_t i = 0; i < 8; ++i) counter = (counter << 8) | body[i];
  if (counter > last_counter_ + 1) {
    stats_.records_lost += counter - last_counter_ - 1;
    for (auto& [id, s] : streams_) {
      s->awaiting_boundary_ = true;
      if (s->ready_ && s->on_gap_) s->on_gap_();
    }
  }
  last_counter_ = counter;

  if (state_.phase == Phase::secured && negotiation_) {
    auto out = negotiation_->on_bytes(plaintext);
    if (!out.empty()) send_sealed(concat(out));
    if (!negotiation_->finished()) return;
    if (negotiation_->status() != NegotiationStatus::agreed) {
      fail("muxer");
      return;
    }
    state_.selected_muxer = *negotiation_->selected();
    auto rest = negotiation_->take_remaining();
    negotiation_.reset();
    advance(Phase::muxed);
    arm_stage("pubsub", config_.stage_timeout);
    if (role_ == Role::initiator) {
      pubsub_stream_ = open_stream(config_.pubsub_protocol);
    }
    if (rest.empty()) return;
    plaintext = std::move(rest);
  }

  if (state_.phase != Phase::muxed && state_.phase != Phase::ready) return;
  auto frame = decode_mux_frame(plaintext);
  if (!frame) {
    fail("muxer");
    return;
  }
  on_frame(std::move(*frame));
}

bool Connection::is_remote_stream(std::uint64_t id) const {
  // Dialer streams are odd, listener streams even.
  bool odd = (id & 1) != 0;
  return role_ == Role::initiator ? !odd : odd;
}

void Connection::on_frame(MuxFrame frame) {
  if (frame.stream_id == 0) {
    if (frame.flags & mux_flag::ping) {
      send_frame({0, mux_flag::pong, frame.payload}, true);
    } else if ((frame.flags & mux_flag::pong) && holding_) {
      ++probe_token_;
      holding_ = false;
      stats_.last_probe_answered = loop_.now();
      auto held = std::exchange(held_, {});
      for (auto& pt : held) send_sealed(pt);
      auto next = *stats_.last_probe_sent + config_.keep_alive;
      arm_keep_alive(std::max(next, loop_.now()));
    }
    return;
  }

  auto it = streams_.find(frame.stream_id);
  if (frame.flags & mux_flag::syn) {
    if (it != streams_.end() || !is_remote_stream(frame.stream_id)) return;
    auto s = std::make_shared<Stream>(weak_from_this(), frame.stream_id,
                                      MultistreamSelect::responder(inbound_protocols_), false);
    streams_.emplace(frame.stream_id, s);
    send_frame({s->id_, mux_flag::data, concat(s->negotiation_.start())});
    on_stream_negotiation(*s, frame.payload);
    return;
  }
  if (it == streams_.end()) return;
  auto s = it->second;
  if (frame.flags & mux_flag::data) {
    if (!s->ready_) {
      on_stream_negotiation(*s, frame.payload);
    } else if (!s->closed_ || !s->outbound_) {
      if (s->awaiting_boundary_) {
        if (!(frame.flags & mux_flag::start)) return;
        s->awaiting_boundary_ = false;
      }
      if (s->on_data_) s->on_data_(frame.payload);
    }
  }
  if (frame.flags & mux_flag::fin) s->closed_ = true;
}

void Connection::on_stream_negotiation(Stream& s, ByteView bytes) {
  auto out = s.negotiation_.on_bytes(bytes);
  if (!out.empty()) send_frame({s.id_, mux_flag::data, concat(out)});
  if (!s.negotiation_.finished() || state_.phase == Phase::failed) return;

  auto stream = streams_.at(s.id_);
  if (s.negotiation_.status() != NegotiationStatus::agreed) {
    s.failed_ = true;
    if (s.on_ready_) s.on_ready_(false);
    if (stream == pubsub_stream_) fail("pubsub");
    return;
  }
  s.protocol_ = *s.negotiation_.selected();
  s.ready_ = true;
  // Negotiation bytes and data never share a frame, so nothing is left over.
  s.negotiation_.take_remaining();

  if (!s.outbound_ && !pubsub_stream_ && s.protocol_ == config_.pubsub_protocol) pubsub_stream_ = stream;
  if (s.outbound_) {
    if (s.on_ready_) s.on_ready_(true);
  } else if (stream != pubsub_stream_ && callbacks_.on_inbound_stream) {
    callbacks_.on_inbound_stream(*this, stream);
  }
  if (stream == pubsub_stream_ && state_.phase == Phase::muxed) {
    advance(Phase::ready);
    ++stage_token_;
    if (callbacks_.on_ready) callbacks_.on_ready(*this);
  }
}

std::shared_ptr<Stream> Connection::open_stream(const std::string& protocol_id) {
  if (state_.phase != Phase::muxed && state_.phase != Phase::ready) throw Error("connection is not multiplexed");
  auto id = next_stream_id_;
  next_stream_id_ += 2;
  auto s = std::make_shared<Stream>(weak_from_this(), id, MultistreamSelect::initiator({protocol_id}), true);
  streams_.emplace(id, s);
  send_frame({id, mux_flag::syn, concat(s->negotiation_.start())});
  return s;
}

void Connection::arm_keep_alive(TimePoint at) {
  loop_.post_at(at, [w = weak_from_this()] {
    if (auto self = w.lock()) self->probe();
  });
}

void Connection::probe() {
  if (state_.phase != Phase::ready || holding_) return;
  ++stats_.probes;
  stats_.last_probe_sent = loop_.now();
  send_frame({0, mux_flag::ping, {}}, true);
  holding_ = true;
  auto token = ++probe_token_;
  loop_.post_after(config_.probe_timeout, [w = weak_from_this(), token] {
    auto self = w.lock();
    if (self && self->probe_token_ == token && self->holding_) self->fail("keepalive");
  });
}

// ---- Host ----

Host::Host(EventLoop& loop, KeyPair identity, HostConfig config, Transport transport)
    : loop_(loop),
      identity_(identity),
      peer_id_(PeerId::from_public_key(identity.public_key)),
      config_(std::move(config)),
      transport_(std::move(transport)),
      ephemeral_source_([] { return KeyPair::generate(); }) {}

std::vector<std::string> Host::inbound_protocols() const {
  std::vector<std::string> out{config_.pubsub_protocol};
  for (const auto& [id, h] : stream_handlers_) {
    if (id != config_.pubsub_protocol) out.push_back(id);
  }
  return out;
}

void Host::set_stream_handler(const std::string& protocol_id, StreamHandler handler) {
  stream_handlers_[protocol_id] = std::move(handler);
}

std::shared_ptr<Connection> Host::connection(const PeerId& peer) const {
  auto it = connections_.find(peer);
  return it == connections_.end() ? nullptr : it->second;
}

std::vector<std::shared_ptr<Connection>> Host::connections() const {
  std::vector<std::shared_ptr<Connection>> out;
  for (const auto& [p, c] : connections_) out.push_back(c);
  return out;
}

std::shared_ptr<Connection> Host::make_connection(Role role, const PeerId& remote, MeshAddress address) {
  std::weak_ptr<int> alive = alive_;
  Connection::Callbacks cb;
  cb.on_ready = [this, alive](Connection& c) {
    if (alive.expired()) return;
    auto sp = c.shared_from_this();
    for (auto& fn : on_ready_) fn(sp);
    auto it = pending_.find(c.remote());
    if (it == pending_.end()) return;
    auto waiting = std::move(it->second);
    pending_.erase(it);
    for (auto& fn : waiting) fn(sp);
  };
  cb.on_failed = [this, alive](Connection& c) {
    if (alive.expired()) return;
    auto sp = c.shared_from_this();
    auto peer = c.remote();
    remove_connection(peer, sp);
    if (auto it = pending_.find(peer); it != pending_.end()) {
      auto waiting = std::move(it->second);
      pending_.erase(it);
      for (auto& fn : waiting) fn(sp);
    }
    for (auto& fn : on_closed_) fn(peer, c.state().failure_stage);
  };
  cb.on_inbound_stream = [this, alive](Connection& c, std::shared_ptr<Stream> s) {
    if (alive.expired()) return;
    auto it = stream_handlers_.find(s->protocol());
    if (it != stream_handlers_.end()) it->second(c.shared_from_this(), std::move(s));
  };
  auto sender = [this, alive, address](Bytes m) {
    if (!alive.expired()) transport_(address, std::move(m));
  };
  auto conn = std::make_shared<Connection>(loop_, role, identity_, peer_id_, remote, address, config_,
                                           std::move(sender), ephemeral_source_(), std::move(cb),
                                           inbound_protocols());
  connections_.insert_or_assign(remote, conn);
  by_address_.insert_or_assign(address, remote);
  return conn;
}

void Host::remove_connection(const PeerId& peer, const std::shared_ptr<Connection>& conn) {
  auto it = connections_.find(peer);
  if (it == connections_.end() || it->second != conn) return;
  connections_.erase(it);
  auto a = by_address_.find(conn->remote_address());
  if (a != by_address_.end() && a->second == peer) by_address_.erase(a);
}

bool Host::handle_presence(MeshAddress from, std::string_view peer_id, bool is_reply) {
  auto peer = PeerId::parse(peer_id);
  if (!peer || *peer == peer_id_) return false;
  if (!is_reply) {
    if (auto c = connection(*peer)) c->fail("reset");
  }
  routing_.update(*peer, from, loop_.now());
  return !is_reply;
}

void Host::handle_message(MeshAddress from, ByteView message) {
  if (message.empty()) return;
  auto tag = message[0];
  auto body = message.subspan(1);

  if (tag == envelope::hello) {
    auto peer = PeerId::parse(oppnet::to_string(body));
    if (!peer || *peer == peer_id_) return;
    routing_.update(*peer, from, loop_.now());
    if (auto existing = connection(*peer)) {
      if (existing->role() == Role::initiator && existing->state().phase == Phase::idle) {
        // Both sides dialed at once: the smaller peer id keeps the dialer role.
        if (peer_id_ < *peer) return;
        remove_connection(*peer, existing);
      } else {
        existing->fail("reset");
      }
    }
    make_connection(Role::responder, *peer, from)->start();
    return;
  }

  auto it = by_address_.find(from);
  if (it == by_address_.end()) return;
  auto conn = connection(it->second);
  if (conn) conn->receive(tag, body);
}

void Host::connect_to_peer(const PeerId& peer, ConnectCallback done) {
  auto entry = routing_.lookup(peer);
  if (!entry) throw LookupError("peer " + peer.str() + " is not in the routing table");
  if (auto c = connection(peer)) {
    if (c->ready()) {
      loop_.post([done = std::move(done), c] { done(c); });
    } else {
      pending_[peer].push_back(std::move(done));
    }
    return;
  }
  pending_[peer].push_back(std::move(done));
  make_connection(Role::initiator, peer, entry->address)->start();
}

void Host::reset() {
  alive_ = std::make_shared<int>(0);
  connections_.clear();
  by_address_.clear();
  pending_.clear();
  routing_.clear();
}

}  // namespace oppnet::p2p
