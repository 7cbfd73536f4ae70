/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "oppnet/mesh.hpp"

#include <algorithm>

namespace oppnet::mesh {

namespace {

enum class PduType : std::uint8_t { access = 0, segment = 1, ack = 2 };

constexpr std::size_t kPduHeader = 10;

struct Pdu {
  PduType type = PduType::access;
  MeshAddress src;
  MeshAddress dst;
  std::uint8_t ttl = 1;
  std::uint32_t seq = 0;
  std::uint32_t session = 0;
  std::uint16_t seg_index = 0;
  std::uint16_t seg_count = 0;
  Opcode opcode = Opcode::data;
  Bytes payload;
};

void put16(Bytes& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

void put32(Bytes& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint16_t get16(ByteView b, std::size_t at) { return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]); }

std::uint32_t get32(ByteView b, std::size_t at) {
  return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
         (static_cast<std::uint32_t>(b[at + 2]) << 8) | b[at + 3];
}

Bytes encode(const Pdu& p) {
  Bytes b;
  b.reserve(kPduHeader + 8 + p.payload.size());
  b.push_back(static_cast<std::uint8_t>(p.type));
  put16(b, p.src.value());
  put16(b, p.dst.value());
  b.push_back(p.ttl);
  put32(b, p.seq);
  switch (p.type) {
    case PduType::access:
      b.push_back(static_cast<std::uint8_t>(p.opcode));
      break;
    case PduType::segment:
      put32(b, p.session);
      b.push_back(static_cast<std::uint8_t>(p.seg_index));
      b.push_back(static_cast<std::uint8_t>(p.seg_count));
      b.push_back(static_cast<std::uint8_t>(p.opcode));
      break;
    case PduType::ack:
      put32(b, p.session);
      b.push_back(static_cast<std::uint8_t>(p.seg_index));
      break;
  }
  append(b, p.payload);
  return b;
}

std::optional<Pdu> decode(ByteView b) {
  if (b.size() < kPduHeader + 1 || b[0] > 2) return std::nullopt;
  Pdu p;
  p.type = static_cast<PduType>(b[0]);
  p.src = MeshAddress(get16(b, 1));
  p.dst = MeshAddress(get16(b, 3));
  p.ttl = b[5];
  p.seq = get32(b, 6);
  std::size_t body = kPduHeader;
  switch (p.type) {
    case PduType::access:
      p.opcode = static_cast<Opcode>(b[body]);
      body += 1;
      break;
    case PduType::segment:
      if (b.size() < body + 7) return std::nullopt;
      p.session = get32(b, body);
      p.seg_index = b[body + 4];
      p.seg_count = b[body + 5];
      p.opcode = static_cast<Opcode>(b[body + 6]);
      body += 7;
      if (p.seg_count == 0 || p.seg_index >= p.seg_count) return std::nullopt;
      break;
    case PduType::ack:
      if (b.size() < body + 5) return std::nullopt;
      p.session = get32(b, body);
      p.seg_index = b[body + 4];
      body += 5;
      break;
  }
  p.payload.assign(b.begin() + static_cast<std::ptrdiff_t>(body), b.end());
  return p;
}

constexpr Duration kRxRetention = std::chrono::seconds(30);

}  // namespace

void MeshConfig::validate() const {
  if (seg_payload == 0 || max_segments == 0) throw std::invalid_argument("segment size and count must be > 0");
  if (max_segments > 255) throw std::invalid_argument("max_segments must fit in one byte");
  if (unsegmented_max >= seg_payload * max_segments) {
    throw std::invalid_argument("unsegmented_max must be below seg_payload * max_segments");
  }
  if (ttl == 0) throw std::invalid_argument("ttl must be >= 1");
}

Duration avg_tx_time(const MeshConfig& cfg, std::size_t n_segments) {
  if (n_segments == 0) throw std::invalid_argument("avg_tx_time: n_segments must be >= 1");
  auto per_segment_ms = 10 + (static_cast<std::int64_t>(cfg.t_int_ms) + 10) * cfg.t_count;
  return std::chrono::milliseconds(per_segment_ms * static_cast<std::int64_t>(n_segments));
}

Duration seg_interval(unsigned step) { return std::chrono::milliseconds((static_cast<std::int64_t>(step) + 1) * 10); }

Duration inter_segment_time(const MeshConfig& cfg, std::size_t n_segments) {
  return seg_interval(cfg.tx_seg_int_step) * static_cast<std::int64_t>(n_segments);
}

Duration segment_slot(const MeshConfig& cfg) {
  return seg_interval(cfg.tx_seg_int_step) + avg_tx_time(cfg, 1) - std::chrono::milliseconds(10);
}

void MeshNetwork::register_client(MeshAddress unicast, MeshClient& client) {
  if (!unicast.is_unicast()) throw std::invalid_argument(unicast.str() + " is not a unicast address");
  auto [it, inserted] = clients_.emplace(unicast, &client);
  if (!inserted && it->second != &client) {
    throw std::invalid_argument("address " + unicast.str() + " already provisioned");
  }
}

void MeshNetwork::unregister_client(MeshAddress unicast) { clients_.erase(unicast); }

MeshClient* MeshNetwork::find(MeshAddress unicast) const {
  auto it = clients_.find(unicast);
  return it == clients_.end() ? nullptr : it->second;
}

MeshClient::MeshClient(MeshNetwork& network, sim::NodeId node, MeshConfig config)
    : network_(network),
      medium_(network.medium()),
      sim_(network.medium().simulator()),
      node_(node),
      config_(config) {
  config_.validate();
  medium_.attach(node_, [this](sim::NodeId from, ByteView frame) { on_frame(from, frame); });
}

MeshClient::~MeshClient() {
  medium_.attach(node_, nullptr);
  if (provisioned()) network_.unregister_client(unicast_);
}

void MeshClient::provision(MeshAddress unicast, std::set<MeshAddress> groups) {
  for (auto g : groups) {
    if (!g.is_group()) throw std::invalid_argument(g.str() + " is not a group address");
  }
  network_.register_client(unicast, *this);
  if (provisioned() && unicast_ != unicast) network_.unregister_client(unicast_);
  unicast_ = unicast;
  groups_ = std::move(groups);
}

void MeshClient::send(MeshAddress dst, ByteView payload, SendCallback done, Opcode opcode) {
  if (payload.empty()) throw SizeError("mesh payload is empty");
  if (payload.size() > config_.max_payload()) {
    throw SizeError("mesh payload of " + std::to_string(payload.size()) + " bytes exceeds " +
                    std::to_string(config_.max_payload()));
  }
  queue_.push_back(Outgoing{dst, opcode, Bytes(payload.begin(), payload.end()), std::move(done)});
  start_next();
}

void MeshClient::broadcast_presence(std::string_view peer_id) {
  Bytes id(peer_id.begin(), peer_id.end());
  for (auto g : groups_) send(g, id, {}, Opcode::presence);
}

void MeshClient::transmit_pdu(const Bytes& pdu) { medium_.transmit(node_, pdu, avg_tx_time(config_, 1)); }

void MeshClient::start_next() {
  if (active_ || queue_.empty()) return;
  Session s;
  s.id = next_session_++;
  s.msg = std::move(queue_.front());
  queue_.pop_front();
  s.started = sim_.now();
  active_ = std::move(s);
  auto& session = *active_;

  if (!provisioned() || !medium_.online(node_)) {
    sim_.post([this, alive = std::weak_ptr<int>(alive_), id = session.id] {
      if (!alive.expired() && active_ && active_->id == id) finish(Completion::failed);
    });
    return;
  }
  if (session.msg.dst.is_unicast()) {
    MeshClient* target = network_.find(session.msg.dst);
    unsigned hops = config_.relay ? config_.ttl : 1;
    if (target == nullptr || !medium_.reachable(node_, target->node_, hops)) {
      sim_.post([this, alive = std::weak_ptr<int>(alive_), id = session.id] {
        if (!alive.expired() && active_ && active_->id == id) finish(Completion::failed);
      });
      return;
    }
  }

  const auto& payload = session.msg.payload;
  if (payload.size() <= config_.unsegmented_max) {
    Pdu p;
    p.type = PduType::access;
    p.src = unicast_;
    p.dst = session.msg.dst;
    p.ttl = static_cast<std::uint8_t>(config_.ttl);
    p.seq = next_seq_++;
    p.opcode = session.msg.opcode;
    p.payload = payload;
    transmit_pdu(encode(p));
    session.segments.push_back(payload);
    session.transmissions = 1;
    sim_.post_after(avg_tx_time(config_, 1), [this, alive = std::weak_ptr<int>(alive_), id = session.id] {
      if (!alive.expired() && active_ && active_->id == id) finish(Completion::unacknowledged);
    });
    return;
  }

  for (std::size_t off = 0; off < payload.size(); off += config_.seg_payload) {
    auto end = std::min(payload.size(), off + config_.seg_payload);
    session.segments.emplace_back(payload.begin() + static_cast<std::ptrdiff_t>(off),
                                  payload.begin() + static_cast<std::ptrdiff_t>(end));
  }
  auto n = session.segments.size();
  session.acked.assign(n, false);
  session.attempts.assign(n, 0);
  session.expects_acks = session.msg.dst.is_unicast();
  session.retries = session.expects_acks ? config_.retries_unicast : config_.retries_multicast;
  unsigned rounds = session.expects_acks ? 1 : session.retries + 1;
  for (unsigned r = 0; r < rounds; ++r) {
    for (std::size_t i = 0; i < n; ++i) session.tx_queue.push_back(static_cast<std::uint16_t>(i));
  }
  if (!slot_scheduled_) {
    auto at = sim_.now();
    if (last_slot_) at = std::max(at, *last_slot_ + segment_slot(config_));
    slot_scheduled_ = true;
    sim_.schedule(at, [this, alive = std::weak_ptr<int>(alive_), gen = generation_] {
      if (alive.expired() || gen != generation_) return;
      slot();
    });
  }
}

void MeshClient::slot() {
  slot_scheduled_ = false;
  if (!active_) return;
  auto& s = *active_;
  while (!s.tx_queue.empty() && s.expects_acks && s.acked[s.tx_queue.front()]) s.tx_queue.pop_front();
  if (s.tx_queue.empty()) {
    if (!s.expects_acks) finish(Completion::unacknowledged);
    return;
  }
  auto index = s.tx_queue.front();
  s.tx_queue.pop_front();

  Pdu p;
  p.type = PduType::segment;
  p.src = unicast_;
  p.dst = s.msg.dst;
  p.ttl = static_cast<std::uint8_t>(config_.ttl);
  p.seq = next_seq_++;
  p.session = s.id;
  p.seg_index = index;
  p.seg_count = static_cast<std::uint16_t>(s.segments.size());
  p.opcode = s.msg.opcode;
  p.payload = s.segments[index];
  transmit_pdu(encode(p));
  ++s.attempts[index];
  ++s.transmissions;
  last_slot_ = sim_.now();

  if (s.expects_acks) {
    sim_.post_after(ack_timeout(), [this, alive = std::weak_ptr<int>(alive_), id = s.id, index,
                                    attempt = s.attempts[index]] {
      if (!alive.expired()) on_ack_timeout(id, index, attempt);
    });
  }
  if (!s.tx_queue.empty() || !s.expects_acks) {
    slot_scheduled_ = true;
    sim_.post_after(segment_slot(config_), [this, alive = std::weak_ptr<int>(alive_), gen = generation_] {
      if (alive.expired() || gen != generation_) return;
      slot();
    });
  }
}

Duration MeshClient::ack_timeout() const {
  auto airtime = avg_tx_time(config_, 1);
  Duration link_bound{0};
  if (active_) {
    if (MeshClient* target = network_.find(active_->msg.dst)) {
      if (const auto* l = medium_.link(node_, target->node_)) {
        link_bound = from_ms(l->base_latency_ms + l->jitter_ms);
      }
    }
  }
  auto hops = static_cast<std::int64_t>(config_.relay ? config_.ttl : 1);
  return 2 * (airtime + link_bound) * hops + seg_interval(config_.rx_seg_int_step) + segment_slot(config_);
}

void MeshClient::on_ack_timeout(std::uint32_t session, std::uint16_t index, unsigned attempt) {
  if (!active_ || active_->id != session) return;
  auto& s = *active_;
  if (s.acked[index] || s.attempts[index] != attempt) return;
  if (s.attempts[index] > s.retries) {
    finish(Completion::failed);
    return;
  }
  s.tx_queue.push_back(index);
  if (!slot_scheduled_) {
    auto at = sim_.now();
    if (last_slot_) at = std::max(at, *last_slot_ + segment_slot(config_));
    slot_scheduled_ = true;
    sim_.schedule(at, [this, alive = std::weak_ptr<int>(alive_), gen = generation_] {
      if (alive.expired() || gen != generation_) return;
      slot();
    });
  }
}

void MeshClient::finish(Completion status) {
  if (!active_) return;
  Session s = std::move(*active_);
  active_.reset();
  SendResult r;
  r.status = status;
  r.started = s.started;
  r.finished = sim_.now();
  r.segments = s.segments.size();
  r.transmissions = s.transmissions;
  start_next();
  if (s.msg.done) s.msg.done(r);
}

void MeshClient::send_ack(MeshAddress to, std::uint32_t session, std::uint16_t index) {
  Pdu p;
  p.type = PduType::ack;
  p.src = unicast_;
  p.dst = to;
  p.ttl = static_cast<std::uint8_t>(config_.ttl);
  p.seq = next_seq_++;
  p.session = session;
  p.seg_index = index;
  transmit_pdu(encode(p));
}

void MeshClient::purge_rx(TimePoint now) {
  for (auto it = rx_.begin(); it != rx_.end();) {
    it = (now - it->second.last_seen > kRxRetention) ? rx_.erase(it) : std::next(it);
  }
  for (auto it = seen_pdus_.begin(); it != seen_pdus_.end();) {
    it = (now - it->second > kRxRetention) ? seen_pdus_.erase(it) : std::next(it);
  }
}

void MeshClient::on_frame(sim::NodeId, ByteView frame) {
  auto decoded = decode(frame);
  if (!decoded || !provisioned()) return;
  auto& p = *decoded;
  if (p.src == unicast_) return;
  auto now = sim_.now();
  if (!seen_pdus_.emplace(std::pair{p.src, p.seq}, now).second) return;
  if (seen_pdus_.size() > 4096) purge_rx(now);

  if (config_.relay && p.ttl > 1 && p.dst != unicast_) {
    Pdu fwd = p;
    fwd.ttl = static_cast<std::uint8_t>(p.ttl - 1);
    transmit_pdu(encode(fwd));
  }
  if (!accepts(p.dst)) return;

  switch (p.type) {
    case PduType::access:
      if (on_receive_) on_receive_(Received{p.src, p.dst, p.opcode, std::move(p.payload), now});
      break;
    case PduType::ack:
      if (active_ && active_->id == p.session && active_->msg.dst == p.src &&
          p.seg_index < active_->segments.size() && !active_->acked[p.seg_index]) {
        active_->acked[p.seg_index] = true;
        if (++active_->acked_count == active_->segments.size()) finish(Completion::acked);
      }
      break;
    case PduType::segment: {
      if (p.dst == unicast_) {
        sim_.post_after(seg_interval(config_.rx_seg_int_step),
                        [this, alive = std::weak_ptr<int>(alive_), to = p.src, session = p.session,
                         index = p.seg_index, gen = generation_] {
                          if (alive.expired() || gen != generation_ || !medium_.online(node_)) return;
                          send_ack(to, session, index);
                        });
      }
      auto& rx = rx_[{p.src, p.session}];
      if (rx.parts.empty()) {
        rx.parts.resize(p.seg_count);
        rx.opcode = p.opcode;
      }
      rx.last_seen = now;
      if (p.seg_index >= rx.parts.size() || rx.parts[p.seg_index]) break;
      rx.parts[p.seg_index] = std::move(p.payload);
      if (++rx.have < rx.parts.size() || rx.delivered) break;
      rx.delivered = true;
      Bytes whole;
      for (auto& part : rx.parts) append(whole, *part);
      if (on_receive_) on_receive_(Received{p.src, p.dst, rx.opcode, std::move(whole), now});
      break;
    }
  }
}

void MeshClient::reset() {
  ++generation_;
  slot_scheduled_ = false;
  last_slot_.reset();
  rx_.clear();
  seen_pdus_.clear();
  std::vector<SendCallback> failed;
  if (active_) failed.push_back(std::move(active_->msg.done));
  active_.reset();
  for (auto& m : queue_) failed.push_back(std::move(m.done));
  queue_.clear();
  SendResult r;
  r.status = Completion::failed;
  r.started = r.finished = sim_.now();
  for (auto& cb : failed) {
    if (cb) cb(r);
  }
}

SerialGateway::SerialGateway(MeshClient& client, std::shared_ptr<BytePort> port)
    : client_(client), port_(std::move(port)) {
  port_->on_receive([this](ByteView b) { on_serial(b); });
}

SerialGateway::~SerialGateway() { port_->on_receive(nullptr); }

void SerialGateway::on_serial(ByteView bytes) {
  for (auto& ev : parser_.feed(bytes)) {
    if (std::holds_alternative<frame::ParseError>(ev)) {
      ++stats_.parse_errors;
      continue;
    }
    const auto& f = std::get<frame::SegmentFrame>(ev);
    ++stats_.frames_out;
    client_.send(MeshAddress(frame::mesh_address_of(f.address)), f.serialize(),
                 [this, alive = std::weak_ptr<int>(alive_)](const SendResult& r) {
                   if (!alive.expired() && r.status == Completion::failed) ++stats_.send_failures;
                 });
  }
}

void SerialGateway::handle(const Received& message) {
  if (message.opcode != Opcode::data || message.payload.size() < frame::kPrefixSize) return;
  Bytes out = message.payload;
  auto src = frame::device_address(message.src.value());
  std::copy(src.begin(), src.end(), out.begin() + frame::kHeaderSize);
  ++stats_.frames_in;
  try {
    port_->write(out);
  } catch (const TransportError&) {
  }
}

void SerialGateway::reset() { parser_.reset(); }

}  // namespace oppnet::mesh
