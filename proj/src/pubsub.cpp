/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "oppnet/pubsub.hpp"

#include "oppnet/p2p/host.hpp"
#include "oppnet/varint.hpp"

namespace oppnet::pubsub {

namespace {

constexpr std::uint64_t kMaxRecord = 1 << 20;

void put_string(Bytes& out, ByteView s) {
  varint::write(out, s.size());
  append(out, s);
}

class Reader {
 public:
  explicit Reader(ByteView b) : b_(b) {}

  std::uint8_t byte() {
    need(1);
    return b_[pos_++];
  }
  Bytes bytes() {
    auto len = varint::read(b_.subspan(pos_));
    if (len.status != varint::Status::ok) throw DecodeError("bad length in pub/sub record");
    pos_ += len.size;
    need(len.value);
    Bytes out(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
              b_.begin() + static_cast<std::ptrdiff_t>(pos_ + len.value));
    pos_ += len.value;
    return out;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | b_[pos_++];
    return v;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (b_.size() - pos_ < n) throw DecodeError("truncated pub/sub record");
  }
  ByteView b_;
  std::size_t pos_ = 0;
};

Record decode_body(ByteView body) {
  Reader r(body);
  Record rec;
  auto kind = r.byte();
  if (kind < 1 || kind > 3) throw DecodeError("unknown pub/sub record kind");
  rec.kind = static_cast<RecordKind>(kind);
  rec.topic = to_string(r.bytes());
  if (rec.kind == RecordKind::msg) {
    rec.message.source = to_string(r.bytes());
    rec.message.seqno = r.u64();
    rec.message.payload = r.bytes();
    rec.message.topic = rec.topic;
  }
  if (!r.done()) throw DecodeError("trailing bytes in pub/sub record");
  return rec;
}

}  // namespace

Bytes encode_record(const Record& record) {
  Bytes body;
  body.push_back(static_cast<std::uint8_t>(record.kind));
  put_string(body, to_bytes(record.topic));
  if (record.kind == RecordKind::msg) {
    put_string(body, to_bytes(record.message.source));
    for (int i = 7; i >= 0; --i) body.push_back(static_cast<std::uint8_t>(record.message.seqno >> (8 * i)));
    put_string(body, record.message.payload);
  }
  Bytes out;
  varint::write(out, body.size());
  append(out, body);
  return out;
}

std::vector<Record> RecordDecoder::feed(ByteView bytes) {
  append(buffer_, bytes);
  std::vector<Record> out;
  std::size_t pos = 0;
  while (pos < buffer_.size()) {
    auto len = varint::read(ByteView(buffer_).subspan(pos));
    if (len.status == varint::Status::incomplete) break;
    if (len.status == varint::Status::malformed || len.value == 0 || len.value > kMaxRecord) {
      buffer_.clear();
      throw DecodeError("bad pub/sub record length");
    }
    if (buffer_.size() - pos - len.size < len.value) break;
    auto body = ByteView(buffer_).subspan(pos + len.size, len.value);
    pos += len.size + len.value;
    try {
      out.push_back(decode_body(body));
    } catch (const DecodeError&) {
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(pos));
      throw;
    }
  }
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(pos));
  return out;
}

// ---- SeenCache ----

SeenCache::SeenCache(Duration ttl, std::size_t capacity) : ttl_(ttl), capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("seen cache capacity must be positive");
}

bool SeenCache::contains(const Key& key, TimePoint now) {
  auto it = index_.find(key);
  if (it == index_.end()) return false;
  if (now - it->second->inserted > ttl_) {
    lru_.erase(it->second);
    index_.erase(it);
    return false;
  }
  lru_.splice(lru_.end(), lru_, it->second);
  return true;
}

void SeenCache::insert(const Key& key, TimePoint now) {
  if (auto it = index_.find(key); it != index_.end()) {
    it->second->inserted = now;
    lru_.splice(lru_.end(), lru_, it->second);
    return;
  }
  if (index_.size() >= capacity_) evict(now);
  lru_.push_back({key, now});
  index_.emplace(key, std::prev(lru_.end()));
}

void SeenCache::evict(TimePoint now) {
  for (auto it = lru_.begin(); it != lru_.end();) {
    if (now - it->inserted > ttl_) {
      index_.erase(it->key);
      it = lru_.erase(it);
    } else {
      ++it;
    }
  }
  while (index_.size() >= capacity_) {
    index_.erase(lru_.front().key);
    lru_.pop_front();
  }
}

// ---- FloodSubRouter ----

FloodSubRouter::FloodSubRouter(EventLoop& loop, std::string self_id, RouterConfig config)
    : loop_(loop), self_(std::move(self_id)), config_(config), seen_(config.seen_ttl, config.seen_capacity) {}

void FloodSubRouter::send_to(const std::string& peer, Neighbor& n, const Bytes& record) {
  (void)peer;
  try {
    n.send(record);
  } catch (const Error&) {
    // The neighbour's stream is gone; its removal is on the way.
  }
}

void FloodSubRouter::add_neighbor(const std::string& peer, Send send) {
  auto& n = neighbors_[peer];
  n = Neighbor{std::move(send), {}, {}};
  for (const auto& [topic, h] : handlers_) send_to(peer, n, encode_record({RecordKind::sub, topic, {}}));
}

void FloodSubRouter::remove_neighbor(const std::string& peer) { neighbors_.erase(peer); }

std::set<std::string> FloodSubRouter::neighbor_topics(const std::string& peer) const {
  auto it = neighbors_.find(peer);
  return it == neighbors_.end() ? std::set<std::string>{} : it->second.topics;
}

void FloodSubRouter::subscribe(const std::string& topic, Handler handler) {
  bool fresh = !handlers_.contains(topic);
  handlers_[topic] = std::move(handler);
  if (!fresh) return;
  auto record = encode_record({RecordKind::sub, topic, {}});
  for (auto& [peer, n] : neighbors_) send_to(peer, n, record);
}

void FloodSubRouter::unsubscribe(const std::string& topic) {
  if (handlers_.erase(topic) == 0) return;
  auto record = encode_record({RecordKind::unsub, topic, {}});
  for (auto& [peer, n] : neighbors_) send_to(peer, n, record);
}

PubSubMessage FloodSubRouter::publish(const std::string& topic, ByteView payload) {
  PubSubMessage msg{self_, ++next_seqno_, topic, Bytes(payload.begin(), payload.end())};
  ++stats_.published;
  seen_.insert({msg.source, msg.seqno}, loop_.now());
  route(msg, nullptr);
  return msg;
}

void FloodSubRouter::route(const PubSubMessage& msg, const std::string* from) {
  if (auto h = handlers_.find(msg.topic); h != handlers_.end()) {
    ++stats_.delivered;
    // Copy: the handler may unsubscribe.
    auto handler = h->second;
    handler(msg);
  }
  Record rec{RecordKind::msg, msg.topic, msg};
  auto record = encode_record(rec);
  auto& count = transmissions_[{msg.source, msg.seqno}];
  for (auto& [peer, n] : neighbors_) {
    if (from && peer == *from) continue;
    if (config_.strict && !n.topics.contains(msg.topic)) continue;
    ++count;
    ++stats_.forwarded;
    send_to(peer, n, record);
  }
}

void FloodSubRouter::on_bytes(const std::string& from, ByteView bytes) {
  auto it = neighbors_.find(from);
  if (it == neighbors_.end()) return;
  std::vector<Record> records;
  try {
    records = it->second.decoder.feed(bytes);
  } catch (const DecodeError&) {
    ++stats_.malformed;
    return;
  }
  for (const auto& r : records) handle(from, r);
}

void FloodSubRouter::on_gap(const std::string& from) {
  if (auto it = neighbors_.find(from); it != neighbors_.end()) it->second.decoder.reset();
}

void FloodSubRouter::handle(const std::string& from, const Record& record) {
  switch (record.kind) {
    case RecordKind::sub:
    case RecordKind::unsub: {
      auto it = neighbors_.find(from);
      if (it == neighbors_.end()) return;
      bool sub = record.kind == RecordKind::sub;
      if (sub) {
        it->second.topics.insert(record.topic);
      } else {
        it->second.topics.erase(record.topic);
      }
      if (on_subscription_) on_subscription_(from, record.topic, sub);
      return;
    }
    case RecordKind::msg: {
      SeenCache::Key key{record.message.source, record.message.seqno};
      if (record.message.source == self_ || seen_.contains(key, loop_.now())) {
        ++stats_.duplicates;
        return;
      }
      seen_.insert(key, loop_.now());
      route(record.message, &from);
      return;
    }
  }
}

std::uint64_t FloodSubRouter::transmissions(const std::string& source, std::uint64_t seqno) const {
  auto it = transmissions_.find({source, seqno});
  return it == transmissions_.end() ? 0 : it->second;
}

void bind_router(p2p::Host& host, FloodSubRouter& router) {
  host.on_connection_ready([&router](std::shared_ptr<p2p::Connection> conn) {
    auto stream = conn->pubsub_stream();
    if (!stream) return;
    auto peer = conn->remote().str();
    std::weak_ptr<p2p::Stream> weak = stream;
    stream->on_data([&router, peer](ByteView b) { router.on_bytes(peer, b); });
    stream->on_gap([&router, peer] { router.on_gap(peer); });
    router.add_neighbor(peer, [weak](Bytes record) {
      auto s = weak.lock();
      if (!s) throw Error("pub/sub stream closed");
      s->write(record);
    });
  });
  host.on_connection_closed([&router](const p2p::PeerId& peer, const std::string&) {
    router.remove_neighbor(peer.str());
  });
}

}  // namespace oppnet::pubsub
