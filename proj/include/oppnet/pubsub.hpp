/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "oppnet/common.hpp"
#include "oppnet/event_loop.hpp"

namespace oppnet::p2p {
class Host;
}

namespace oppnet::pubsub {

using namespace std::chrono_literals;

struct PubSubMessage {
  std::string source;
  std::uint64_t seqno = 0;
  std::string topic;
  Bytes payload;

  bool operator==(const PubSubMessage&) const = default;
};

enum class RecordKind : std::uint8_t { sub = 1, unsub = 2, msg = 3 };

struct Record {
  RecordKind kind = RecordKind::sub;
  std::string topic;
  /// Only for msg records; message.topic mirrors topic.
  PubSubMessage message;

  bool operator==(const Record&) const = default;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

/// varint(body length) || kind || varint(len) topic
///   [ || varint(len) source || seqno (8, big-endian) || varint(len) payload ]
Bytes encode_record(const Record& record);

/// Splits a stream into records. Throws DecodeError on a malformed record.
class RecordDecoder {
 public:
  std::vector<Record> feed(ByteView bytes);
  void reset() { buffer_.clear(); }
  std::size_t buffered() const { return buffer_.size(); }

 private:
  Bytes buffer_;
};

/// Recently seen (source, seqno) keys. Expired entries go first, then the
/// least recently used.
class SeenCache {
 public:
  using Key = std::pair<std::string, std::uint64_t>;

  explicit SeenCache(Duration ttl = 120s, std::size_t capacity = 4096);

  /// Counts as a use when present and fresh.
  bool contains(const Key& key, TimePoint now);
  void insert(const Key& key, TimePoint now);
  std::size_t size() const { return index_.size(); }
  Duration ttl() const { return ttl_; }
  std::size_t capacity() const { return capacity_; }

 private:
  struct Entry {
    Key key;
    TimePoint inserted;
  };
  void evict(TimePoint now);

  Duration ttl_;
  std::size_t capacity_;
  std::list<Entry> lru_;  // front is least recently used
  std::map<Key, std::list<Entry>::iterator> index_;
};

struct RouterConfig {
  /// Forward only to neighbours that announced the topic.
  bool strict = false;
  Duration seen_ttl = 120s;
  std::size_t seen_capacity = 4096;
};

/// FloodSub over an abstract set of neighbours. Each neighbour is a peer id
/// plus a function that writes one encoded record to it.
class FloodSubRouter {
 public:
  using Send = std::function<void(Bytes record)>;
  using Handler = std::function<void(const PubSubMessage&)>;

  struct Stats {
    std::uint64_t published = 0;
    std::uint64_t forwarded = 0;
    std::uint64_t delivered = 0;
    std::uint64_t duplicates = 0;
    std::uint64_t malformed = 0;
  };

  FloodSubRouter(EventLoop& loop, std::string self_id, RouterConfig config = {});

  const std::string& id() const { return self_; }

  /// Announces our subscriptions to the new neighbour.
  void add_neighbor(const std::string& peer, Send send);
  void remove_neighbor(const std::string& peer);
  void clear_neighbors() { neighbors_.clear(); }
  bool has_neighbor(const std::string& peer) const { return neighbors_.contains(peer); }
  std::size_t neighbor_count() const { return neighbors_.size(); }
  /// Topics the neighbour has announced.
  std::set<std::string> neighbor_topics(const std::string& peer) const;

  void subscribe(const std::string& topic, Handler handler);
  void unsubscribe(const std::string& topic);
  bool subscribed(const std::string& topic) const { return handlers_.contains(topic); }

  PubSubMessage publish(const std::string& topic, ByteView payload);

  /// Stream bytes from a neighbour.
  void on_bytes(const std::string& from, ByteView bytes);
  /// The neighbour's stream lost data; drop any partial record.
  void on_gap(const std::string& from);
  void handle(const std::string& from, const Record& record);

  /// Called for every subscription record received from a neighbour.
  void on_subscription(std::function<void(const std::string& peer, const std::string& topic, bool sub)> fn) {
    on_subscription_ = std::move(fn);
  }

  const Stats& stats() const { return stats_; }
  /// Records this node sent for the message (initial publish plus relays).
  std::uint64_t transmissions(const std::string& source, std::uint64_t seqno) const;

 private:
  struct Neighbor {
    Send send;
    std::set<std::string> topics;
    RecordDecoder decoder;
  };

  void send_to(const std::string& peer, Neighbor& n, const Bytes& record);
  void route(const PubSubMessage& msg, const std::string* from);

  EventLoop& loop_;
  std::string self_;
  RouterConfig config_;
  std::uint64_t next_seqno_ = 0;
  SeenCache seen_;
  std::map<std::string, Neighbor> neighbors_;
  std::map<std::string, Handler> handlers_;
  std::map<SeenCache::Key, std::uint64_t> transmissions_;
  std::function<void(const std::string&, const std::string&, bool)> on_subscription_;
  Stats stats_;
};

/// Wires a router to a host: every ready connection's pub/sub stream becomes
/// a neighbour, and closing the connection removes it.
void bind_router(p2p::Host& host, FloodSubRouter& router);

}  // namespace oppnet::pubsub
