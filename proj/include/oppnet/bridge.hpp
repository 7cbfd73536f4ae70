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
#include <string>

#include "oppnet/byte_port.hpp"
#include "oppnet/event_loop.hpp"
#include "oppnet/frame.hpp"

namespace oppnet::bridge {

using namespace std::chrono_literals;

struct BridgeConfig {
  /// Minimum gap between two consecutive frame writes on the port.
  Duration inter_segment_delay = 60ms;
  /// Partial messages older than this are evicted.
  Duration reassembly_timeout = 10s;
};

enum class EventKind {
  resync,
  end_marker_mismatch,
  incomplete,
  length_mismatch,
  duplicate_conflict,
  timeout,
  transport_error,
};

std::string_view to_string(EventKind kind);

struct Event {
  EventKind kind;
  frame::DeviceAddress peer{};
  std::uint32_t msg_id = 0;
  TimePoint at{};
  std::string detail;
};

struct Delivery {
  /// For inbound traffic the address field names the sending node.
  frame::DeviceAddress source{};
  std::uint32_t msg_id = 0;
  Bytes payload;
  TimePoint at{};
};

/// Tracks one bridge_send() until its last frame is on the wire.
class SendHandle {
 public:
  struct State {
    std::uint32_t msg_id = 0;
    std::size_t frames = 0;
    std::size_t written = 0;
    std::optional<TimePoint> enqueued_at;
    std::optional<TimePoint> first_write;
    std::optional<TimePoint> last_write;
    bool failed = false;
    std::function<void(const State&)> on_complete;
  };

  SendHandle() = default;
  explicit SendHandle(std::shared_ptr<State> s) : state_(std::move(s)) {}

  std::uint32_t msg_id() const { return state_->msg_id; }
  std::size_t frame_count() const { return state_->frames; }
  bool done() const { return state_->written == state_->frames; }
  bool failed() const { return state_->failed; }
  std::optional<TimePoint> first_write() const { return state_->first_write; }
  std::optional<TimePoint> last_write() const { return state_->last_write; }
  TimePoint enqueued_at() const { return *state_->enqueued_at; }

  /// Fires once, when the last frame has been written or the send failed.
  void on_complete(std::function<void(const State&)> fn) { state_->on_complete = std::move(fn); }

 private:
  std::shared_ptr<State> state_;
};

/// Connects the host to a serial byte port: segments outbound messages into
/// frames paced by the inter-segment delay, and reassembles inbound frames.
/// Single-threaded; all work runs on the supplied event loop.
class Bridge {
 public:
  Bridge(EventLoop& loop, std::shared_ptr<BytePort> port, BridgeConfig config = {});
  ~Bridge();

  Bridge(const Bridge&) = delete;
  Bridge& operator=(const Bridge&) = delete;

  /// Throws TransportError if the port is closed, SizeError if the payload is
  /// outside [1, 2000] bytes.
  SendHandle send(ByteView payload, const frame::DeviceAddress& dst);

  void set_inter_segment_delay(Duration delay);
  Duration inter_segment_delay() const { return config_.inter_segment_delay; }

  /// Inbound bytes from the port (wired automatically by the constructor).
  void on_bytes(ByteView bytes);

  void on_delivery(std::function<void(const Delivery&)> fn) { on_delivery_ = std::move(fn); }
  void on_event(std::function<void(const Event&)> fn) { on_event_ = std::move(fn); }

  /// Drops queued frames, partial reassemblies and parser state.
  void reset();

  std::size_t pending_frames() const { return queue_.size(); }
  std::size_t partial_messages() const { return partial_.size(); }

 private:
  struct Outbound {
    Bytes bytes;
    std::shared_ptr<SendHandle::State> state;
  };

  struct Partial {
    TimePoint started;
    std::uint64_t token;
    std::map<std::uint16_t, frame::SegmentFrame> frames;
  };

  using Key = std::pair<frame::DeviceAddress, std::uint32_t>;

  void pump();
  void schedule_pump(TimePoint at);
  void handle_frame(frame::SegmentFrame f);
  void emit(EventKind kind, const frame::DeviceAddress& peer, std::uint32_t msg_id, std::string detail = {});

  EventLoop& loop_;
  std::shared_ptr<BytePort> port_;
  BridgeConfig config_;
  std::shared_ptr<int> alive_ = std::make_shared<int>(0);
  std::uint64_t generation_ = 0;

  std::uint32_t next_msg_id_ = 0;
  std::deque<Outbound> queue_;
  std::optional<TimePoint> last_write_;
  bool pump_scheduled_ = false;

  frame::StreamParser parser_;
  std::map<Key, Partial> partial_;
  std::uint64_t next_token_ = 0;

  std::function<void(const Delivery&)> on_delivery_;
  std::function<void(const Event&)> on_event_;
};

}  // namespace oppnet::bridge
