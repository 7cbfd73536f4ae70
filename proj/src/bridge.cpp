/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "oppnet/bridge.hpp"

namespace oppnet::bridge {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::resync: return "resync";
    case EventKind::end_marker_mismatch: return "end_marker_mismatch";
    case EventKind::incomplete: return "incomplete";
    case EventKind::length_mismatch: return "length_mismatch";
    case EventKind::duplicate_conflict: return "duplicate_conflict";
    case EventKind::timeout: return "timeout";
    case EventKind::transport_error: return "transport_error";
  }
  return "unknown";
}

Bridge::Bridge(EventLoop& loop, std::shared_ptr<BytePort> port, BridgeConfig config)
    : loop_(loop), port_(std::move(port)), config_(config) {
  port_->on_receive([this](ByteView b) { on_bytes(b); });
}

Bridge::~Bridge() { port_->on_receive(nullptr); }

void Bridge::set_inter_segment_delay(Duration delay) {
  if (delay < Duration::zero()) throw std::invalid_argument("inter-segment delay must be >= 0");
  config_.inter_segment_delay = delay;
}

SendHandle Bridge::send(ByteView payload, const frame::DeviceAddress& dst) {
  if (!port_->is_open()) throw TransportError("bridge port is closed");
  auto frames = frame::encode_message(payload, dst, next_msg_id_);
  auto state = std::make_shared<SendHandle::State>();
  state->msg_id = next_msg_id_++;
  state->frames = frames.size();
  state->enqueued_at = loop_.now();
  for (auto& f : frames) queue_.push_back(Outbound{std::move(f), state});
  if (!pump_scheduled_) {
    auto at = loop_.now();
    if (last_write_) at = std::max(at, *last_write_ + config_.inter_segment_delay);
    schedule_pump(at);
  }
  return SendHandle(std::move(state));
}

void Bridge::schedule_pump(TimePoint at) {
  pump_scheduled_ = true;
  loop_.post_at(at, [this, alive = std::weak_ptr<int>(alive_), gen = generation_] {
    if (alive.expired() || gen != generation_) return;
    pump_scheduled_ = false;
    pump();
  });
}

void Bridge::pump() {
  if (queue_.empty()) return;
  auto now = loop_.now();
  if (last_write_ && now < *last_write_ + config_.inter_segment_delay) {
    schedule_pump(*last_write_ + config_.inter_segment_delay);
    return;
  }
  Outbound out = std::move(queue_.front());
  queue_.pop_front();
  auto& st = *out.state;
  try {
    port_->write(out.bytes);
  } catch (const TransportError& e) {
    // The rest of this message is useless without the lost frame.
    st.failed = true;
    while (!queue_.empty() && queue_.front().state == out.state) queue_.pop_front();
    emit(EventKind::transport_error, {}, st.msg_id, e.what());
    if (st.on_complete) st.on_complete(st);
    if (!queue_.empty()) schedule_pump(now);
    return;
  }
  last_write_ = now;
  if (!st.first_write) st.first_write = now;
  st.last_write = now;
  if (++st.written == st.frames && st.on_complete) st.on_complete(st);
  if (!queue_.empty()) schedule_pump(now + config_.inter_segment_delay);
}

void Bridge::on_bytes(ByteView bytes) {
  for (auto& ev : parser_.feed(bytes)) {
    if (auto* err = std::get_if<frame::ParseError>(&ev)) {
      if (err->kind == frame::ParseErrorKind::resync) {
        emit(EventKind::resync, {}, 0, std::to_string(err->skipped) + " bytes skipped");
      } else {
        emit(EventKind::end_marker_mismatch, {}, 0);
      }
      continue;
    }
    handle_frame(std::move(std::get<frame::SegmentFrame>(ev)));
  }
}

void Bridge::handle_frame(frame::SegmentFrame f) {
  Key key{f.address, f.header.msg_id};
  auto it = partial_.find(key);
  if (it == partial_.end()) {
    Partial p{loop_.now(), next_token_++, {}};
    it = partial_.emplace(key, std::move(p)).first;
    loop_.post_at(it->second.started + config_.reassembly_timeout,
                  [this, alive = std::weak_ptr<int>(alive_), key, token = it->second.token] {
                    if (alive.expired()) return;
                    auto pit = partial_.find(key);
                    if (pit == partial_.end() || pit->second.token != token) return;
                    partial_.erase(pit);
                    emit(EventKind::timeout, key.first, key.second);
                  });
  }
  auto& partial = it->second;
  if (!partial.frames.empty() && partial.frames.begin()->second.header.seg_count != f.header.seg_count) {
    partial_.erase(it);
    emit(EventKind::duplicate_conflict, key.first, key.second, "seg_count changed");
    return;
  }
  auto [slot, inserted] = partial.frames.try_emplace(f.header.seg_index, f);
  if (!inserted) {
    if (slot->second != f) {
      partial_.erase(it);
      emit(EventKind::duplicate_conflict, key.first, key.second,
           "segment " + std::to_string(f.header.seg_index) + " differs");
      return;
    }
    slot->second = std::move(f);
  }
  if (!slot->second.header.is_final()) return;

  std::vector<frame::SegmentFrame> frames;
  frames.reserve(partial.frames.size());
  for (auto& [_, fr] : partial.frames) frames.push_back(std::move(fr));
  partial_.erase(it);
  try {
    Bytes payload = frame::reassemble(frames);
    if (on_delivery_) on_delivery_(Delivery{key.first, key.second, std::move(payload), loop_.now()});
  } catch (const frame::ReassemblyError& e) {
    auto kind = e.kind() == frame::ReassemblyErrorKind::length_mismatch ? EventKind::length_mismatch
                                                                          : EventKind::incomplete;
    emit(kind, key.first, key.second, e.what());
  }
}

void Bridge::reset() {
  ++generation_;
  pump_scheduled_ = false;
  queue_.clear();
  last_write_.reset();
  partial_.clear();
  parser_.reset();
}

void Bridge::emit(EventKind kind, const frame::DeviceAddress& peer, std::uint32_t msg_id, std::string detail) {
  if (on_event_) on_event_(Event{kind, peer, msg_id, loop_.now(), std::move(detail)});
}

}  // namespace oppnet::bridge
