/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include <catch_amalgamated.hpp>

#include <random>

#include "oppnet/bridge.hpp"
#include "oppnet/sim.hpp"
#include "support.hpp"

using namespace oppnet;
using namespace oppnet::bridge;
using namespace std::chrono_literals;

namespace {

class RecordingPort final : public BytePort {
 public:
  explicit RecordingPort(EventLoop& loop) : loop_(loop) {}
  void write(ByteView bytes) override {
    if (!open_) throw TransportError("closed");
    writes.push_back({loop_.now(), Bytes(bytes.begin(), bytes.end())});
  }
  bool is_open() const override { return open_; }
  void close() override { open_ = false; }
  void inject(ByteView b) { deliver(b); }

  struct Write {
    TimePoint at;
    Bytes bytes;
  };
  std::vector<Write> writes;

 private:
  EventLoop& loop_;
  bool open_ = true;
};

const auto kPeerA = frame::device_address(0x0023);
const auto kPeerB = frame::device_address(0x0027);

Bytes payload_of(std::size_t n, std::uint8_t seed) {
  Bytes b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(seed + i * 13);
  return b;
}

}  // namespace

TEST_CASE("single segment goes out immediately", "[bridge]") {
  sim::Simulator sim;
  auto port = std::make_shared<RecordingPort>(sim);
  Bridge b(sim, port);
  auto h = b.send(to_bytes("hi"), kPeerB);
  sim.run();
  REQUIRE(port->writes.size() == 1);
  CHECK(port->writes[0].at == kEpoch);
  CHECK(h.done());
  CHECK(h.frame_count() == 1);
}

TEST_CASE("segments are paced by the inter-segment delay", "[bridge]") {
  sim::Simulator sim;
  auto port = std::make_shared<RecordingPort>(sim);
  Bridge b(sim, port);
  bool completed = false;
  auto h = b.send(Bytes(2000, 0x41), kPeerB);
  h.on_complete([&](const SendHandle::State& s) { completed = !s.failed; });
  sim.run();
  REQUIRE(port->writes.size() == 18);
  CHECK(port->writes.back().at - port->writes.front().at >= 17 * 60ms);
  for (std::size_t i = 1; i < port->writes.size(); ++i) {
    CHECK(port->writes[i].at - port->writes[i - 1].at >= 60ms);
  }
  // Frames leave in seg_index order.
  frame::StreamParser parser;
  std::uint16_t expect = 0;
  for (const auto& w : port->writes) {
    for (auto& ev : parser.feed(w.bytes)) CHECK(std::get<frame::SegmentFrame>(ev).header.seg_index == expect++);
  }
  CHECK(completed);
  CHECK(*h.last_write() - *h.first_write() == 17 * 60ms);
}

TEST_CASE("delay is configurable", "[bridge]") {
  sim::Simulator sim;
  auto port = std::make_shared<RecordingPort>(sim);
  Bridge b(sim, port);
  SECTION("zero delay writes back to back") {
    b.set_inter_segment_delay(0ms);
    b.send(Bytes(2000, 1), kPeerB);
    sim.run();
    REQUIRE(port->writes.size() == 18);
    CHECK(port->writes.back().at == kEpoch);
  }
  SECTION("10 ms") {
    b.set_inter_segment_delay(10ms);
    b.send(Bytes(2000, 1), kPeerB);
    sim.run();
    CHECK(port->writes.back().at - port->writes.front().at == 170ms);
  }
  SECTION("negative delay rejected") { CHECK_THROWS_AS(b.set_inter_segment_delay(-1ms), std::invalid_argument); }
}

TEST_CASE("pacing spans consecutive messages", "[bridge]") {
  sim::Simulator sim;
  auto port = std::make_shared<RecordingPort>(sim);
  Bridge b(sim, port);
  b.send(to_bytes("one"), kPeerB);
  b.send(to_bytes("two"), kPeerB);
  sim.run();
  REQUIRE(port->writes.size() == 2);
  CHECK(port->writes[1].at - port->writes[0].at == 60ms);
}

TEST_CASE("send on a closed port", "[bridge]") {
  sim::Simulator sim;
  auto port = std::make_shared<RecordingPort>(sim);
  Bridge b(sim, port);
  CHECK_THROWS_AS(b.send(Bytes{}, kPeerB), SizeError);
  CHECK_THROWS_AS(b.send(Bytes(2001, 0), kPeerB), SizeError);
  port->close();
  CHECK_THROWS_AS(b.send(to_bytes("hi"), kPeerB), TransportError);
}

TEST_CASE("port closing mid-message fails the handle", "[bridge]") {
  sim::Simulator sim;
  auto port = std::make_shared<RecordingPort>(sim);
  Bridge b(sim, port);
  std::vector<EventKind> events;
  b.on_event([&](const Event& e) { events.push_back(e.kind); });
  auto h = b.send(Bytes(1000, 7), kPeerB);
  sim.run_until(kEpoch + 100ms);
  port->close();
  sim.run();
  CHECK(h.failed());
  CHECK(b.pending_frames() == 0);
  CHECK(events == std::vector<EventKind>{EventKind::transport_error});
}

TEST_CASE("loss-free pipe delivers every message intact", "[bridge]") {
  sim::Simulator sim;
  auto [a_end, b_end] = make_memory_pipe(sim, PipeOptions{115200});
  Bridge a(sim, a_end);
  Bridge b(sim, b_end);
  std::vector<Delivery> got;
  b.on_delivery([&](const Delivery& d) { got.push_back(d); });
  std::mt19937_64 rng(17);
  std::vector<Bytes> sent;
  for (int i = 0; i < 40; ++i) {
    sent.push_back(testing::random_bytes(rng, 1 + rng() % 2000));
    a.send(sent.back(), kPeerA);
  }
  sim.run();
  REQUIRE(got.size() == sent.size());
  for (std::size_t i = 0; i < sent.size(); ++i) {
    CHECK(got[i].payload == sent[i]);
    CHECK(got[i].source == kPeerA);
  }
  CHECK(b.partial_messages() == 0);
}

TEST_CASE("interleaved sources reassemble independently", "[bridge]") {
  sim::Simulator sim;
  auto port = std::make_shared<RecordingPort>(sim);
  Bridge b(sim, port);
  std::vector<Delivery> got;
  b.on_delivery([&](const Delivery& d) { got.push_back(d); });

  auto pa = payload_of(900, 1), pb = payload_of(900, 2);
  auto fa = frame::encode_message(pa, kPeerA, 5);
  auto fb = frame::encode_message(pb, kPeerB, 5);  // same msg_id, other source
  REQUIRE(fa.size() == fb.size());
  for (std::size_t i = 0; i < fa.size(); ++i) {
    port->inject(fa[i]);
    port->inject(fb[i]);
  }
  REQUIRE(got.size() == 2);
  CHECK(got[0].source == kPeerA);
  CHECK(got[0].payload == pa);
  CHECK(got[1].source == kPeerB);
  CHECK(got[1].payload == pb);
}

TEST_CASE("partial message times out without delivery", "[bridge]") {
  sim::Simulator sim;
  auto port = std::make_shared<RecordingPort>(sim);
  Bridge b(sim, port);
  int deliveries = 0;
  std::vector<Event> events;
  b.on_delivery([&](const Delivery&) { ++deliveries; });
  b.on_event([&](const Event& e) { events.push_back(e); });
  auto frames = frame::encode_message(Bytes(500, 3), kPeerA, 9);
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) port->inject(frames[i]);
  CHECK(b.partial_messages() == 1);
  sim.run_until(kEpoch + 9999ms);
  CHECK(events.empty());
  sim.run_until(kEpoch + 10s);
  CHECK(b.partial_messages() == 0);
  REQUIRE(events.size() == 1);
  CHECK(events[0].kind == EventKind::timeout);
  CHECK(events[0].msg_id == 9);
  // The late final frame alone cannot complete the message.
  port->inject(frames.back());
  CHECK(deliveries == 0);
  REQUIRE(events.size() == 2);
  CHECK(events[1].kind == EventKind::incomplete);
}

TEST_CASE("length mismatch discards the message", "[bridge]") {
  sim::Simulator sim;
  auto port = std::make_shared<RecordingPort>(sim);
  Bridge b(sim, port);
  int deliveries = 0;
  std::vector<EventKind> events;
  b.on_delivery([&](const Delivery&) { ++deliveries; });
  b.on_event([&](const Event& e) { events.push_back(e.kind); });
  auto frames = frame::segment_message(Bytes(300, 3), kPeerA, 1);
  *frames.back().total_len += 2;
  for (const auto& f : frames) port->inject(f.serialize());
  CHECK(deliveries == 0);
  CHECK(events == std::vector<EventKind>{EventKind::length_mismatch});
  CHECK(b.partial_messages() == 0);
}

TEST_CASE("duplicate frames", "[bridge]") {
  sim::Simulator sim;
  auto port = std::make_shared<RecordingPort>(sim);
  Bridge b(sim, port);
  std::vector<Bytes> got;
  std::vector<EventKind> events;
  b.on_delivery([&](const Delivery& d) { got.push_back(d.payload); });
  b.on_event([&](const Event& e) { events.push_back(e.kind); });
  auto payload = payload_of(600, 4);
  auto frames = frame::segment_message(payload, kPeerA, 2);

  SECTION("identical copy is harmless") {
    port->inject(frames[0].serialize());
    port->inject(frames[0].serialize());
    for (std::size_t i = 1; i < frames.size(); ++i) port->inject(frames[i].serialize());
    REQUIRE(got.size() == 1);
    CHECK(got[0] == payload);
    CHECK(events.empty());
  }
  SECTION("conflicting copy discards the message") {
    port->inject(frames[0].serialize());
    auto altered = frames[0];
    altered.data[0] = altered.data[0] == 'A' ? 'B' : 'A';
    port->inject(altered.serialize());
    for (std::size_t i = 1; i < frames.size(); ++i) port->inject(frames[i].serialize());
    CHECK(got.empty());
    REQUIRE_FALSE(events.empty());
    CHECK(events[0] == EventKind::duplicate_conflict);
  }
}

TEST_CASE("reset drops queued and partial state", "[bridge]") {
  sim::Simulator sim;
  auto port = std::make_shared<RecordingPort>(sim);
  Bridge b(sim, port);
  b.send(Bytes(2000, 1), kPeerB);
  sim.run_until(kEpoch + 100ms);
  auto frames = frame::encode_message(Bytes(500, 2), kPeerA, 1);
  port->inject(frames[0]);
  b.reset();
  CHECK(b.pending_frames() == 0);
  CHECK(b.partial_messages() == 0);
  auto before = port->writes.size();
  sim.run();
  CHECK(port->writes.size() == before);
}
