/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include <catch_amalgamated.hpp>

#include <cmath>
#include <memory>

#include "oppnet/mesh.hpp"

using namespace oppnet;
using namespace oppnet::mesh;
using namespace std::chrono_literals;

namespace {

const MeshAddress kGroup{0xC000};

struct Net {
  explicit Net(std::uint64_t seed = 1) : medium(sim, seed), network(medium) {}

  MeshClient& add(const std::string& name, sim::Position at, std::uint16_t unicast, MeshConfig cfg = {},
                  std::set<MeshAddress> groups = {kGroup}) {
    auto id = medium.add_node(name, at);
    clients.push_back(std::make_unique<MeshClient>(network, id, cfg));
    auto& c = *clients.back();
    c.provision(MeshAddress(unicast), groups);
    received.emplace_back();
    auto* sink = &received.back();
    c.on_receive([sink](const Received& r) { sink->push_back(r); });
    return c;
  }

  void link(std::size_t a, std::size_t b, sim::LinkModel m = {}) { medium.set_link(a, b, m); }

  sim::Simulator sim;
  sim::RadioMedium medium;
  MeshNetwork network;
  std::vector<std::unique_ptr<MeshClient>> clients;
  std::deque<std::vector<Received>> received;
};

Bytes bytes(std::size_t n) {
  Bytes b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(i);
  return b;
}

}  // namespace

TEST_CASE("average transmission time", "[mesh]") {
  MeshConfig c;
  c.t_count = 0;
  for (unsigned t_int : {0u, 20u, 50u}) {
    c.t_int_ms = t_int;
    CHECK(avg_tx_time(c, 1) == 10ms);
    CHECK(avg_tx_time(c, 32) == 320ms);
  }
  c.t_count = 2;
  c.t_int_ms = 20;
  CHECK(avg_tx_time(c, 1) == 70ms);
  CHECK_THROWS_AS(avg_tx_time(c, 0), std::invalid_argument);
}

TEST_CASE("average transmission time is linear and monotone", "[mesh]") {
  for (unsigned t_count = 0; t_count <= 6; ++t_count) {
    for (unsigned t_int = 0; t_int <= 100; t_int += 10) {
      MeshConfig c;
      c.t_count = t_count;
      c.t_int_ms = t_int;
      auto one = avg_tx_time(c, 1);
      for (std::size_t n = 1; n <= 32; ++n) REQUIRE(avg_tx_time(c, n) == one * static_cast<std::int64_t>(n));
      MeshConfig more_count = c, more_int = c;
      ++more_count.t_count;
      more_int.t_int_ms += 10;
      REQUIRE(avg_tx_time(more_count, 5) >= avg_tx_time(c, 5));
      REQUIRE(avg_tx_time(more_int, 5) >= avg_tx_time(c, 5));
    }
  }
}

TEST_CASE("segment interval", "[mesh]") {
  CHECK(seg_interval(5) == 60ms);
  CHECK(seg_interval(0) == 10ms);
  MeshConfig c;
  CHECK(inter_segment_time(c, 32) == 1920ms);
  CHECK(segment_slot(c) == 120ms);
}

TEST_CASE("config validation", "[mesh]") {
  MeshConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.max_payload() == 384);
  c.unsegmented_max = 384;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  // A full 255-byte bridge frame needs 22 segments, within the cap.
  CHECK(segment_count(MeshConfig{}, 255) == 22);
  CHECK(segment_count(MeshConfig{}, 11) == 1);
  CHECK(segment_count(MeshConfig{}, 12) == 1);
  CHECK(segment_count(MeshConfig{}, 13) == 2);
}

TEST_CASE("unsegmented send completes after one transmission slot", "[mesh]") {
  Net n;
  MeshConfig cfg;
  cfg.t_count = 0;
  n.add("a", {}, 1, cfg);
  n.add("b", {}, 2, cfg);
  n.link(0, 1);
  std::optional<SendResult> result;
  n.clients[0]->send(MeshAddress(2), bytes(11), [&](const SendResult& r) { result = r; });
  n.sim.run();
  REQUIRE(result);
  CHECK(result->status == Completion::unacknowledged);
  CHECK(result->finished - result->started == 10ms);
  CHECK(result->transmissions == 1);
  REQUIRE(n.received[1].size() == 1);
  CHECK(n.received[1][0].payload == bytes(11));
}

TEST_CASE("a full bridge frame takes 22 acknowledged segments", "[mesh]") {
  Net n;
  n.add("a", {}, 1);
  n.add("b", {}, 2);
  n.link(0, 1);
  std::optional<SendResult> result;
  n.clients[0]->send(MeshAddress(2), bytes(255), [&](const SendResult& r) { result = r; });
  n.sim.run();
  REQUIRE(result);
  CHECK(result->status == Completion::acked);
  CHECK(result->segments == 22);
  CHECK(result->transmissions == 22);
  CHECK(result->finished - result->started >= 21 * 60ms);
  REQUIRE(n.received[1].size() == 1);
  CHECK(n.received[1][0].payload == bytes(255));
}

TEST_CASE("oversized payloads are rejected", "[mesh]") {
  Net n;
  auto& a = n.add("a", {}, 1);
  CHECK_THROWS_AS(a.send(MeshAddress(2), bytes(385)), SizeError);
  CHECK_THROWS_AS(a.send(MeshAddress(2), Bytes{}), SizeError);
}

TEST_CASE("certain loss exhausts the retry budget", "[mesh]") {
  Net n;
  n.add("a", {}, 1);
  n.add("b", {}, 2);
  sim::LinkModel lost;
  lost.loss_p = 1.0;
  n.link(0, 1, lost);
  std::optional<SendResult> result;
  n.clients[0]->send(MeshAddress(2), bytes(12), [&](const SendResult& r) { result = r; });
  n.sim.run();
  REQUIRE(result);
  CHECK(result->status == Completion::failed);
  CHECK(result->transmissions == 2);
  CHECK(n.received[1].empty());
}

TEST_CASE("a failed segment ends the message", "[mesh]") {
  Net n;
  n.add("a", {}, 1);
  n.add("b", {}, 2);
  sim::LinkModel lost;
  lost.loss_p = 1.0;
  n.link(0, 1, lost);
  std::optional<SendResult> result;
  n.clients[0]->send(MeshAddress(2), bytes(120), [&](const SendResult& r) { result = r; });
  n.sim.run();
  REQUIRE(result);
  CHECK(result->status == Completion::failed);
  CHECK(result->segments == 10);
  // Abandoned at the first exhausted segment, before every retry is spent.
  CHECK(result->transmissions >= 11);
  CHECK(result->transmissions < 20);
}

TEST_CASE("unknown or unreachable destination fails", "[mesh]") {
  Net n;
  n.add("a", {0, 0}, 1);
  n.add("b", {500, 0}, 2);
  sim::LinkModel short_range;
  short_range.max_range_m = 100;
  n.link(0, 1, short_range);
  std::vector<Completion> results;
  n.clients[0]->send(MeshAddress(2), bytes(20), [&](const SendResult& r) { results.push_back(r.status); });
  n.clients[0]->send(MeshAddress(9), bytes(20), [&](const SendResult& r) { results.push_back(r.status); });
  n.sim.run();
  CHECK(results == std::vector{Completion::failed, Completion::failed});
}

TEST_CASE("presence reaches every group member in range", "[mesh]") {
  SECTION("two nodes") {
    Net n;
    n.add("a", {}, 1);
    n.add("b", {}, 2);
    n.link(0, 1);
    n.clients[0]->broadcast_presence("peer-a");
    n.clients[1]->broadcast_presence("peer-b");
    n.sim.run();
    REQUIRE(n.received[0].size() == 1);
    REQUIRE(n.received[1].size() == 1);
    CHECK(to_string(n.received[1][0].payload) == "peer-a");
    CHECK(n.received[1][0].opcode == Opcode::presence);
    CHECK(n.received[1][0].src == MeshAddress(1));
    CHECK(to_string(n.received[0][0].payload) == "peer-b");
  }
  SECTION("single node") {
    Net n;
    n.add("a", {}, 1);
    n.clients[0]->broadcast_presence("peer-a");
    n.sim.run();
    CHECK(n.received[0].empty());
  }
  SECTION("one of three out of range") {
    Net n;
    n.add("a", {0, 0}, 1);
    n.add("b", {10, 0}, 2);
    n.add("c", {900, 0}, 3);
    sim::LinkModel m;
    m.max_range_m = 50;
    n.link(0, 1, m);
    n.link(0, 2, m);
    n.link(1, 2, m);
    for (auto& c : n.clients) c->broadcast_presence("x");
    n.sim.run();
    std::size_t total = 0;
    for (const auto& r : n.received) total += r.size();
    CHECK(total == 2);
    CHECK(n.received[2].empty());
  }
}

TEST_CASE("group delivery filter", "[mesh]") {
  Net n;
  const MeshAddress other{0xC001};
  n.add("a", {0, 0}, 1);
  n.add("b", {1, 0}, 2, {}, {kGroup});
  n.add("c", {2, 0}, 3, {}, {other});
  n.add("d", {900, 0}, 4, {}, {kGroup});
  sim::LinkModel m;
  m.max_range_m = 50;
  for (std::size_t i = 1; i < 4; ++i) n.link(0, i, m);
  std::optional<SendResult> result;
  n.clients[0]->send(kGroup, bytes(40), [&](const SendResult& r) { result = r; });
  n.sim.run();
  CHECK(n.received[1].size() == 1);
  CHECK(n.received[2].empty());
  CHECK(n.received[3].empty());
  REQUIRE(result);
  CHECK(result->status == Completion::unacknowledged);
  // Four segments, each sent once plus two repeats.
  CHECK(result->transmissions == 12);
}

TEST_CASE("provisioning rules", "[mesh]") {
  Net n;
  n.add("a", {}, 1);
  auto id = n.medium.add_node("b", {});
  MeshClient b(n.network, id);
  CHECK_THROWS_AS(b.provision(MeshAddress(1), {}), std::invalid_argument);
  CHECK_THROWS_AS(b.provision(MeshAddress(0xC000), {}), std::invalid_argument);
  CHECK_THROWS_AS(b.provision(MeshAddress(5), {MeshAddress(7)}), std::invalid_argument);
  CHECK_NOTHROW(b.provision(MeshAddress(2), {kGroup}));
  CHECK(n.network.find(MeshAddress(2)) == &b);
}

TEST_CASE("relay extends reach by one hop", "[mesh]") {
  MeshConfig relay;
  relay.relay = true;
  relay.ttl = 2;
  Net n;
  n.add("a", {0, 0}, 1, relay);
  n.add("b", {40, 0}, 2, relay);
  n.add("c", {80, 0}, 3, relay);
  sim::LinkModel m;
  m.max_range_m = 50;
  n.link(0, 1, m);
  n.link(1, 2, m);
  n.link(0, 2, m);  // 80 m: out of range
  std::optional<SendResult> result;
  n.clients[0]->send(MeshAddress(3), bytes(30), [&](const SendResult& r) { result = r; });
  n.sim.run();
  REQUIRE(result);
  CHECK(result->status == Completion::acked);
  REQUIRE(n.received[2].size() == 1);
  CHECK(n.received[2][0].payload == bytes(30));
  CHECK(n.received[1].empty());
}

TEST_CASE("messages are sent one at a time in order", "[mesh]") {
  Net n;
  n.add("a", {}, 1);
  n.add("b", {}, 2);
  n.link(0, 1);
  for (std::uint8_t i = 0; i < 5; ++i) n.clients[0]->send(MeshAddress(2), Bytes(40, i));
  CHECK(n.clients[0]->queued() == 5);
  n.sim.run();
  REQUIRE(n.received[1].size() == 5);
  for (std::uint8_t i = 0; i < 5; ++i) CHECK(n.received[1][i].payload == Bytes(40, i));
}

TEST_CASE("reset fails everything in flight", "[mesh]") {
  Net n;
  n.add("a", {}, 1);
  n.add("b", {}, 2);
  n.link(0, 1);
  std::vector<Completion> results;
  for (int i = 0; i < 3; ++i) {
    n.clients[0]->send(MeshAddress(2), bytes(200), [&](const SendResult& r) { results.push_back(r.status); });
  }
  n.sim.run_until(kEpoch + 500ms);
  n.clients[0]->reset();
  n.sim.run();
  CHECK(results == std::vector(3, Completion::failed));
  CHECK(n.clients[0]->queued() == 0);
}

TEST_CASE("per-segment delivery matches 1 - p^(r+1)", "[mesh]") {
  const std::size_t trials = 4000;
  for (bool group : {false, true}) {
    for (double p : {0.1, 0.4}) {
      for (unsigned r : {0u, 2u}) {
        MeshConfig cfg;
        cfg.retries_unicast = r;
        cfg.retries_multicast = r;
        Net n(1234 + r);
        n.add("a", {}, 1, cfg);
        n.add("b", {}, 2, cfg);
        sim::LinkModel m;
        m.loss_p = p;
        m.base_latency_ms = 5;
        n.link(0, 1, m);
        MeshAddress dst = group ? kGroup : MeshAddress(2);
        for (std::size_t i = 0; i < trials; ++i) n.clients[0]->send(dst, bytes(12));
        n.sim.run();
        double expected = 1.0 - std::pow(p, r + 1);
        double got = static_cast<double>(n.received[1].size()) / trials;
        double sd = std::sqrt(expected * (1 - expected) / trials);
        INFO("group=" << group << " p=" << p << " r=" << r << " got=" << got << " expected=" << expected);
        CHECK(std::abs(got - expected) <= 3.3 * sd + 0.5 / trials);
      }
    }
  }
}

TEST_CASE("serial gateway bridges frames and rewrites the source", "[mesh]") {
  Net n;
  auto& a = n.add("a", {}, 0x23);
  auto& b = n.add("b", {}, 0x27);
  n.link(0, 1);
  auto [host_a, radio_a] = make_memory_pipe(n.sim, PipeOptions{0});
  auto [host_b, radio_b] = make_memory_pipe(n.sim, PipeOptions{0});
  SerialGateway ga(a, radio_a);
  SerialGateway gb(b, radio_b);
  a.on_receive([&](const Received& r) { ga.handle(r); });
  b.on_receive([&](const Received& r) { gb.handle(r); });

  Bytes at_b;
  host_b->on_receive([&](ByteView v) { append(at_b, v); });
  auto frames = frame::encode_message(to_bytes("over the air"), frame::device_address(0x27), 4);
  for (const auto& f : frames) host_a->write(f);
  n.sim.run();

  frame::StreamParser p;
  auto events = p.feed(at_b);
  REQUIRE(events.size() == 1);
  auto f = std::get<frame::SegmentFrame>(events[0]);
  CHECK(frame::mesh_address_of(f.address) == 0x23);
  CHECK(f.header.msg_id == 4);
  CHECK(to_string(frame::reassemble(std::vector{f})) == "over the air");
  CHECK(ga.stats().frames_out == 1);
  CHECK(gb.stats().frames_in == 1);
}
