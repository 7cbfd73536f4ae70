/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oppnet/harness.hpp"
#include "support.hpp"

using namespace oppnet;
using namespace oppnet::harness;

namespace {

const char* kMinimal = R"(
name: tiny
sender: a
receiver: b
nodes:
  - {name: a, x: 0, y: 0, unicast: "0x0001"}
  - {name: b, x: 3, y: 0, unicast: "0x0002"}
links:
  - {between: [a, b], base_latency_ms: 50, jitter_ms: 5, loss_p: 0}
positions:
  - {name: far, receiver_x: 20, receiver_y: 0, base_latency_ms: 90, jitter_ms: 20, loss_p: 0.1}
)";

PacketRecord delivered(std::size_t i, double latency) {
  PacketRecord r;
  r.index = i;
  r.sent_ms = 9000.0 * static_cast<double>(i);
  r.recv_ms = r.sent_ms + latency;
  r.latency_ms = latency;
  r.status = PacketStatus::delivered;
  return r;
}

PacketRecord lost(std::size_t i) {
  PacketRecord r;
  r.index = i;
  r.sent_ms = 9000.0 * static_cast<double>(i);
  return r;
}

int run_cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "oppnet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int rc = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return rc;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("scenario parsing", "[harness]") {
  auto c = parse_scenario(kMinimal);
  CHECK(c.name == "tiny");
  CHECK(c.packet_count == 100);
  CHECK(c.send_interval_s == 9.0);
  CHECK(c.message_size_bytes == 2000);
  CHECK(c.nodes.size() == 2);
  CHECK(c.node("b").unicast == 0x0002);
  CHECK(c.node("b").groups == std::vector<std::uint16_t>{0xC000});
  CHECK(c.links[0].model.base_latency_ms == 50.0);
  CHECK(c.position.empty());
  c.validate();

  c.select_position("far");
  CHECK(c.position == "far");
  CHECK(c.node("b").position.x == 20.0);
  CHECK(c.links[0].model.loss_p == 0.1);
  CHECK_THROWS_AS(c.select_position("near"), ConfigError);
}

TEST_CASE("scenario errors", "[harness]") {
  auto with = [](const std::string& extra) { return std::string(kMinimal) + extra; };
  CHECK_THROWS_AS(parse_scenario(with("colour: blue\n")), ConfigError);
  CHECK_THROWS_AS(parse_scenario(with("position: near\n")), ConfigError);
  CHECK_THROWS_AS(parse_scenario(with("mesh: {t_count: 2, speed: 3}\n")), ConfigError);
  CHECK_THROWS_AS(parse_scenario("sender: a\nreceiver: b\nnodes:\n  - {name: a, unicast: \"0xZZ\"}\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_scenario("nodes: [\n"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("sender: a\nreceiver: b\n"), ConfigError);

  auto c = parse_scenario(kMinimal);
  c.packet_count = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = parse_scenario(kMinimal);
  c.receiver = "a";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = parse_scenario(kMinimal);
  c.nodes[1].unicast = 0xC001;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = parse_scenario(kMinimal);
  c.churn.push_back({"b", 100.0, 50.0});
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("shipped scenarios load", "[harness]") {
  for (const char* name : {"home.scenario", "workshop.scenario"}) {
    auto c = load_scenario(testing::scenario_path(name));
    CHECK_NOTHROW(c.validate());
    CHECK_FALSE(c.position.empty());
    CHECK(c.message_size_bytes == 200);
  }
  CHECK_THROWS_AS(load_scenario("/nonexistent/none.scenario"), Error);
}

TEST_CASE("summary statistics", "[harness]") {
  SECTION("mean and spread") {
    auto rep = report_stats({delivered(0, 8000), delivered(1, 8000), delivered(2, 11000)});
    CHECK(rep.sent == 3);
    CHECK(rep.delivered == 3);
    CHECK(rep.pdr == 100.0);
    CHECK(*rep.mean_latency_ms == Catch::Approx(9000.0));
    CHECK(*rep.stddev_latency_ms == Catch::Approx(std::sqrt(2.0e6)));
    CHECK(*rep.min_latency_ms == 8000.0);
    CHECK(*rep.max_latency_ms == 11000.0);
    REQUIRE(rep.stddev_series.size() == 3);
    CHECK(*rep.stddev_series[0] == 0.0);
    CHECK(*rep.stddev_series[1] == 0.0);
    CHECK(*rep.stddev_series[2] == Catch::Approx(std::sqrt(2.0e6)));
  }
  SECTION("constant latency has no spread") {
    std::vector<PacketRecord> rs;
    for (std::size_t i = 0; i < 20; ++i) rs.push_back(delivered(i, 7777.5));
    auto rep = report_stats(rs);
    CHECK(*rep.stddev_latency_ms == 0.0);
  }
  SECTION("losses") {
    auto rep = report_stats({lost(0), delivered(1, 9000), lost(2), delivered(3, 8000)});
    CHECK(rep.delivered == 2);
    CHECK(rep.pdr == 50.0);
    CHECK(*rep.mean_latency_ms == 8500.0);
    CHECK_FALSE(rep.stddev_series[0]);
    CHECK(rep.stddev_series[1]);
  }
  SECTION("single packet") {
    auto rep = report_stats({delivered(0, 1)});
    CHECK(rep.pdr == 100.0);
  }
  SECTION("nothing delivered") {
    auto rep = report_stats({lost(0), lost(1)});
    CHECK(rep.pdr == 0.0);
    CHECK_FALSE(rep.mean_latency_ms);
    CHECK(format_summary(rep).find("mean_latency_ms=undefined") != std::string::npos);
  }
  CHECK_THROWS_AS(report_stats({}), std::invalid_argument);
}

TEST_CASE("csv output", "[harness]") {
  auto rep = report_stats({delivered(0, 8123.4567), lost(1)});
  std::ostringstream os;
  write_csv(os, rep);
  CHECK(os.str() ==
        "index,sent_ms,recv_ms,latency_ms,status\n"
        "0,0.000,8123.457,8123.457,delivered\n"
        "1,9000.000,,,lost\n");
  CHECK(format_ms(1.0005) == "1.000");
  CHECK(format_ms(-2.5) == "-2.500");
}

TEST_CASE("wilson interval", "[harness]") {
  auto ci = wilson_interval(50, 100);
  CHECK(ci.low == Catch::Approx(0.40383).epsilon(1e-4));
  CHECK(ci.high == Catch::Approx(0.59617).epsilon(1e-4));
  auto all = wilson_interval(100, 100);
  CHECK(all.high == 1.0);
  CHECK(all.low == Catch::Approx(0.96301).epsilon(1e-4));
  CHECK(wilson_interval(0, 10).low == 0.0);
  CHECK_THROWS_AS(wilson_interval(1, 0), std::invalid_argument);
  CHECK_THROWS_AS(wilson_interval(3, 2), std::invalid_argument);
}

TEST_CASE("experiment runs are deterministic", "[harness]") {
  auto c = parse_scenario(kMinimal);
  c.packet_count = 5;
  c.message_size_bytes = 100;
  auto a = run_experiment(c);
  auto b = run_experiment(c);
  std::ostringstream sa, sb;
  write_csv(sa, a);
  write_csv(sb, b);
  CHECK(sa.str() == sb.str());
  CHECK(a.sent == 5);
  CHECK(a.delivered == 5);
  for (std::size_t i = 1; i < a.records.size(); ++i) {
    CHECK(a.records[i].sent_ms - a.records[i - 1].sent_ms == Catch::Approx(9000.0));
  }
  c.seed = 2;
  std::ostringstream sc;
  write_csv(sc, run_experiment(c));
  CHECK(sc.str() != sa.str());
}

TEST_CASE("latency breakdown adds up", "[harness]") {
  auto c = parse_scenario(kMinimal);
  c.packet_count = 4;
  c.message_size_bytes = 150;
  auto rep = run_experiment(c);
  for (const auto& r : rep.records) {
    REQUIRE(r.status == PacketStatus::delivered);
    REQUIRE(r.hold_ms);
    double total = *r.hold_ms + *r.bridge_queue_ms + *r.bridge_write_ms + *r.radio_ms;
    CHECK(total == Catch::Approx(*r.latency_ms).margin(1e-6));
    CHECK(*r.bridge_write_ms >= 0.0);
  }
}

TEST_CASE("receiver leaving and rejoining", "[harness]") {
  auto c = parse_scenario(std::string(kMinimal) + "churn:\n  - {node: b, leave_s: 60, join_s: 150}\n");
  c.packet_count = 30;
  c.message_size_bytes = 40;
  auto rep = run_experiment(c);
  CHECK(rep.delivered < rep.sent);
  CHECK(rep.records.back().status == PacketStatus::delivered);
  for (const auto& r : rep.records) {
    if (r.status == PacketStatus::delivered) {
      bool during = *r.recv_ms > 60000.0 && *r.recv_ms < 150000.0;
      CHECK_FALSE(during);
    }
  }
}

TEST_CASE("unreachable receiver is an error", "[harness]") {
  auto c = parse_scenario(kMinimal);
  c.links[0].model.loss_p = 1.0;
  c.packet_count = 2;
  CHECK_THROWS_AS(run_experiment(c), Error);
}

TEST_CASE("command line", "[harness]") {
  auto home = std::string(testing::scenario_path("home.scenario"));
  auto dir = std::filesystem::temp_directory_path() / "oppnet_cli_test";
  std::filesystem::create_directories(dir);

  std::string out, err;
  CHECK(run_cli({"--bogus"}, &out, &err) == 2);
  CHECK(run_cli({"--scenario", home, "--packets", "0"}) == 2);
  CHECK(run_cli({}) == 2);
  CHECK(run_cli({"--scenario", "/nonexistent.scenario"}, &out, &err) == 1);
  CHECK(err.find("error:") == 0);
  CHECK(run_cli({"--scenario", home, "--position", "9"}) == 1);
  CHECK(run_cli({"--scenario", home, "--out", "/nonexistent/dir/out.csv"}, &out, &err) == 1);
  CHECK(run_cli({"--help"}, &out) == 0);
  CHECK(out.find("--scenario") != std::string::npos);

  auto csv = dir / "run.csv";
  REQUIRE(run_cli({"--scenario", home, "--packets", "3", "--out", csv.string()}, &out, &err) == 0);
  CHECK(out.find("packets_sent=3\n") != std::string::npos);
  CHECK(out.find("scenario=home position=1 seed=1\n") == 0);
  auto text = slurp(csv);
  CHECK(text.rfind("index,sent_ms,recv_ms,latency_ms,status\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);

  auto multi = dir / "multi.csv";
  REQUIRE(run_cli({"--scenario", home, "--packets", "2", "--runs", "3", "--out", multi.string()}, &out) == 0);
  CHECK(out.find("runs=3\n") != std::string::npos);
  for (int s = 1; s <= 3; ++s) CHECK(std::filesystem::exists(dir / ("multi-seed" + std::to_string(s) + ".csv")));
  std::filesystem::remove_all(dir);
}
