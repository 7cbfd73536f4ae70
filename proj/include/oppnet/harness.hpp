/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oppnet/bridge.hpp"
#include "oppnet/mesh.hpp"
#include "oppnet/sim.hpp"

namespace oppnet::harness {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct NodeSpec {
  std::string name;
  sim::Position position;
  std::uint16_t unicast = 0;
  std::vector<std::uint16_t> groups{0xC000};
};

struct LinkSpec {
  std::string a;
  std::string b;
  sim::LinkModel model;
};

/// Receiver placement and the sender-receiver link model for one
/// measurement position.
struct PositionSpec {
  std::string name;
  std::optional<sim::Position> receiver_at;
  double base_latency_ms = 0.0;
  double jitter_ms = 0.0;
  double loss_p = 0.0;
};

struct ChurnSpec {
  std::string node;
  std::optional<double> leave_s;
  std::optional<double> join_s;
};

struct ScenarioConfig {
  std::string name;
  std::uint64_t seed = 1;
  std::size_t packet_count = 100;
  double send_interval_s = 9.0;
  /// Zero disables the liveness probe.
  double keep_alive_s = 540.0;
  std::size_t message_size_bytes = 2000;
  std::string topic = "oppnet/measurements";
  bool strict_floodsub = false;
  unsigned serial_baud = 115200;

  std::string sender;
  std::string receiver;
  mesh::MeshConfig mesh;
  bridge::BridgeConfig bridge;
  std::vector<NodeSpec> nodes;
  std::vector<LinkSpec> links;
  std::vector<PositionSpec> positions;
  /// Name of the applied position, if any.
  std::string position;
  std::vector<ChurnSpec> churn;

  /// Throws ConfigError.
  void validate() const;
  /// Moves the receiver and replaces the sender-receiver link parameters.
  /// Throws ConfigError for an unknown position.
  void select_position(const std::string& name);
  const NodeSpec& node(const std::string& name) const;
};

/// Parses the YAML scenario format. The `position` key, when present, is
/// applied. Throws ConfigError.
ScenarioConfig parse_scenario(std::string_view text);
ScenarioConfig load_scenario(const std::filesystem::path& path);

enum class PacketStatus { delivered, lost };

struct PacketRecord {
  std::size_t index = 0;
  double sent_ms = 0.0;
  std::optional<double> recv_ms;
  std::optional<double> latency_ms;
  PacketStatus status = PacketStatus::lost;

  // Where a delivered packet spent its time.
  /// Publish until the records reached the bridge (keep-alive hold).
  std::optional<double> hold_ms;
  /// Waiting in the bridge queue for the first frame write.
  std::optional<double> bridge_queue_ms;
  /// First to last frame write on the serial line.
  std::optional<double> bridge_write_ms;
  /// Last frame write to delivery: serial line, radio and reassembly.
  std::optional<double> radio_ms;
};

struct RunReport {
  std::vector<PacketRecord> records;
  std::size_t sent = 0;
  std::size_t delivered = 0;
  /// Percent.
  double pdr = 0.0;
  /// Over delivered packets; empty when nothing was delivered.
  std::optional<double> mean_latency_ms;
  std::optional<double> stddev_latency_ms;
  std::optional<double> min_latency_ms;
  std::optional<double> max_latency_ms;
  /// Population standard deviation of the delivered latencies up to each
  /// index; empty until the first delivery.
  std::vector<std::optional<double>> stddev_series;

  std::uint64_t seed = 0;
  std::optional<double> ready_ms;
  std::uint64_t keep_alive_probes = 0;
};

/// Throws std::invalid_argument when `records` is empty.
RunReport report_stats(std::vector<PacketRecord> records);

/// Runs one simulated two-node measurement. Throws ConfigError for an
/// invalid scenario and Error when no connection could be established.
RunReport run_experiment(const ScenarioConfig& config);

/// index,sent_ms,recv_ms,latency_ms,status
void write_csv(std::ostream& out, const RunReport& report);
/// index,hold_ms,bridge_queue_ms,bridge_write_ms,radio_ms
void write_breakdown_csv(std::ostream& out, const RunReport& report);
std::string format_summary(const RunReport& report);

/// Milliseconds with three decimals, as written to CSV.
std::string format_ms(double ms);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// Wilson score interval for a binomial proportion.
Interval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054);

/// Command-line entry point. Returns 0 on success, 1 on runtime or
/// configuration errors, 2 on usage errors.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace oppnet::harness
