/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "oppnet/harness.hpp"

namespace oppnet::harness {

namespace {

double population_stddev(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  double mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  return std::sqrt(sq / static_cast<double>(xs.size()));
}

std::string opt_ms(const std::optional<double>& v) { return v ? format_ms(*v) : std::string(); }

}  // namespace

std::string format_ms(double ms) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", ms);
  return buf;
}

RunReport report_stats(std::vector<PacketRecord> records) {
  if (records.empty()) throw std::invalid_argument("report_stats needs at least one record");
  RunReport rep;
  rep.sent = records.size();
  std::vector<double> latencies;
  rep.stddev_series.reserve(records.size());
  for (const auto& r : records) {
    if (r.status == PacketStatus::delivered && r.latency_ms) latencies.push_back(*r.latency_ms);
    rep.stddev_series.push_back(latencies.empty() ? std::nullopt : std::optional(population_stddev(latencies)));
  }
  rep.delivered = latencies.size();
  rep.pdr = 100.0 * static_cast<double>(rep.delivered) / static_cast<double>(rep.sent);
  if (!latencies.empty()) {
    double sum = 0.0;
    for (double x : latencies) sum += x;
    rep.mean_latency_ms = sum / static_cast<double>(latencies.size());
    rep.stddev_latency_ms = rep.stddev_series.back();
    rep.min_latency_ms = *std::min_element(latencies.begin(), latencies.end());
    rep.max_latency_ms = *std::max_element(latencies.begin(), latencies.end());
  }
  rep.records = std::move(records);
  return rep;
}

void write_csv(std::ostream& out, const RunReport& report) {
  out << "index,sent_ms,recv_ms,latency_ms,status\n";
  for (const auto& r : report.records) {
    out << r.index << ',' << format_ms(r.sent_ms) << ',' << opt_ms(r.recv_ms) << ',' << opt_ms(r.latency_ms) << ','
        << (r.status == PacketStatus::delivered ? "delivered" : "lost") << '\n';
  }
}

void write_breakdown_csv(std::ostream& out, const RunReport& report) {
  out << "index,hold_ms,bridge_queue_ms,bridge_write_ms,radio_ms\n";
  for (const auto& r : report.records) {
    out << r.index << ',' << opt_ms(r.hold_ms) << ',' << opt_ms(r.bridge_queue_ms) << ','
        << opt_ms(r.bridge_write_ms) << ',' << opt_ms(r.radio_ms) << '\n';
  }
}

std::string format_summary(const RunReport& report) {
  std::string s;
  s += "packets_sent=" + std::to_string(report.sent) + "\n";
  s += "packets_delivered=" + std::to_string(report.delivered) + "\n";
  char pdr[32];
  std::snprintf(pdr, sizeof pdr, "%.2f", report.pdr);
  s += std::string("pdr_percent=") + pdr + "\n";
  if (report.mean_latency_ms) {
    s += "mean_latency_ms=" + format_ms(*report.mean_latency_ms) + "\n";
    s += "stddev_latency_ms=" + format_ms(*report.stddev_latency_ms) + "\n";
    s += "min_latency_ms=" + format_ms(*report.min_latency_ms) + "\n";
    s += "max_latency_ms=" + format_ms(*report.max_latency_ms) + "\n";
  } else {
    s += "mean_latency_ms=undefined (no packet delivered)\n";
  }
  return s;
}

Interval wilson_interval(std::size_t successes, std::size_t trials, double z) {
  if (trials == 0) throw std::invalid_argument("wilson_interval needs at least one trial");
  if (successes > trials) throw std::invalid_argument("more successes than trials");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

}  // namespace oppnet::harness
