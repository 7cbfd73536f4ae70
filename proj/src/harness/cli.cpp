/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <future>
#include <thread>

#include "oppnet/harness.hpp"

namespace oppnet::harness {

namespace {

struct Options {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> packets;
  std::optional<double> interval_s;
  std::optional<std::size_t> message_bytes;
  std::optional<double> keep_alive_s;
  std::optional<std::string> position;
  std::string out;
  std::string breakdown;
  std::size_t runs = 1;
  bool strict = false;
};

void write_file(const std::filesystem::path& path, const RunReport& rep, bool breakdown) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  if (breakdown) {
    write_breakdown_csv(f, rep);
  } else {
    write_csv(f, rep);
  }
  if (!f.flush()) throw Error("failed writing " + path.string());
}

std::filesystem::path per_run(const std::string& base, std::uint64_t seed) {
  std::filesystem::path p(base);
  auto name = p.stem().string() + "-seed" + std::to_string(seed) + p.extension().string();
  return p.parent_path() / name;
}

std::vector<RunReport> run_all(const ScenarioConfig& base, std::size_t runs) {
  std::vector<RunReport> reports(runs);
  std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(runs, std::thread::hardware_concurrency()));
  std::vector<std::future<void>> pending;
  std::atomic<std::size_t> next{0};
  for (std::size_t w = 0; w < workers; ++w) {
    pending.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < runs; i = next++) {
        auto cfg = base;
        cfg.seed = base.seed + i;
        reports[i] = run_experiment(cfg);
      }
    }));
  }
  for (auto& f : pending) f.get();
  return reports;
}

std::string aggregate(const std::vector<RunReport>& reports) {
  std::size_t sent = 0, delivered = 0;
  double latency_sum = 0.0;
  std::vector<std::size_t> per_run;
  for (const auto& r : reports) {
    sent += r.sent;
    delivered += r.delivered;
    per_run.push_back(r.delivered);
    for (const auto& rec : r.records) {
      if (rec.latency_ms) latency_sum += *rec.latency_ms;
    }
  }
  std::sort(per_run.begin(), per_run.end());
  double median = per_run.size() % 2 == 1
                      ? static_cast<double>(per_run[per_run.size() / 2])
                      : 0.5 * static_cast<double>(per_run[per_run.size() / 2 - 1] + per_run[per_run.size() / 2]);
  auto ci = wilson_interval(delivered, sent);
  char buf[256];
  std::string s = "runs=" + std::to_string(reports.size()) + "\n";
  s += "total_sent=" + std::to_string(sent) + "\ntotal_delivered=" + std::to_string(delivered) + "\n";
  std::snprintf(buf, sizeof buf, "pdr_percent=%.2f\npdr_ci95_percent=[%.2f, %.2f]\nmedian_delivered=%.1f\n",
                100.0 * static_cast<double>(delivered) / static_cast<double>(sent), 100.0 * ci.low, 100.0 * ci.high,
                median);
  s += buf;
  if (delivered > 0) s += "mean_latency_ms=" + format_ms(latency_sum / static_cast<double>(delivered)) + "\n";
  return s;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Runs simulated publish/subscribe measurements over a Bluetooth Mesh bridge.", "oppnet"};
  Options o;
  app.add_option("--scenario", o.scenario, "Scenario file")->required();
  app.add_option("--seed", o.seed, "Random seed (default: from the scenario)");
  app.add_option("--packets", o.packets, "Packets to publish (default: from the scenario, else 100)")
      ->check(CLI::PositiveNumber);
  app.add_option("--interval-s", o.interval_s, "Seconds between packets (default: from the scenario, else 9)")
      ->check(CLI::PositiveNumber);
  app.add_option("--message-bytes", o.message_bytes,
                 "Payload bytes per packet (default: from the scenario, else 2000)")
      ->check(CLI::Range(4, 1 << 20));
  app.add_option("--keep-alive-s", o.keep_alive_s, "Liveness probe period, 0 disables (default: from the scenario)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--position", o.position, "Named receiver position from the scenario");
  app.add_option("--out", o.out, "CSV output path (with --runs > 1, one file per seed)");
  app.add_option("--breakdown", o.breakdown, "Per-packet latency breakdown CSV path");
  app.add_option("--runs", o.runs, "Independent runs with consecutive seeds")->check(CLI::PositiveNumber);
  app.add_flag("--strict-floodsub", o.strict, "Forward only to neighbours subscribed to the topic");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    auto cfg = load_scenario(o.scenario);
    if (o.position) cfg.select_position(*o.position);
    if (o.seed) cfg.seed = *o.seed;
    if (o.packets) cfg.packet_count = *o.packets;
    if (o.interval_s) cfg.send_interval_s = *o.interval_s;
    if (o.message_bytes) cfg.message_size_bytes = *o.message_bytes;
    if (o.keep_alive_s) cfg.keep_alive_s = *o.keep_alive_s;
    if (o.strict) cfg.strict_floodsub = true;
    cfg.validate();
    if (o.runs == 1) {
      // Fail on an unwritable path before spending time on the run.
      for (const auto& p : {o.out, o.breakdown}) {
        if (!p.empty() && !std::ofstream(p, std::ios::binary | std::ios::trunc)) throw Error("cannot write " + p);
      }
    }

    if (o.runs == 1) {
      auto rep = run_experiment(cfg);
      if (!o.out.empty()) write_file(o.out, rep, false);
      if (!o.breakdown.empty()) write_file(o.breakdown, rep, true);
      out << "scenario=" << cfg.name << (cfg.position.empty() ? "" : " position=" + cfg.position)
          << " seed=" << cfg.seed << "\n"
          << format_summary(rep);
      return 0;
    }

    auto reports = run_all(cfg, o.runs);
    for (const auto& rep : reports) {
      if (!o.out.empty()) write_file(per_run(o.out, rep.seed), rep, false);
      if (!o.breakdown.empty()) write_file(per_run(o.breakdown, rep.seed), rep, true);
    }
    out << "scenario=" << cfg.name << (cfg.position.empty() ? "" : " position=" + cfg.position)
        << " seeds=" << cfg.seed << ".." << cfg.seed + o.runs - 1 << "\n"
        << aggregate(reports);
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace oppnet::harness
