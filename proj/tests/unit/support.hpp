/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oppnet/common.hpp"

namespace testing {

inline std::string golden_path(const std::string& name) { return std::string(OPPNET_GOLDEN_DIR) + "/" + name; }
inline std::string scenario_path(const std::string& name) { return std::string(OPPNET_SCENARIO_DIR) + "/" + name; }

inline oppnet::Bytes unhex(const std::string& hex) {
  oppnet::Bytes out;
  for (std::size_t i = 0; i + 1 < hex.size(); i += 2) {
    out.push_back(static_cast<std::uint8_t>(std::stoul(hex.substr(i, 2), nullptr, 16)));
  }
  return out;
}

inline std::string hex(oppnet::ByteView b) {
  static const char* digits = "0123456789ABCDEF";
  std::string s;
  for (auto c : b) {
    s += digits[c >> 4];
    s += digits[c & 0xF];
  }
  return s;
}

/// Non-comment lines of a text fixture.
inline std::vector<std::string> fixture_lines(const std::string& name) {
  std::ifstream in(golden_path(name));
  if (!in) throw std::runtime_error("missing fixture " + name);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  }
  return lines;
}

inline oppnet::Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  oppnet::Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

}  // namespace testing
