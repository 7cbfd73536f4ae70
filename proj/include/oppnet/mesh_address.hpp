/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace oppnet::mesh {

/// 16-bit Bluetooth Mesh address. Values in 0xC000..0xFFFF are groups,
/// 0x0001..0x7FFF unicast.
class MeshAddress {
 public:
  static constexpr std::uint16_t kGroupBase = 0xC000;

  constexpr MeshAddress() = default;
  constexpr explicit MeshAddress(std::uint16_t value) : value_(value) {}

  constexpr std::uint16_t value() const { return value_; }
  constexpr bool is_group() const { return value_ >= kGroupBase; }
  constexpr bool is_unicast() const { return value_ != 0 && value_ < 0x8000; }

  std::string str() const {
    static constexpr char digits[] = "0123456789ABCDEF";
    std::string s = "0x";
    for (int shift = 12; shift >= 0; shift -= 4) s += digits[(value_ >> shift) & 0xF];
    return s;
  }

  constexpr auto operator<=>(const MeshAddress&) const = default;

 private:
  std::uint16_t value_ = 0;
};

}  // namespace oppnet::mesh
