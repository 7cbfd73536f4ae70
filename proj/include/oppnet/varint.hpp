/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>
#include <cstdint>

#include "oppnet/common.hpp"

namespace oppnet::varint {

// Unsigned LEB128, as used by multiformats unsigned-varint.

constexpr std::size_t encoded_size(std::uint64_t value) {
  std::size_t n = 1;
  while (value >= 0x80) {
    value >>= 7;
    ++n;
  }
  return n;
}

inline void write(Bytes& out, std::uint64_t value) {
  while (value >= 0x80) {
    out.push_back(static_cast<std::uint8_t>(value | 0x80));
    value >>= 7;
  }
  out.push_back(static_cast<std::uint8_t>(value));
}

enum class Status { ok, incomplete, malformed };

struct Decoded {
  Status status = Status::incomplete;
  std::uint64_t value = 0;
  std::size_t size = 0;
};

/// `incomplete` when `in` ends inside the varint; `malformed` past 10 bytes.
inline Decoded read(ByteView in) {
  std::uint64_t value = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (i == 10) return {Status::malformed, 0, 0};
    value |= static_cast<std::uint64_t>(in[i] & 0x7F) << (7 * i);
    if ((in[i] & 0x80) == 0) return {Status::ok, value, i + 1};
  }
  return {in.size() >= 10 ? Status::malformed : Status::incomplete, 0, 0};
}

}  // namespace oppnet::varint
