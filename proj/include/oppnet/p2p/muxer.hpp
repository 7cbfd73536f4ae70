/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <optional>

#include "oppnet/common.hpp"
#include "oppnet/varint.hpp"

namespace oppnet::p2p {

namespace mux_flag {
inline constexpr std::uint8_t syn = 0x01;
inline constexpr std::uint8_t fin = 0x02;
inline constexpr std::uint8_t data = 0x04;
inline constexpr std::uint8_t ping = 0x08;
inline constexpr std::uint8_t pong = 0x10;
// First frame of an application write; receivers resync on it after loss.
inline constexpr std::uint8_t start = 0x20;
}  // namespace mux_flag

/// varint(stream_id) || flags || varint(len) || payload. Stream 0 carries
/// connection-level ping/pong.
struct MuxFrame {
  std::uint64_t stream_id = 0;
  std::uint8_t flags = 0;
  Bytes payload;

  bool operator==(const MuxFrame&) const = default;
};

inline Bytes encode(const MuxFrame& f) {
  Bytes out;
  varint::write(out, f.stream_id);
  out.push_back(f.flags);
  varint::write(out, f.payload.size());
  append(out, f.payload);
  return out;
}

/// Decodes exactly one frame spanning all of `record`.
inline std::optional<MuxFrame> decode_mux_frame(ByteView record) {
  auto id = varint::read(record);
  if (id.status != varint::Status::ok || record.size() < id.size + 1) return std::nullopt;
  MuxFrame f;
  f.stream_id = id.value;
  f.flags = record[id.size];
  auto rest = record.subspan(id.size + 1);
  auto len = varint::read(rest);
  if (len.status != varint::Status::ok || rest.size() - len.size != len.value) return std::nullopt;
  f.payload.assign(rest.begin() + static_cast<std::ptrdiff_t>(len.size), rest.end());
  return f;
}

}  // namespace oppnet::p2p
