/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "oppnet/common.hpp"

/// Serial-wire framing between the host-side Bridge and the mesh radio.
///
/// A message is hex-encoded and cut into segments. Each segment travels as one
/// frame, laid out as
///
///   HEADER(13) DST(6) START(2) DATA(1..227) [LENGTH(4) END(3)]
///
/// where LENGTH and END are present only on the final segment. All integers
/// are big-endian. DATA is restricted to the uppercase hex alphabet, so the
/// start ("<<") and end (">>>") markers can never occur inside it.
namespace oppnet::frame {

inline constexpr std::size_t kHeaderSize = 13;
inline constexpr std::size_t kAddressSize = 6;
inline constexpr std::size_t kStartMarkerSize = 2;
inline constexpr std::size_t kLengthSize = 4;
inline constexpr std::size_t kEndMarkerSize = 3;
inline constexpr std::size_t kMaxData = 227;
inline constexpr std::size_t kMaxFrame = 255;
inline constexpr std::size_t kMaxPayload = 2000;
inline constexpr std::size_t kPrefixSize = kHeaderSize + kAddressSize + kStartMarkerSize;
inline constexpr std::size_t kTrailerSize = kLengthSize + kEndMarkerSize;

static_assert(kPrefixSize + kMaxData + kTrailerSize == kMaxFrame);

inline constexpr std::array<std::uint8_t, kStartMarkerSize> kStartMarker{0x3C, 0x3C};
inline constexpr std::array<std::uint8_t, kEndMarkerSize> kEndMarker{0x3E, 0x3E, 0x3E};

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint8_t kFinalFlag = 0x01;

/// 6-byte device address carried in the DST field. Mesh unicast and group
/// addresses occupy the two low-order bytes.
using DeviceAddress = std::array<std::uint8_t, kAddressSize>;

constexpr DeviceAddress device_address(std::uint16_t mesh_address) {
  return {0, 0, 0, 0, static_cast<std::uint8_t>(mesh_address >> 8),
          static_cast<std::uint8_t>(mesh_address & 0xFF)};
}

constexpr std::uint16_t mesh_address_of(const DeviceAddress& a) {
  return static_cast<std::uint16_t>((a[4] << 8) | a[5]);
}

struct MessageHeader {
  std::uint8_t version = kVersion;
  std::uint32_t msg_id = 0;
  std::uint16_t seg_index = 0;
  std::uint16_t seg_count = 1;
  std::uint16_t data_len = 0;
  std::uint8_t flags = 0;
  std::uint8_t reserved = 0;

  bool is_final() const { return (flags & kFinalFlag) != 0; }

  /// True iff every header invariant holds.
  bool valid() const;

  std::array<std::uint8_t, kHeaderSize> serialize() const;
  static MessageHeader parse(std::span<const std::uint8_t, kHeaderSize> bytes);

  bool operator==(const MessageHeader&) const = default;
};

struct SegmentFrame {
  MessageHeader header;
  DeviceAddress address{};
  Bytes data;
  /// Hex-encoded length of the whole message; final segment only.
  std::optional<std::uint32_t> total_len;

  std::size_t wire_size() const {
    return kPrefixSize + data.size() + (header.is_final() ? kTrailerSize : 0);
  }

  Bytes serialize() const;

  bool operator==(const SegmentFrame&) const = default;
};

/// Uppercase hex. Throws std::invalid_argument on empty input.
Bytes hex_encode(ByteView payload);

/// Accepts either case. Throws std::invalid_argument on odd length or a
/// non-hex character.
Bytes hex_decode(ByteView hex);

inline bool is_hex_digit(std::uint8_t c) {
  return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'F') || (c >= 'a' && c <= 'f');
}

/// Splits a payload into frames. Throws SizeError when the payload is empty or
/// longer than kMaxPayload.
std::vector<SegmentFrame> segment_message(ByteView payload, const DeviceAddress& dst,
                                          std::uint32_t msg_id);

/// segment_message() followed by serialization.
std::vector<Bytes> encode_message(ByteView payload, const DeviceAddress& dst, std::uint32_t msg_id);

inline std::size_t frame_count_for(std::size_t payload_len) {
  return (2 * payload_len + kMaxData - 1) / kMaxData;
}

enum class ParseErrorKind {
  /// Bytes skipped while hunting for a valid header + start marker.
  resync,
  /// A final frame whose END field is not ">>>".
  end_marker_mismatch,
};

struct ParseError {
  ParseErrorKind kind;
  std::size_t skipped = 0;
};

using ParseEvent = std::variant<SegmentFrame, ParseError>;

/// Incremental frame parser. Chunk boundaries do not affect the output.
class StreamParser {
 public:
  std::vector<ParseEvent> feed(ByteView chunk);

  /// Drops any buffered partial input.
  void reset();

  std::size_t buffered() const { return buffer_.size() - offset_; }

 private:
  void compact();

  Bytes buffer_;
  std::size_t offset_ = 0;
  std::size_t skipping_ = 0;
};

enum class ReassemblyErrorKind { incomplete, length_mismatch, inconsistent };

class ReassemblyError : public Error {
 public:
  ReassemblyError(ReassemblyErrorKind kind, const std::string& what)
      : Error(what), kind_(kind) {}
  ReassemblyErrorKind kind() const { return kind_; }

 private:
  ReassemblyErrorKind kind_;
};

/// Rebuilds the payload from the frames of one message, in any order.
/// Throws ReassemblyError when a segment is missing or duplicated, the frames
/// disagree on msg_id/seg_count, or the summed DATA length differs from the
/// final frame's LENGTH.
Bytes reassemble(std::span<const SegmentFrame> frames);

}  // namespace oppnet::frame
