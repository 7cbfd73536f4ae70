/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "oppnet/frame.hpp"

#include <algorithm>
#include <stdexcept>

namespace oppnet::frame {

namespace {

constexpr char kHexDigits[] = "0123456789ABCDEF";

bool is_wire_hex(std::uint8_t c) { return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'F'); }

std::uint8_t nibble(std::uint8_t c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  throw std::invalid_argument("hex_decode: non-hex character");
}

void put_u16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 8);
  p[1] = static_cast<std::uint8_t>(v);
}

void put_u32(std::uint8_t* p, std::uint32_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 24);
  p[1] = static_cast<std::uint8_t>(v >> 16);
  p[2] = static_cast<std::uint8_t>(v >> 8);
  p[3] = static_cast<std::uint8_t>(v);
}

std::uint16_t get_u16(const std::uint8_t* p) { return static_cast<std::uint16_t>((p[0] << 8) | p[1]); }

std::uint32_t get_u32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

}  // namespace

bool MessageHeader::valid() const {
  if (version != kVersion || reserved != 0) return false;
  if ((flags & ~kFinalFlag) != 0) return false;
  if (seg_count == 0 || seg_index >= seg_count) return false;
  if (data_len == 0 || data_len > kMaxData) return false;
  return is_final() == (seg_index + 1 == seg_count);
}

std::array<std::uint8_t, kHeaderSize> MessageHeader::serialize() const {
  std::array<std::uint8_t, kHeaderSize> out{};
  out[0] = version;
  put_u32(&out[1], msg_id);
  put_u16(&out[5], seg_index);
  put_u16(&out[7], seg_count);
  put_u16(&out[9], data_len);
  out[11] = flags;
  out[12] = reserved;
  return out;
}

MessageHeader MessageHeader::parse(std::span<const std::uint8_t, kHeaderSize> b) {
  MessageHeader h;
  h.version = b[0];
  h.msg_id = get_u32(&b[1]);
  h.seg_index = get_u16(&b[5]);
  h.seg_count = get_u16(&b[7]);
  h.data_len = get_u16(&b[9]);
  h.flags = b[11];
  h.reserved = b[12];
  return h;
}

Bytes SegmentFrame::serialize() const {
  Bytes out;
  out.reserve(wire_size());
  auto h = header.serialize();
  out.insert(out.end(), h.begin(), h.end());
  out.insert(out.end(), address.begin(), address.end());
  out.insert(out.end(), kStartMarker.begin(), kStartMarker.end());
  out.insert(out.end(), data.begin(), data.end());
  if (header.is_final()) {
    std::uint8_t len[kLengthSize];
    put_u32(len, total_len.value_or(0));
    out.insert(out.end(), len, len + kLengthSize);
    out.insert(out.end(), kEndMarker.begin(), kEndMarker.end());
  }
  return out;
}

Bytes hex_encode(ByteView payload) {
  if (payload.empty()) throw std::invalid_argument("hex_encode: empty payload");
  Bytes out;
  out.reserve(payload.size() * 2);
  for (auto b : payload) {
    out.push_back(static_cast<std::uint8_t>(kHexDigits[b >> 4]));
    out.push_back(static_cast<std::uint8_t>(kHexDigits[b & 0x0F]));
  }
  return out;
}

Bytes hex_decode(ByteView hex) {
  if (hex.size() % 2 != 0) throw std::invalid_argument("hex_decode: odd length");
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    out.push_back(static_cast<std::uint8_t>((nibble(hex[i]) << 4) | nibble(hex[i + 1])));
  }
  return out;
}

std::vector<SegmentFrame> segment_message(ByteView payload, const DeviceAddress& dst,
                                          std::uint32_t msg_id) {
  if (payload.empty()) throw SizeError("payload is empty");
  if (payload.size() > kMaxPayload) {
    throw SizeError("payload of " + std::to_string(payload.size()) + " bytes exceeds " +
                    std::to_string(kMaxPayload));
  }
  Bytes hex = hex_encode(payload);
  auto count = static_cast<std::uint16_t>((hex.size() + kMaxData - 1) / kMaxData);

  std::vector<SegmentFrame> frames;
  frames.reserve(count);
  for (std::uint16_t i = 0; i < count; ++i) {
    std::size_t begin = static_cast<std::size_t>(i) * kMaxData;
    std::size_t end = std::min(hex.size(), begin + kMaxData);
    SegmentFrame f;
    f.header.msg_id = msg_id;
    f.header.seg_index = i;
    f.header.seg_count = count;
    f.header.data_len = static_cast<std::uint16_t>(end - begin);
    f.header.flags = (i + 1 == count) ? kFinalFlag : 0;
    f.address = dst;
    f.data.assign(hex.begin() + static_cast<std::ptrdiff_t>(begin),
                  hex.begin() + static_cast<std::ptrdiff_t>(end));
    if (f.header.is_final()) f.total_len = static_cast<std::uint32_t>(hex.size());
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<Bytes> encode_message(ByteView payload, const DeviceAddress& dst, std::uint32_t msg_id) {
  std::vector<Bytes> out;
  for (const auto& f : segment_message(payload, dst, msg_id)) out.push_back(f.serialize());
  return out;
}

void StreamParser::reset() {
  buffer_.clear();
  offset_ = 0;
  skipping_ = 0;
}

void StreamParser::compact() {
  if (offset_ > 4096 || offset_ == buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(offset_));
    offset_ = 0;
  }
}

std::vector<ParseEvent> StreamParser::feed(ByteView chunk) {
  buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
  std::vector<ParseEvent> events;

  auto skip_one = [&] {
    ++offset_;
    ++skipping_;
  };

  while (buffered() >= kPrefixSize) {
    const std::uint8_t* p = buffer_.data() + offset_;
    auto header = MessageHeader::parse(std::span<const std::uint8_t, kHeaderSize>(p, kHeaderSize));
    bool marker_ok = std::equal(kStartMarker.begin(), kStartMarker.end(), p + kHeaderSize + kAddressSize);
    if (!header.valid() || !marker_ok) {
      skip_one();
      continue;
    }
    std::size_t need = kPrefixSize + header.data_len + (header.is_final() ? kTrailerSize : 0);
    if (buffered() < need) {
      // A plausible header may still be noise; only wait if DATA so far is hex.
      std::size_t have = std::min(buffered() - kPrefixSize, static_cast<std::size_t>(header.data_len));
      if (std::all_of(p + kPrefixSize, p + kPrefixSize + have, is_wire_hex)) break;
      skip_one();
      continue;
    }
    const std::uint8_t* data = p + kPrefixSize;
    if (!std::all_of(data, data + header.data_len, is_wire_hex)) {
      skip_one();
      continue;
    }
    SegmentFrame f;
    f.header = header;
    std::copy(p + kHeaderSize, p + kHeaderSize + kAddressSize, f.address.begin());
    f.data.assign(data, data + header.data_len);
    if (header.is_final()) {
      const std::uint8_t* trailer = data + header.data_len;
      if (!std::equal(kEndMarker.begin(), kEndMarker.end(), trailer + kLengthSize)) {
        if (skipping_ > 0) events.emplace_back(ParseError{ParseErrorKind::resync, skipping_});
        skipping_ = 0;
        events.emplace_back(ParseError{ParseErrorKind::end_marker_mismatch, 0});
        ++offset_;
        continue;
      }
      f.total_len = get_u32(trailer);
    }
    if (skipping_ > 0) {
      events.emplace_back(ParseError{ParseErrorKind::resync, skipping_});
      skipping_ = 0;
    }
    offset_ += need;
    events.emplace_back(std::move(f));
  }
  compact();
  return events;
}

Bytes reassemble(std::span<const SegmentFrame> frames) {
  if (frames.empty()) throw ReassemblyError(ReassemblyErrorKind::incomplete, "no frames");
  const auto msg_id = frames.front().header.msg_id;
  const auto count = frames.front().header.seg_count;

  std::vector<const SegmentFrame*> slots(count, nullptr);
  for (const auto& f : frames) {
    if (f.header.msg_id != msg_id || f.header.seg_count != count || f.header.seg_index >= count) {
      throw ReassemblyError(ReassemblyErrorKind::inconsistent, "frames from different messages");
    }
    if (slots[f.header.seg_index] != nullptr) {
      throw ReassemblyError(ReassemblyErrorKind::inconsistent,
                            "segment " + std::to_string(f.header.seg_index) + " present twice");
    }
    slots[f.header.seg_index] = &f;
  }
  Bytes hex;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i] == nullptr) {
      throw ReassemblyError(ReassemblyErrorKind::incomplete,
                            "segment " + std::to_string(i) + " of " + std::to_string(count) + " missing");
    }
    append(hex, slots[i]->data);
  }
  const auto& last = *slots.back();
  if (!last.total_len || *last.total_len != hex.size()) {
    throw ReassemblyError(ReassemblyErrorKind::length_mismatch,
                          "received " + std::to_string(hex.size()) + " hex bytes, LENGTH says " +
                              std::to_string(last.total_len.value_or(0)));
  }
  try {
    return hex_decode(hex);
  } catch (const std::invalid_argument& e) {
    throw ReassemblyError(ReassemblyErrorKind::inconsistent, e.what());
  }
}

}  // namespace oppnet::frame
