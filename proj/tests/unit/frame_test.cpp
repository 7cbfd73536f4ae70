/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "oppnet/frame.hpp"
#include "support.hpp"

using namespace oppnet;
using namespace oppnet::frame;

namespace {

Bytes pattern(std::size_t n, unsigned mul, unsigned add) {
  Bytes b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>((i * mul + add) % 256);
  return b;
}

std::vector<SegmentFrame> parse_all(ByteView stream, std::vector<ParseError>* errors = nullptr) {
  StreamParser p;
  std::vector<SegmentFrame> out;
  for (auto& ev : p.feed(stream)) {
    if (auto* f = std::get_if<SegmentFrame>(&ev)) {
      out.push_back(std::move(*f));
    } else if (errors) {
      errors->push_back(std::get<ParseError>(ev));
    }
  }
  return out;
}

Bytes concat(const std::vector<Bytes>& parts) {
  Bytes all;
  for (const auto& p : parts) append(all, p);
  return all;
}

void check_golden(const std::string& file, ByteView payload, std::uint16_t dst, std::uint32_t msg_id) {
  auto expected = testing::fixture_lines(file);
  auto frames = encode_message(payload, device_address(dst), msg_id);
  REQUIRE(frames.size() == expected.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    INFO("frame " << i);
    CHECK(testing::hex(frames[i]) == expected[i]);
  }
}

}  // namespace

TEST_CASE("hex encoding", "[frame]") {
  CHECK(to_string(hex_encode(to_bytes("hi"))) == "6869");
  CHECK(to_string(hex_encode(Bytes{0x00, 0xAB, 0xFF})) == "00ABFF");
  CHECK_THROWS_AS(hex_encode(Bytes{}), std::invalid_argument);
  CHECK(hex_encode(Bytes(2000, 0x5A)).size() == 4000);
  CHECK(hex_decode(to_bytes("00abFF")) == Bytes{0x00, 0xAB, 0xFF});
  CHECK_THROWS_AS(hex_decode(to_bytes("ABC")), std::invalid_argument);
  CHECK_THROWS_AS(hex_decode(to_bytes("G0")), std::invalid_argument);
}

TEST_CASE("frames match the reference encoder byte for byte", "[frame]") {
  check_golden("frames_hi.hex", to_bytes("hi"), 0x0027, 1);
  check_golden("frames_full_final_227.hex", pattern(227, 1, 0), 0x0023, 7);
  check_golden("frames_max_2000.hex", pattern(2000, 31, 7), 0xC000, 0xDEADBEEF);
}

TEST_CASE("field widths", "[frame]") {
  SECTION("two-byte payload is one 32-byte frame") {
    auto frames = segment_message(to_bytes("hi"), device_address(0x27), 1);
    REQUIRE(frames.size() == 1);
    CHECK(to_string(frames[0].data) == "6869");
    CHECK(frames[0].total_len == 4u);
    CHECK(frames[0].serialize().size() == 32);
    CHECK(frames[0].header.is_final());
  }
  SECTION("2000-byte payload is 18 frames") {
    CHECK(segment_message(Bytes(2000, 1), device_address(1), 0).size() == 18);
  }
  SECTION("a full final segment fills 255 bytes") {
    // Hex length is always even, so 227 data bytes in the final frame needs
    // two frames of 227: a 227-byte payload.
    auto frames = encode_message(pattern(227, 1, 0), device_address(1), 0);
    REQUIRE(frames.size() == 2);
    CHECK(frames[0].size() == kPrefixSize + kMaxData);
    CHECK(frames[1].size() == kMaxFrame);
  }
  SECTION("out of range payloads") {
    CHECK_THROWS_AS(segment_message(Bytes{}, device_address(1), 0), SizeError);
    CHECK_THROWS_AS(segment_message(Bytes(2001, 0), device_address(1), 0), SizeError);
  }
}

TEST_CASE("header invariants", "[frame]") {
  MessageHeader h;
  h.msg_id = 9;
  h.seg_index = 0;
  h.seg_count = 1;
  h.data_len = 4;
  h.flags = kFinalFlag;
  CHECK(h.valid());
  CHECK(MessageHeader::parse(h.serialize()) == h);

  auto bad = h;
  bad.flags = 0;  // last segment without the final flag
  CHECK_FALSE(bad.valid());
  bad = h;
  bad.seg_index = 1;
  CHECK_FALSE(bad.valid());
  bad = h;
  bad.data_len = 0;
  CHECK_FALSE(bad.valid());
  bad = h;
  bad.data_len = 228;
  CHECK_FALSE(bad.valid());
  bad = h;
  bad.reserved = 1;
  CHECK_FALSE(bad.valid());
}

TEST_CASE("round trip over random payloads and chunkings", "[frame]") {
  std::mt19937_64 rng(0xF7A3E);
  for (int trial = 0; trial < 500; ++trial) {
    std::size_t len = 1 + rng() % kMaxPayload;
    auto payload = testing::random_bytes(rng, len);
    auto wire = encode_message(payload, device_address(0x0023), static_cast<std::uint32_t>(trial));
    REQUIRE(wire.size() == frame_count_for(len));
    for (std::size_t i = 0; i < wire.size(); ++i) {
      const auto& w = wire[i];
      REQUIRE(w.size() <= kMaxFrame);
      // DATA is uppercase hex only, so it can never contain a marker byte.
      std::size_t trailer = i + 1 == wire.size() ? kTrailerSize : 0;
      ByteView data(w.data() + kPrefixSize, w.size() - kPrefixSize - trailer);
      REQUIRE(std::all_of(data.begin(), data.end(), [](std::uint8_t c) {
        return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'F');
      }));
    }

    auto stream = concat(wire);
    StreamParser parser;
    std::vector<SegmentFrame> got;
    std::size_t pos = 0;
    while (pos < stream.size()) {
      std::size_t n = std::min<std::size_t>(stream.size() - pos, 1 + rng() % 300);
      for (auto& ev : parser.feed(ByteView(stream).subspan(pos, n))) {
        REQUIRE(std::holds_alternative<SegmentFrame>(ev));
        got.push_back(std::get<SegmentFrame>(ev));
      }
      pos += n;
    }
    REQUIRE(got == segment_message(payload, device_address(0x0023), static_cast<std::uint32_t>(trial)));
    std::shuffle(got.begin(), got.end(), rng);
    REQUIRE(reassemble(got) == payload);
  }
}

TEST_CASE("byte-at-a-time parsing", "[frame]") {
  auto wire = concat(encode_message(pattern(700, 7, 3), device_address(2), 5));
  StreamParser p;
  std::vector<SegmentFrame> got;
  for (auto b : wire) {
    for (auto& ev : p.feed(ByteView(&b, 1))) got.push_back(std::get<SegmentFrame>(ev));
  }
  CHECK(got == segment_message(pattern(700, 7, 3), device_address(2), 5));
  CHECK(p.buffered() == 0);
}

TEST_CASE("back-to-back messages", "[frame]") {
  auto a = encode_message(to_bytes("first message"), device_address(1), 1);
  auto b = encode_message(pattern(500, 3, 1), device_address(1), 2);
  auto stream = concat(a);
  append(stream, concat(b));
  auto frames = parse_all(stream);
  REQUIRE(frames.size() == a.size() + b.size());
  std::vector<SegmentFrame> fa(frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(a.size()));
  std::vector<SegmentFrame> fb(frames.begin() + static_cast<std::ptrdiff_t>(a.size()), frames.end());
  CHECK(reassemble(fa) == to_bytes("first message"));
  CHECK(reassemble(fb) == pattern(500, 3, 1));
}

TEST_CASE("resync after garbage", "[frame]") {
  Bytes stream{0x00, 0x3C, 0x99};
  append(stream, concat(encode_message(to_bytes("hi"), device_address(1), 1)));
  std::vector<ParseError> errors;
  auto frames = parse_all(stream, &errors);
  REQUIRE(frames.size() == 1);
  CHECK(reassemble(frames) == to_bytes("hi"));
  REQUIRE(errors.size() == 1);
  CHECK(errors[0].kind == ParseErrorKind::resync);
  CHECK(errors[0].skipped == 3);
}

TEST_CASE("end marker mismatch", "[frame]") {
  auto wire = encode_message(to_bytes("hi"), device_address(1), 1)[0];
  wire.back() = 'X';
  Bytes stream = wire;
  append(stream, encode_message(to_bytes("ok"), device_address(1), 2)[0]);
  std::vector<ParseError> errors;
  auto frames = parse_all(stream, &errors);
  REQUIRE(frames.size() == 1);
  CHECK(reassemble(frames) == to_bytes("ok"));
  REQUIRE_FALSE(errors.empty());
  CHECK(errors[0].kind == ParseErrorKind::end_marker_mismatch);
}

TEST_CASE("reassembly errors", "[frame]") {
  auto frames = segment_message(pattern(2000, 5, 9), device_address(1), 3);
  REQUIRE(frames.size() == 18);

  SECTION("missing segment") {
    auto partial = frames;
    partial.erase(partial.begin() + 7);
    try {
      reassemble(partial);
      FAIL("expected an error");
    } catch (const ReassemblyError& e) {
      CHECK(e.kind() == ReassemblyErrorKind::incomplete);
    }
  }
  SECTION("length field off by two") {
    auto bad = frames;
    *bad.back().total_len += 2;
    try {
      reassemble(bad);
      FAIL("expected an error");
    } catch (const ReassemblyError& e) {
      CHECK(e.kind() == ReassemblyErrorKind::length_mismatch);
    }
  }
  SECTION("duplicate segment") {
    auto dup = frames;
    dup.push_back(frames[3]);
    CHECK_THROWS_AS(reassemble(dup), ReassemblyError);
  }
  SECTION("mixed messages") {
    auto mixed = frames;
    mixed[2].header.msg_id = 4;
    try {
      reassemble(mixed);
      FAIL("expected an error");
    } catch (const ReassemblyError& e) {
      CHECK(e.kind() == ReassemblyErrorKind::inconsistent);
    }
  }
}
