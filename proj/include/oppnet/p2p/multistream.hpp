/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oppnet/common.hpp"

namespace oppnet::p2p {

namespace protocol {
inline constexpr std::string_view multistream = "/multistream/1.0.0";
inline constexpr std::string_view noise = "/noise";
inline constexpr std::string_view tls = "/tls/1.0.0";
inline constexpr std::string_view yamux = "/yamux/1.0.0";
inline constexpr std::string_view floodsub = "/floodsub/1.0.0";
inline constexpr std::string_view na = "na";
}  // namespace protocol

class EncodingError : public Error {
 public:
  using Error::Error;
};

/// varint(len(id) + 1) || id || '\n'. Throws EncodingError for an empty id or
/// one containing a newline.
Bytes multistream_encode(std::string_view id);

/// Splits a byte stream into multistream messages (newline stripped).
class MultistreamDecoder {
 public:
  /// Throws EncodingError on a malformed length or a missing newline.
  std::vector<std::string> feed(ByteView bytes);

  /// Bytes received after the last complete message.
  Bytes take_remaining();

 private:
  Bytes buffer_;
};

enum class Role { initiator, responder };

enum class NegotiationStatus {
  in_progress,
  agreed,
  /// The peer's first message was not the multistream header.
  header_mismatch,
  /// Every proposal was answered with "na".
  no_common_protocol,
  /// The peer answered a proposal with something other than an echo or "na".
  protocol_error,
};

std::string_view to_string(NegotiationStatus status);

/// One side of a multistream-select exchange. Both sides send the header
/// first without waiting; the initiator then proposes protocols in order
/// and the responder echoes a supported one or answers "na".
class MultistreamSelect {
 public:
  static MultistreamSelect initiator(std::vector<std::string> proposals);
  static MultistreamSelect responder(std::vector<std::string> supported);

  /// The messages to send before anything is received (the header).
  std::vector<Bytes> start();

  /// Consumes peer bytes; returns the messages to send in reply, one wire
  /// message per element.
  std::vector<Bytes> on_bytes(ByteView bytes);

  Role role() const { return role_; }
  NegotiationStatus status() const { return status_; }
  bool header_agreed() const { return header_received_; }
  const std::optional<std::string>& selected() const { return selected_; }
  bool finished() const { return status_ != NegotiationStatus::in_progress; }

  /// Bytes that followed the agreement message.
  Bytes take_remaining() { return decoder_.take_remaining(); }

 private:
  MultistreamSelect(Role role, std::vector<std::string> protocols) : role_(role), protocols_(std::move(protocols)) {}

  std::vector<Bytes> on_message(const std::string& message);

  Role role_;
  std::vector<std::string> protocols_;
  std::size_t next_proposal_ = 0;
  bool header_received_ = false;
  NegotiationStatus status_ = NegotiationStatus::in_progress;
  std::optional<std::string> selected_;
  MultistreamDecoder decoder_;
};

struct TranscriptEntry {
  Role from;
  Bytes wire;
};

struct NegotiationResult {
  NegotiationStatus status = NegotiationStatus::in_progress;
  std::optional<std::string> selected;
  std::vector<TranscriptEntry> transcript;
};

/// Runs an initiator and a responder against each other over a loopback and
/// records every wire message in send order.
NegotiationResult negotiate(const std::vector<std::string>& initiator_proposals,
                            const std::vector<std::string>& responder_supported);

}  // namespace oppnet::p2p
