/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "oppnet/p2p/multistream.hpp"

#include <algorithm>
#include <deque>

#include "oppnet/varint.hpp"

namespace oppnet::p2p {

namespace {
// Protocol ids are short; anything longer is a framing error.
constexpr std::uint64_t kMaxMessage = 1024;
}  // namespace

Bytes multistream_encode(std::string_view id) {
  if (id.empty()) throw EncodingError("protocol id is empty");
  if (id.find('\n') != std::string_view::npos) throw EncodingError("protocol id contains a newline");
  Bytes out;
  varint::write(out, id.size() + 1);
  out.insert(out.end(), id.begin(), id.end());
  out.push_back('\n');
  return out;
}

std::vector<std::string> MultistreamDecoder::feed(ByteView bytes) {
  append(buffer_, bytes);
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < buffer_.size()) {
    auto len = varint::read(ByteView(buffer_).subspan(pos));
    if (len.status == varint::Status::incomplete) break;
    if (len.status == varint::Status::malformed || len.value == 0 || len.value > kMaxMessage) {
      throw EncodingError("malformed multistream length prefix");
    }
    if (buffer_.size() - pos - len.size < len.value) break;
    auto body = buffer_.begin() + static_cast<std::ptrdiff_t>(pos + len.size);
    auto end = body + static_cast<std::ptrdiff_t>(len.value);
    if (*(end - 1) != '\n') throw EncodingError("multistream message missing newline");
    out.emplace_back(body, end - 1);
    pos += len.size + len.value;
  }
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(pos));
  return out;
}

Bytes MultistreamDecoder::take_remaining() { return std::exchange(buffer_, {}); }

std::string_view to_string(NegotiationStatus status) {
  switch (status) {
    case NegotiationStatus::in_progress: return "in_progress";
    case NegotiationStatus::agreed: return "agreed";
    case NegotiationStatus::header_mismatch: return "header_mismatch";
    case NegotiationStatus::no_common_protocol: return "no_common_protocol";
    case NegotiationStatus::protocol_error: return "protocol_error";
  }
  return "unknown";
}

MultistreamSelect MultistreamSelect::initiator(std::vector<std::string> proposals) {
  return MultistreamSelect(Role::initiator, std::move(proposals));
}

MultistreamSelect MultistreamSelect::responder(std::vector<std::string> supported) {
  return MultistreamSelect(Role::responder, std::move(supported));
}

std::vector<Bytes> MultistreamSelect::start() {
  std::vector<Bytes> out;
  out.push_back(multistream_encode(protocol::multistream));
  return out;
}

std::vector<Bytes> MultistreamSelect::on_bytes(ByteView bytes) {
  std::vector<Bytes> out;
  if (finished()) return out;
  std::vector<std::string> messages;
  try {
    messages = decoder_.feed(bytes);
  } catch (const EncodingError&) {
    status_ = header_received_ ? NegotiationStatus::protocol_error : NegotiationStatus::header_mismatch;
    return out;
  }
  for (std::size_t i = 0; i < messages.size(); ++i) {
    auto replies = on_message(messages[i]);
    out.insert(out.end(), std::make_move_iterator(replies.begin()), std::make_move_iterator(replies.end()));
    if (finished()) {
      // Anything after the deciding message belongs to the next protocol.
      Bytes rest;
      for (std::size_t j = i + 1; j < messages.size(); ++j) append(rest, multistream_encode(messages[j]));
      append(rest, decoder_.take_remaining());
      decoder_.feed(rest);
      break;
    }
  }
  return out;
}

std::vector<Bytes> MultistreamSelect::on_message(const std::string& message) {
  std::vector<Bytes> out;
  if (!header_received_) {
    if (message != protocol::multistream) {
      status_ = NegotiationStatus::header_mismatch;
      return out;
    }
    header_received_ = true;
    if (role_ == Role::initiator) {
      if (protocols_.empty()) {
        status_ = NegotiationStatus::no_common_protocol;
      } else {
        out.push_back(multistream_encode(protocols_[next_proposal_]));
      }
    }
    return out;
  }

  if (role_ == Role::responder) {
    if (std::find(protocols_.begin(), protocols_.end(), message) != protocols_.end()) {
      out.push_back(multistream_encode(message));
      selected_ = message;
      status_ = NegotiationStatus::agreed;
    } else {
      out.push_back(multistream_encode(protocol::na));
    }
    return out;
  }

  const auto& proposed = protocols_[next_proposal_];
  if (message == proposed) {
    selected_ = proposed;
    status_ = NegotiationStatus::agreed;
  } else if (message == protocol::na) {
    if (++next_proposal_ == protocols_.size()) {
      status_ = NegotiationStatus::no_common_protocol;
    } else {
      out.push_back(multistream_encode(protocols_[next_proposal_]));
    }
  } else {
    status_ = NegotiationStatus::protocol_error;
  }
  return out;
}

NegotiationResult negotiate(const std::vector<std::string>& initiator_proposals,
                            const std::vector<std::string>& responder_supported) {
  auto init = MultistreamSelect::initiator(initiator_proposals);
  auto resp = MultistreamSelect::responder(responder_supported);
  NegotiationResult result;

  struct InFlight {
    Role to;
    Bytes wire;
  };
  std::deque<InFlight> wire;
  auto send = [&](Role from, std::vector<Bytes> msgs) {
    for (auto& m : msgs) {
      result.transcript.push_back({from, m});
      wire.push_back({from == Role::initiator ? Role::responder : Role::initiator, std::move(m)});
    }
  };

  send(Role::initiator, init.start());
  send(Role::responder, resp.start());
  while (!wire.empty() && !init.finished()) {
    auto msg = std::move(wire.front());
    wire.pop_front();
    if (msg.to == Role::responder) {
      send(Role::responder, resp.on_bytes(msg.wire));
      if (resp.status() == NegotiationStatus::header_mismatch) break;
    } else {
      send(Role::initiator, init.on_bytes(msg.wire));
    }
  }
  // The responder's final echo is already in the transcript when the
  // initiator finishes; a header mismatch on either side ends the exchange.
  if (resp.status() == NegotiationStatus::header_mismatch) {
    result.status = NegotiationStatus::header_mismatch;
  } else {
    result.status = init.status();
    result.selected = init.selected();
  }
  return result;
}

}  // namespace oppnet::p2p
