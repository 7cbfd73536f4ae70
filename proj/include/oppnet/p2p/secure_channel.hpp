/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>

#include "oppnet/common.hpp"
#include "oppnet/p2p/identity.hpp"

namespace oppnet::p2p {

/// Two-message authenticated key agreement in the spirit of a Noise
/// handshake (not wire-compatible with Noise):
///
///   -> e_i, s_i
///   <- e_r, s_r, tag
///
/// Both sides hash the transcript and mix three X25519 results
/// (ee, es, se) through keyed BLAKE2b into a chaining key, from which the
/// two directional record keys and a confirmation key are derived. The
/// responder's tag (ChaCha20-Poly1305 over the empty string, keyed by the
/// confirmation key, with the transcript hash as associated data) proves it
/// holds s_r and the fresh e_r. The initiator is authenticated implicitly by
/// its first sealed record.
namespace handshake {
inline constexpr std::size_t kMessage1Size = 64;
inline constexpr std::size_t kMessage2Size = 80;
}  // namespace handshake

using SymmetricKey = std::array<std::uint8_t, 32>;

struct SessionKeys {
  SymmetricKey send_key{};
  SymmetricKey recv_key{};
  /// Shared session secret; identical on both sides of a successful run.
  SymmetricKey secret{};
  PublicKey remote_static{};
};

class HandshakeError : public Error {
 public:
  using Error::Error;
};

class HandshakeInitiator {
 public:
  HandshakeInitiator(KeyPair static_key, KeyPair ephemeral_key);

  Bytes write_message1() const;
  /// Throws HandshakeError when message 2 is malformed or fails to
  /// authenticate.
  SessionKeys read_message2(ByteView message);

 private:
  KeyPair static_;
  KeyPair ephemeral_;
};

class HandshakeResponder {
 public:
  HandshakeResponder(KeyPair static_key, KeyPair ephemeral_key);

  /// Throws HandshakeError when message 1 is malformed.
  void read_message1(ByteView message);
  Bytes write_message2();
  const SessionKeys& keys() const { return *keys_; }

 private:
  KeyPair static_;
  KeyPair ephemeral_;
  Bytes message1_;
  std::optional<SessionKeys> keys_;
};

/// Runs both sides over a loopback with fresh ephemerals. Returns the keys
/// as seen by (initiator, responder).
std::pair<SessionKeys, SessionKeys> run_handshake(const KeyPair& initiator_static,
                                                  const KeyPair& responder_static);

class AuthenticationError : public Error {
 public:
  using Error::Error;
};

/// Record layer over a completed handshake: counter(8, big-endian) ||
/// ChaCha20-Poly1305(plaintext) with the counter as associated data.
/// Counters must strictly increase; gaps (lost records) are tolerated.
class SecureChannel {
 public:
  static constexpr std::size_t kOverhead = 8 + 16;

  explicit SecureChannel(const SessionKeys& keys);

  Bytes seal(ByteView plaintext);
  /// Throws AuthenticationError on tampering, truncation or replay.
  Bytes open(ByteView record);

 private:
  SymmetricKey send_key_;
  SymmetricKey recv_key_;
  std::uint64_t send_counter_ = 0;
  std::optional<std::uint64_t> last_received_;
};

}  // namespace oppnet::p2p
