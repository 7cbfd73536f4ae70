/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace oppnet::p2p {

using PublicKey = std::array<std::uint8_t, 32>;
using SecretKey = std::array<std::uint8_t, 32>;

/// X25519 key pair.
struct KeyPair {
  PublicKey public_key{};
  SecretKey secret_key{};

  /// Derives the public half from a 32-byte secret.
  static KeyPair from_secret(const SecretKey& secret);
  /// Fresh key pair from the OS CSPRNG.
  static KeyPair generate();

  /// Key pair from any 64-bit generator; used by the simulator so runs are
  /// reproducible.
  template <typename Rng>
  static KeyPair from_rng(Rng& rng) {
    SecretKey s{};
    for (std::size_t i = 0; i < s.size(); i += 8) {
      auto v = static_cast<std::uint64_t>(rng());
      for (std::size_t j = 0; j < 8; ++j) s[i + j] = static_cast<std::uint8_t>(v >> (8 * j));
    }
    return from_secret(s);
  }
};

/// Node identity: unpadded lowercase base32 (RFC 4648 alphabet) of the
/// SHA-256 of the static public key. Always 52 characters.
class PeerId {
 public:
  static constexpr std::size_t kLength = 52;

  static PeerId from_public_key(const PublicKey& key);
  /// nullopt unless `text` has the right length and alphabet.
  static std::optional<PeerId> parse(std::string_view text);

  const std::string& str() const { return id_; }

  auto operator<=>(const PeerId&) const = default;

 private:
  explicit PeerId(std::string id) : id_(std::move(id)) {}
  std::string id_;
};

/// Initializes libsodium once; safe to call from any thread.
void ensure_crypto();

}  // namespace oppnet::p2p
