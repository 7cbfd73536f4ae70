/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "oppnet/p2p/identity.hpp"

#include <sodium.h>

#include <mutex>
#include <stdexcept>

namespace oppnet::p2p {

namespace {
constexpr char kBase32[] = "abcdefghijklmnopqrstuvwxyz234567";
}

void ensure_crypto() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialization failed");
  });
}

KeyPair KeyPair::from_secret(const SecretKey& secret) {
  ensure_crypto();
  KeyPair kp;
  kp.secret_key = secret;
  crypto_scalarmult_base(kp.public_key.data(), kp.secret_key.data());
  return kp;
}

KeyPair KeyPair::generate() {
  ensure_crypto();
  SecretKey s{};
  randombytes_buf(s.data(), s.size());
  return from_secret(s);
}

PeerId PeerId::from_public_key(const PublicKey& key) {
  ensure_crypto();
  std::array<std::uint8_t, crypto_hash_sha256_BYTES> digest{};
  crypto_hash_sha256(digest.data(), key.data(), key.size());

  std::string out;
  out.reserve(kLength);
  std::uint32_t buffer = 0;
  int bits = 0;
  for (auto byte : digest) {
    buffer = (buffer << 8) | byte;
    bits += 8;
    while (bits >= 5) {
      out += kBase32[(buffer >> (bits - 5)) & 0x1F];
      bits -= 5;
    }
  }
  if (bits > 0) out += kBase32[(buffer << (5 - bits)) & 0x1F];
  return PeerId(std::move(out));
}

std::optional<PeerId> PeerId::parse(std::string_view text) {
  if (text.size() != kLength) return std::nullopt;
  for (char c : text) {
    if (!((c >= 'a' && c <= 'z') || (c >= '2' && c <= '7'))) return std::nullopt;
  }
  return PeerId(std::string(text));
}

}  // namespace oppnet::p2p
