/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "oppnet/p2p/secure_channel.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstring>

namespace oppnet::p2p {

namespace {

constexpr std::string_view kProtocolName = "oppnet-handshake-x25519-chachapoly-blake2b";

using Hash = std::array<std::uint8_t, 32>;
using SharedSecret = std::array<std::uint8_t, crypto_scalarmult_BYTES>;

SharedSecret dh(const SecretKey& secret, const PublicKey& pub) {
  SharedSecret out{};
  if (crypto_scalarmult(out.data(), secret.data(), pub.data()) != 0) {
    throw HandshakeError("key agreement produced a low-order point");
  }
  return out;
}

Hash transcript_hash(ByteView message1, ByteView message2_keys) {
  Hash h{};
  crypto_generichash_state st;
  crypto_generichash_init(&st, nullptr, 0, h.size());
  crypto_generichash_update(&st, reinterpret_cast<const unsigned char*>(kProtocolName.data()), kProtocolName.size());
  crypto_generichash_update(&st, message1.data(), message1.size());
  crypto_generichash_update(&st, message2_keys.data(), message2_keys.size());
  crypto_generichash_final(&st, h.data(), h.size());
  return h;
}

SymmetricKey kdf(const Hash& key, std::string_view label) {
  SymmetricKey out{};
  crypto_generichash(out.data(), out.size(), reinterpret_cast<const unsigned char*>(label.data()), label.size(),
                     key.data(), key.size());
  return out;
}

struct Derived {
  SymmetricKey i2r;
  SymmetricKey r2i;
  SymmetricKey confirm;
  SymmetricKey secret;
};

Derived derive(const Hash& transcript, const SharedSecret& ee, const SharedSecret& es, const SharedSecret& se) {
  Hash chaining{};
  crypto_generichash_state st;
  crypto_generichash_init(&st, transcript.data(), transcript.size(), chaining.size());
  crypto_generichash_update(&st, ee.data(), ee.size());
  crypto_generichash_update(&st, es.data(), es.size());
  crypto_generichash_update(&st, se.data(), se.size());
  crypto_generichash_final(&st, chaining.data(), chaining.size());
  Derived d{kdf(chaining, "initiator->responder"), kdf(chaining, "responder->initiator"),
            kdf(chaining, "confirm"), kdf(chaining, "session")};
  sodium_memzero(chaining.data(), chaining.size());
  return d;
}

std::array<std::uint8_t, crypto_aead_chacha20poly1305_ietf_NPUBBYTES> nonce_for(std::uint64_t counter) {
  std::array<std::uint8_t, crypto_aead_chacha20poly1305_ietf_NPUBBYTES> n{};
  for (int i = 0; i < 8; ++i) n[4 + i] = static_cast<std::uint8_t>(counter >> (56 - 8 * i));
  return n;
}

PublicKey read_key(ByteView b, std::size_t at) {
  PublicKey k{};
  std::copy_n(b.begin() + static_cast<std::ptrdiff_t>(at), k.size(), k.begin());
  return k;
}

}  // namespace

HandshakeInitiator::HandshakeInitiator(KeyPair static_key, KeyPair ephemeral_key)
    : static_(static_key), ephemeral_(ephemeral_key) {
  ensure_crypto();
}

Bytes HandshakeInitiator::write_message1() const {
  Bytes m(ephemeral_.public_key.begin(), ephemeral_.public_key.end());
  m.insert(m.end(), static_.public_key.begin(), static_.public_key.end());
  return m;
}

SessionKeys HandshakeInitiator::read_message2(ByteView message) {
  if (message.size() != handshake::kMessage2Size) throw HandshakeError("message 2 has the wrong size");
  auto re = read_key(message, 0);
  auto rs = read_key(message, 32);
  auto m1 = write_message1();
  auto h = transcript_hash(m1, message.first(64));
  auto d = derive(h, dh(ephemeral_.secret_key, re), dh(ephemeral_.secret_key, rs), dh(static_.secret_key, re));

  auto nonce = nonce_for(0);
  if (crypto_aead_chacha20poly1305_ietf_decrypt(nullptr, nullptr, nullptr, message.data() + 64, 16, h.data(),
                                                h.size(), nonce.data(), d.confirm.data()) != 0) {
    throw HandshakeError("responder confirmation tag does not verify");
  }
  return SessionKeys{d.i2r, d.r2i, d.secret, rs};
}

HandshakeResponder::HandshakeResponder(KeyPair static_key, KeyPair ephemeral_key)
    : static_(static_key), ephemeral_(ephemeral_key) {
  ensure_crypto();
}

void HandshakeResponder::read_message1(ByteView message) {
  if (message.size() != handshake::kMessage1Size) throw HandshakeError("message 1 has the wrong size");
  message1_.assign(message.begin(), message.end());
}

Bytes HandshakeResponder::write_message2() {
  if (message1_.empty()) throw HandshakeError("message 1 not received");
  auto ie = read_key(message1_, 0);
  auto is = read_key(message1_, 32);
  Bytes m(ephemeral_.public_key.begin(), ephemeral_.public_key.end());
  m.insert(m.end(), static_.public_key.begin(), static_.public_key.end());
  auto h = transcript_hash(message1_, m);
  auto d = derive(h, dh(ephemeral_.secret_key, ie), dh(static_.secret_key, ie), dh(ephemeral_.secret_key, is));

  std::array<std::uint8_t, 16> tag{};
  unsigned long long tag_len = 0;
  auto nonce = nonce_for(0);
  crypto_aead_chacha20poly1305_ietf_encrypt(tag.data(), &tag_len, nullptr, 0, h.data(), h.size(), nullptr,
                                            nonce.data(), d.confirm.data());
  m.insert(m.end(), tag.begin(), tag.end());
  keys_ = SessionKeys{d.r2i, d.i2r, d.secret, is};
  return m;
}

std::pair<SessionKeys, SessionKeys> run_handshake(const KeyPair& initiator_static, const KeyPair& responder_static) {
  HandshakeInitiator init(initiator_static, KeyPair::generate());
  HandshakeResponder resp(responder_static, KeyPair::generate());
  resp.read_message1(init.write_message1());
  auto m2 = resp.write_message2();
  auto ik = init.read_message2(m2);
  return {ik, resp.keys()};
}

SecureChannel::SecureChannel(const SessionKeys& keys) : send_key_(keys.send_key), recv_key_(keys.recv_key) {}

Bytes SecureChannel::seal(ByteView plaintext) {
  auto counter = ++send_counter_;
  Bytes out(8 + plaintext.size() + crypto_aead_chacha20poly1305_ietf_ABYTES);
  for (int i = 0; i < 8; ++i) out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(counter >> (56 - 8 * i));
  auto nonce = nonce_for(counter);
  unsigned long long clen = 0;
  crypto_aead_chacha20poly1305_ietf_encrypt(out.data() + 8, &clen, plaintext.data(), plaintext.size(), out.data(), 8,
                                            nullptr, nonce.data(), send_key_.data());
  out.resize(8 + clen);
  return out;
}

Bytes SecureChannel::open(ByteView record) {
  if (record.size() < kOverhead) throw AuthenticationError("sealed record too short");
  std::uint64_t counter = 0;
  for (int i = 0; i < 8; ++i) counter = (counter << 8) | record[static_cast<std::size_t>(i)];
  if (last_received_ && counter <= *last_received_) throw AuthenticationError("replayed record");
  Bytes out(record.size() - kOverhead);
  unsigned long long mlen = 0;
  auto nonce = nonce_for(counter);
  if (crypto_aead_chacha20poly1305_ietf_decrypt(out.data(), &mlen, nullptr, record.data() + 8, record.size() - 8,
                                                record.data(), 8, nonce.data(), recv_key_.data()) != 0) {
    throw AuthenticationError("record failed authentication");
  }
  out.resize(mlen);
  last_received_ = counter;
  return out;
}

}  // namespace oppnet::p2p
