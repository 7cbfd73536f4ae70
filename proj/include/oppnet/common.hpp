/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace oppnet {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Virtual (or wall-clock-mapped) time with microsecond resolution.
struct Clock {
  using rep = std::int64_t;
  using period = std::micro;
  using duration = std::chrono::duration<rep, period>;
  using time_point = std::chrono::time_point<Clock>;
  static constexpr bool is_steady = true;
};

using Duration = Clock::duration;
using TimePoint = Clock::time_point;

inline constexpr TimePoint kEpoch{};

/// Fractional milliseconds, for reporting only.
inline double to_ms(Duration d) { return static_cast<double>(d.count()) / 1000.0; }
inline double to_ms(TimePoint t) { return to_ms(t.time_since_epoch()); }

inline Duration from_ms(double ms) {
  return Duration{static_cast<Clock::rep>(ms * 1000.0 + (ms >= 0 ? 0.5 : -0.5))};
}

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A byte port or link is not usable.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// A value is outside the size bounds of a wire format.
class SizeError : public Error {
 public:
  using Error::Error;
};

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

inline std::string to_string(ByteView b) { return std::string(b.begin(), b.end()); }

inline void append(Bytes& out, ByteView b) { out.insert(out.end(), b.begin(), b.end()); }

}  // namespace oppnet
