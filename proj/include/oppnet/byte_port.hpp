/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>

#include "oppnet/common.hpp"
#include "oppnet/event_loop.hpp"

namespace oppnet {

/// Duplex byte stream, e.g. the serial link between host and radio.
class BytePort {
 public:
  using ReceiveHandler = std::function<void(ByteView)>;

  virtual ~BytePort() = default;

  /// Throws TransportError when the port is closed.
  virtual void write(ByteView bytes) = 0;
  virtual bool is_open() const = 0;
  virtual void close() = 0;

  void on_receive(ReceiveHandler handler) { handler_ = std::move(handler); }

 protected:
  void deliver(ByteView bytes) {
    if (handler_) handler_(bytes);
  }

 private:
  ReceiveHandler handler_;
};

struct PipeOptions {
  /// Serial line rate; each byte costs 10 bit times (8N1). 0 = instantaneous.
  unsigned baud = 115200;
};

/// In-memory serial line for the simulator. Writes on one end arrive at the
/// other end, in order, after their serialization time on `loop`.
std::pair<std::shared_ptr<BytePort>, std::shared_ptr<BytePort>> make_memory_pipe(
    EventLoop& loop, PipeOptions options = {});

/// OS serial device (termios, raw 8N1).
class SerialDevicePort final : public BytePort {
 public:
  /// Throws TransportError when the device cannot be opened or configured.
  SerialDevicePort(const std::string& path, unsigned baud = 115200);
  ~SerialDevicePort() override;

  SerialDevicePort(const SerialDevicePort&) = delete;
  SerialDevicePort& operator=(const SerialDevicePort&) = delete;

  void write(ByteView bytes) override;
  bool is_open() const override { return fd_ >= 0; }
  void close() override;

  /// Waits up to `timeout` for input and hands whatever arrived to the
  /// receive handler. Returns the number of bytes delivered.
  std::size_t poll(Duration timeout);

 private:
  int fd_ = -1;
};

}  // namespace oppnet
