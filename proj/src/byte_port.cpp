/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "oppnet/byte_port.hpp"

#include <fcntl.h>
#include <poll.h>
#include <termios.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

namespace oppnet {

namespace {

class PipeEnd;

struct PipeShared {
  EventLoop* loop;
  PipeOptions options;
  bool open = true;
  std::weak_ptr<PipeEnd> ends[2];
  TimePoint busy_until[2]{};
};

class PipeEnd final : public BytePort {
 public:
  PipeEnd(std::shared_ptr<PipeShared> shared, int side) : shared_(std::move(shared)), side_(side) {}

  void write(ByteView bytes) override {
    if (!shared_->open) throw TransportError("write on closed pipe");
    if (bytes.empty()) return;
    auto& loop = *shared_->loop;
    Duration wire{0};
    if (shared_->options.baud > 0) {
      wire = Duration{static_cast<Clock::rep>(bytes.size() * 10ULL * 1'000'000ULL / shared_->options.baud)};
    }
    auto start = std::max(loop.now(), shared_->busy_until[side_]);
    auto done = start + wire;
    shared_->busy_until[side_] = done;
    loop.post_at(done, [shared = shared_, peer = 1 - side_, data = Bytes(bytes.begin(), bytes.end())] {
      if (!shared->open) return;
      if (auto end = shared->ends[peer].lock()) end->receive(data);
    });
  }

  bool is_open() const override { return shared_->open; }
  void close() override { shared_->open = false; }

  void receive(ByteView data) { deliver(data); }

 private:
  std::shared_ptr<PipeShared> shared_;
  int side_;
};

speed_t baud_constant(unsigned baud) {
  switch (baud) {
    case 9600: return B9600;
    case 19200: return B19200;
    case 38400: return B38400;
    case 57600: return B57600;
    case 115200: return B115200;
    case 230400: return B230400;
    case 460800: return B460800;
    case 921600: return B921600;
    case 1000000: return B1000000;
    default: throw TransportError("unsupported baud rate " + std::to_string(baud));
  }
}

}  // namespace

std::pair<std::shared_ptr<BytePort>, std::shared_ptr<BytePort>> make_memory_pipe(EventLoop& loop,
                                                                                  PipeOptions options) {
  auto shared = std::make_shared<PipeShared>();
  shared->loop = &loop;
  shared->options = options;
  auto a = std::make_shared<PipeEnd>(shared, 0);
  auto b = std::make_shared<PipeEnd>(shared, 1);
  shared->ends[0] = a;
  shared->ends[1] = b;
  return {a, b};
}

SerialDevicePort::SerialDevicePort(const std::string& path, unsigned baud) {
  auto speed = baud_constant(baud);
  fd_ = ::open(path.c_str(), O_RDWR | O_NOCTTY | O_NONBLOCK);
  if (fd_ < 0) throw TransportError("cannot open " + path + ": " + std::strerror(errno));
  termios tio{};
  if (::tcgetattr(fd_, &tio) != 0) {
    close();
    throw TransportError("tcgetattr " + path + ": " + std::strerror(errno));
  }
  ::cfmakeraw(&tio);
  tio.c_cflag |= CLOCAL | CREAD;
  tio.c_cflag &= ~(CSTOPB | PARENB);
  ::cfsetispeed(&tio, speed);
  ::cfsetospeed(&tio, speed);
  if (::tcsetattr(fd_, TCSANOW, &tio) != 0) {
    close();
    throw TransportError("tcsetattr " + path + ": " + std::strerror(errno));
  }
}

SerialDevicePort::~SerialDevicePort() { close(); }

void SerialDevicePort::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void SerialDevicePort::write(ByteView bytes) {
  if (fd_ < 0) throw TransportError("write on closed serial port");
  std::size_t done = 0;
  while (done < bytes.size()) {
    auto n = ::write(fd_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN) {
        pollfd pfd{fd_, POLLOUT, 0};
        ::poll(&pfd, 1, 100);
        continue;
      }
      throw TransportError(std::string("serial write: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

std::size_t SerialDevicePort::poll(Duration timeout) {
  if (fd_ < 0) throw TransportError("poll on closed serial port");
  pollfd pfd{fd_, POLLIN, 0};
  int ms = static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(timeout).count());
  if (::poll(&pfd, 1, ms) <= 0) return 0;
  std::uint8_t buf[512];
  std::size_t total = 0;
  for (;;) {
    auto n = ::read(fd_, buf, sizeof buf);
    if (n <= 0) break;
    total += static_cast<std::size_t>(n);
    deliver(ByteView(buf, static_cast<std::size_t>(n)));
  }
  return total;
}

}  // namespace oppnet
