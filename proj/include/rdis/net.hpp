#pragma once

// Thin RAII wrappers over POSIX TCP sockets shared by the runtime transport
// and the device simulator.

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rdis/error.hpp"

namespace rdis::net {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  Fd(Fd&& other) noexcept : fd_(other.release()) {}
  Fd& operator=(Fd&& other) noexcept;
  ~Fd() { reset(); }

  int get() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release() {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void reset(int fd = -1);

 private:
  int fd_ = -1;
};

/// Self-pipe used to interrupt a poll() from another thread.
class WakePipe {
 public:
  WakePipe();
  void notify();
  void drain();
  int read_fd() const { return read_.get(); }

 private:
  Fd read_;
  Fd write_;
};

/// Bound and listening socket. Port 0 picks an ephemeral port.
Fd listen_tcp(const std::string& host, int port, int backlog = 8);
int local_port(const Fd& fd);

/// Throws Error "connect-failed".
Fd connect_tcp(const std::string& host, int port, std::chrono::milliseconds timeout);

/// Blocks until every byte is written. Throws Error "transport-error".
void write_all(const Fd& fd, std::span<const std::uint8_t> data);

enum class WaitResult { kReadable, kWoken, kTimeout };

/// Waits for `fd` to become readable, the wake pipe to fire, or the deadline.
WaitResult wait_readable(const Fd& fd, const WakePipe* wake,
                         std::chrono::steady_clock::time_point deadline);

/// One read(). Empty result means the peer closed the connection.
std::vector<std::uint8_t> read_some(const Fd& fd, std::size_t max = 4096);

}  // namespace rdis::net
