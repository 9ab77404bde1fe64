#include "rdis/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace rdis::net {
namespace {

std::string errno_text() { return std::strerror(errno); }

addrinfo* resolve(const std::string& host, int port, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  std::string service = std::to_string(port);
  const char* node = host.empty() ? nullptr : host.c_str();
  int rc = ::getaddrinfo(node, service.c_str(), &hints, &res);
  if (rc != 0) {
    throw Error(passive ? "bind-failed" : "connect-failed",
                "cannot resolve '" + host + "': " + ::gai_strerror(rc));
  }
  return res;
}

int remaining_ms(std::chrono::steady_clock::time_point deadline) {
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
  if (left.count() <= 0) return 0;
  return static_cast<int>(std::min<long long>(left.count() + 1, 60'000));
}

}  // namespace

Fd& Fd::operator=(Fd&& other) noexcept {
  if (this != &other) reset(other.release());
  return *this;
}

void Fd::reset(int fd) {
  if (fd_ >= 0) ::close(fd_);
  fd_ = fd;
}

WakePipe::WakePipe() {
  int fds[2];
  if (::pipe2(fds, O_NONBLOCK | O_CLOEXEC) != 0) throw Error("transport-error", "pipe: " + errno_text());
  read_.reset(fds[0]);
  write_.reset(fds[1]);
}

void WakePipe::notify() {
  const char b = 1;
  [[maybe_unused]] auto n = ::write(write_.get(), &b, 1);
}

void WakePipe::drain() {
  char buf[64];
  while (::read(read_.get(), buf, sizeof buf) > 0) {
  }
}

Fd listen_tcp(const std::string& host, int port, int backlog) {
  addrinfo* res = resolve(host, port, true);
  Fd fd(::socket(res->ai_family, res->ai_socktype | SOCK_CLOEXEC, res->ai_protocol));
  if (!fd.valid()) {
    ::freeaddrinfo(res);
    throw Error("bind-failed", "socket: " + errno_text());
  }
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  int rc = ::bind(fd.get(), res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) throw Error("bind-failed", "bind " + host + ":" + std::to_string(port) + ": " + errno_text());
  if (::listen(fd.get(), backlog) != 0) throw Error("bind-failed", "listen: " + errno_text());
  return fd;
}

int local_port(const Fd& fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) return -1;
  return ntohs(addr.sin_port);
}

Fd connect_tcp(const std::string& host, int port, std::chrono::milliseconds timeout) {
  addrinfo* res = resolve(host, port, false);
  Fd fd(::socket(res->ai_family, res->ai_socktype | SOCK_CLOEXEC | SOCK_NONBLOCK, res->ai_protocol));
  if (!fd.valid()) {
    ::freeaddrinfo(res);
    throw Error("connect-failed", "socket: " + errno_text());
  }
  int rc = ::connect(fd.get(), res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  auto where = host + ":" + std::to_string(port);
  if (rc != 0 && errno != EINPROGRESS) throw Error("connect-failed", "connect " + where + ": " + errno_text());
  if (rc != 0) {
    pollfd p{fd.get(), POLLOUT, 0};
    int n = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (n <= 0) throw Error("connect-failed", "connect " + where + ": timed out");
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) throw Error("connect-failed", "connect " + where + ": " + std::strerror(err));
  }
  int flags = ::fcntl(fd.get(), F_GETFL);
  ::fcntl(fd.get(), F_SETFL, flags & ~O_NONBLOCK);
  int one = 1;
  ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

void write_all(const Fd& fd, std::span<const std::uint8_t> data) {
  std::size_t done = 0;
  while (done < data.size()) {
    ssize_t n = ::send(fd.get(), data.data() + done, data.size() - done, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("transport-error", "write: " + errno_text());
    }
    done += static_cast<std::size_t>(n);
  }
}

WaitResult wait_readable(const Fd& fd, const WakePipe* wake, std::chrono::steady_clock::time_point deadline) {
  for (;;) {
    pollfd fds[2] = {{fd.get(), POLLIN, 0}, {wake ? wake->read_fd() : -1, POLLIN, 0}};
    int n = ::poll(fds, wake ? 2 : 1, remaining_ms(deadline));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("transport-error", "poll: " + errno_text());
    }
    if (n == 0) return WaitResult::kTimeout;
    if (fds[0].revents != 0) return WaitResult::kReadable;
    return WaitResult::kWoken;
  }
}

std::vector<std::uint8_t> read_some(const Fd& fd, std::size_t max) {
  std::vector<std::uint8_t> buf(max);
  for (;;) {
    ssize_t n = ::recv(fd.get(), buf.data(), buf.size(), 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == ECONNRESET) return {};
      throw Error("transport-error", "read: " + errno_text());
    }
    buf.resize(static_cast<std::size_t>(n));
    return buf;
  }
}

}  // namespace rdis::net
