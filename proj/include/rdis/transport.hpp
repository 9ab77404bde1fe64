#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rdis/model.hpp"
#include "rdis/net.hpp"

namespace rdis {

/// Byte stream to one device connection. Owned and driven by a single
/// service loop; only interrupt() may be called from other threads.
class Transport {
 public:
  using Clock = std::chrono::steady_clock;

  virtual ~Transport() = default;

  virtual void write(std::span<const std::uint8_t> bytes) = 0;

  /// Returns available bytes, or an empty vector when the deadline passes or
  /// interrupt() is called. Throws Error "transport-closed" once the peer
  /// has gone away.
  virtual std::vector<std::uint8_t> read_some(Clock::time_point deadline) = 0;

  virtual void interrupt() = 0;
  virtual void close() = 0;
};

class TransportFactory {
 public:
  virtual ~TransportFactory() = default;
  /// Throws Error on failure ("connect-failed", "serial-not-implemented").
  virtual std::unique_ptr<Transport> open(const Connection& connection) = 0;
};

/// Opens tcp connections; serial descriptors are refused.
class TcpTransportFactory : public TransportFactory {
 public:
  struct Endpoint {
    std::string host;
    int port = 0;
  };

  TcpTransportFactory() = default;
  /// Every tcp connection goes to `endpoint` instead of the document's.
  explicit TcpTransportFactory(Endpoint endpoint) : override_(std::move(endpoint)) {}

  std::chrono::milliseconds connect_timeout{2000};

  std::unique_ptr<Transport> open(const Connection& connection) override;

 private:
  std::optional<Endpoint> override_;
};

/// In-memory device endpoint. Every write is logged and handed to the
/// responder, whose return bytes are queued for the runtime to read.
class LoopbackDevice {
 public:
  using Responder = std::function<std::vector<std::uint8_t>(std::span<const std::uint8_t>)>;

  explicit LoopbackDevice(Responder responder = {}) : responder_(std::move(responder)) {}

  /// Bytes the runtime wrote, one entry per write() call.
  std::vector<std::vector<std::uint8_t>> writes() const;
  void inject(std::span<const std::uint8_t> bytes);
  /// Simulates the peer dropping the connection.
  void hang_up();
  bool closed() const;

 private:
  friend class LoopbackTransport;

  Responder responder_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::vector<std::uint8_t>> writes_;
  std::deque<std::uint8_t> rx_;
  bool interrupted_ = false;
  bool hung_up_ = false;
  bool closed_ = false;
};

class LoopbackFactory : public TransportFactory {
 public:
  explicit LoopbackFactory(std::shared_ptr<LoopbackDevice> device) : device_(std::move(device)) {}
  std::unique_ptr<Transport> open(const Connection& connection) override;

  /// When >= 0, the open() call with this zero-based index fails with
  /// "connect-failed".
  int fail_on_open = -1;

 private:
  std::shared_ptr<LoopbackDevice> device_;
  int opens_ = 0;
};

}  // namespace rdis
