#include "rdis/transport.hpp"

namespace rdis {
namespace {

class TcpStream final : public Transport {
 public:
  explicit TcpStream(net::Fd fd) : fd_(std::move(fd)) {}

  void write(std::span<const std::uint8_t> bytes) override {
    if (!fd_.valid()) throw Error("transport-closed", "connection is closed");
    net::write_all(fd_, bytes);
  }

  std::vector<std::uint8_t> read_some(Clock::time_point deadline) override {
    if (!fd_.valid()) throw Error("transport-closed", "connection is closed");
    auto r = net::wait_readable(fd_, &wake_, deadline);
    if (r == net::WaitResult::kWoken) {
      wake_.drain();
      return {};
    }
    if (r == net::WaitResult::kTimeout) return {};
    auto bytes = net::read_some(fd_);
    if (bytes.empty()) throw Error("transport-closed", "peer closed the connection");
    return bytes;
  }

  void interrupt() override { wake_.notify(); }
  void close() override { fd_.reset(); }

 private:
  net::Fd fd_;
  net::WakePipe wake_;
};

}  // namespace

std::unique_ptr<Transport> TcpTransportFactory::open(const Connection& connection) {
  if (std::holds_alternative<SerialTransport>(connection.transport)) {
    throw Error("serial-not-implemented",
                "connection '" + connection.id + "': serial not implemented; only tcp transports can be opened");
  }
  const auto& tcp = std::get<rdis::TcpTransport>(connection.transport);
  std::string host = override_ ? override_->host : tcp.host;
  int port = override_ ? override_->port : tcp.port;
  return std::make_unique<TcpStream>(net::connect_tcp(host, port, connect_timeout));
}

class LoopbackTransport final : public Transport {
 public:
  explicit LoopbackTransport(std::shared_ptr<LoopbackDevice> device) : dev_(std::move(device)) {}
  ~LoopbackTransport() override { close(); }

  void write(std::span<const std::uint8_t> bytes) override {
    LoopbackDevice::Responder responder;
    {
      std::lock_guard lock(dev_->mu_);
      if (dev_->closed_ || dev_->hung_up_) throw Error("transport-closed", "loopback closed");
      dev_->writes_.emplace_back(bytes.begin(), bytes.end());
      responder = dev_->responder_;
    }
    if (responder) {
      auto reply = responder(bytes);
      dev_->inject(reply);
    }
  }

  std::vector<std::uint8_t> read_some(Clock::time_point deadline) override {
    std::unique_lock lock(dev_->mu_);
    dev_->cv_.wait_until(lock, deadline, [this] {
      return !dev_->rx_.empty() || dev_->interrupted_ || dev_->hung_up_ || dev_->closed_;
    });
    if (!dev_->rx_.empty()) {
      std::vector<std::uint8_t> out(dev_->rx_.begin(), dev_->rx_.end());
      dev_->rx_.clear();
      return out;
    }
    if (dev_->hung_up_ || dev_->closed_) throw Error("transport-closed", "loopback closed");
    dev_->interrupted_ = false;
    return {};
  }

  void interrupt() override {
    std::lock_guard lock(dev_->mu_);
    dev_->interrupted_ = true;
    dev_->cv_.notify_all();
  }

  void close() override {
    std::lock_guard lock(dev_->mu_);
    dev_->closed_ = true;
    dev_->cv_.notify_all();
  }

 private:
  std::shared_ptr<LoopbackDevice> dev_;
};

std::vector<std::vector<std::uint8_t>> LoopbackDevice::writes() const {
  std::lock_guard lock(mu_);
  return writes_;
}

void LoopbackDevice::inject(std::span<const std::uint8_t> bytes) {
  std::lock_guard lock(mu_);
  rx_.insert(rx_.end(), bytes.begin(), bytes.end());
  cv_.notify_all();
}

void LoopbackDevice::hang_up() {
  std::lock_guard lock(mu_);
  hung_up_ = true;
  cv_.notify_all();
}

bool LoopbackDevice::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::unique_ptr<Transport> LoopbackFactory::open(const Connection& connection) {
  if (std::holds_alternative<SerialTransport>(connection.transport)) {
    throw Error("serial-not-implemented", "connection '" + connection.id + "': serial not implemented");
  }
  if (opens_++ == fail_on_open) throw Error("connect-failed", "loopback open refused for '" + connection.id + "'");
  return std::make_unique<LoopbackTransport>(device_);
}

}  // namespace rdis
