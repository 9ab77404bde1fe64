#include <regex>

#include <boost/asio.hpp>
#include <boost/beast.hpp>

#include "rdis/bridge.hpp"

namespace rdis::bridge {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

struct Client::Impl {
  asio::io_context ioc;
  websocket::stream<tcp::socket> ws{ioc};
  beast::flat_buffer buffer;
  std::deque<std::string> inbox;
  bool closed = false;
  bool reading = false;

  void read() {
    reading = true;
    ws.async_read(buffer, [this](beast::error_code ec, std::size_t) {
      reading = false;
      if (ec) {
        closed = true;
        return;
      }
      inbox.push_back(beast::buffers_to_string(buffer.data()));
      buffer.consume(buffer.size());
      read();
    });
  }
};

Client::Client(const std::string& url, std::chrono::milliseconds timeout) : impl_(std::make_unique<Impl>()) {
  static const std::regex re(R"(^(?:ws://)?([^:/]+):(\d+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw Error("bad-url", "expected ws://host:port, got '" + url + "'");
  const std::string host = m[1];
  const std::string port = m[2];
  const std::string path = m[3].matched ? std::string(m[3]) : "/ws";
  try {
    tcp::resolver resolver(impl_->ioc);
    auto results = resolver.resolve(host, port);
    beast::error_code ec = asio::error::timed_out;
    asio::async_connect(impl_->ws.next_layer(), results,
                        [&](beast::error_code e, const tcp::endpoint&) { ec = e; });
    impl_->ioc.run_for(timeout);
    if (!impl_->ioc.stopped()) {
      impl_->ws.next_layer().close();
      impl_->ioc.run();
    }
    impl_->ioc.restart();
    if (ec) throw boost::system::system_error(ec);
    impl_->ws.handshake(host + ":" + port, path);
  } catch (const boost::system::system_error& e) {
    throw Error("connect-failed", "cannot connect to " + url + ": " + e.code().message());
  }
  impl_->read();
}

Client::~Client() = default;

void Client::send(const json& message) { send_text(message.dump()); }

void Client::send_text(const std::string& text) {
  if (impl_->closed) throw Error("connection-closed", "bridge closed the connection");
  impl_->ws.text(true);
  beast::error_code ec;
  impl_->ws.write(asio::buffer(text), ec);
  if (ec) throw Error("connection-closed", "write failed: " + ec.message());
}

std::optional<json> Client::receive(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (impl_->inbox.empty() && !impl_->closed) {
    auto left = deadline - std::chrono::steady_clock::now();
    if (left <= std::chrono::steady_clock::duration::zero()) break;
    impl_->ioc.restart();
    impl_->ioc.run_one_for(left);
  }
  if (impl_->inbox.empty()) {
    if (impl_->closed) throw Error("connection-closed", "bridge closed the connection");
    return std::nullopt;
  }
  std::string text = std::move(impl_->inbox.front());
  impl_->inbox.pop_front();
  return json::parse(text);
}

json Client::expect(const std::string& type, const std::string& id, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) break;
    auto msg = receive(left);
    if (!msg) break;
    if (id.empty() || (msg->contains("id") && (*msg)["id"] == id)) {
      if ((*msg)["type"] == type) return *msg;
      if ((*msg)["type"] == "error") {
        throw Error(msg->value("code", "error"), msg->value("message", ""));
      }
    }
  }
  throw Error("timeout", "no '" + type + "' message within " + std::to_string(timeout.count()) + " ms");
}

json Client::call(const std::string& interface, const json& args, std::chrono::milliseconds timeout) {
  const std::string id = "c" + std::to_string(++next_id_);
  send({{"type", "call"}, {"id", id}, {"interface", interface}, {"args", args}});
  return expect("result", id, timeout)["values"];
}

void Client::close() {
  if (impl_->closed) return;
  beast::error_code ec;
  impl_->ws.close(websocket::close_code::normal, ec);
  impl_->closed = true;
}

}  // namespace rdis::bridge
