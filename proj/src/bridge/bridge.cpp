#include "rdis/bridge.hpp"

#include <algorithm>
#include <atomic>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "rdis/document.hpp"

namespace rdis::bridge {
namespace {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

constexpr std::string_view kIndexPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>rdis bridge</title></head>
<body>
<h1>rdis bridge</h1>
<p>Websocket endpoint: <code>/ws</code>. Health: <code>/healthz</code>.</p>
</body></html>
)";

std::string content_type(const std::filesystem::path& p) {
  static const std::map<std::string, std::string> types = {
      {".html", "text/html; charset=utf-8"}, {".js", "text/javascript"}, {".css", "text/css"},
      {".json", "application/json"},         {".svg", "image/svg+xml"},  {".png", "image/png"}};
  auto it = types.find(p.extension().string());
  return it == types.end() ? "application/octet-stream" : it->second;
}

json error_message(const json& id, const std::string& code, const std::string& message) {
  json j{{"type", "error"}, {"code", code}, {"message", message}};
  if (!id.is_null()) j["id"] = id;
  return j;
}

json list_message(const RdisDocument& doc) {
  json interfaces = json::array();
  for (const auto& itf : doc.interfaces) {
    json inputs = json::array();
    for (const auto& in : itf.inputs) inputs.push_back({{"name", in.name}, {"kind", to_string(in.kind)}});
    json returns = json::array();
    for (const auto& [name, _] : itf.returns) returns.push_back(name);
    interfaces.push_back({{"name", itf.name}, {"inputs", inputs}, {"returns", returns}});
  }
  json concepts = json::array();
  for (const auto& m : doc.mappings) {
    concepts.push_back({{"concept", to_string(m.concept_id)},
                        {"interface", m.interface},
                        {"kind", is_command_concept(m.concept_id) ? "command" : "telemetry"},
                        {"fields", concept_fields(m.concept_id)}});
  }
  return {{"type", "list"}, {"interfaces", interfaces}, {"concepts", concepts}};
}

json values_json(const Values& v) {
  json j = json::object();
  for (const auto& [k, x] : v) j[k] = x;
  return j;
}

struct Shared {
  std::shared_ptr<Runtime> runtime;
  std::string canonical;
  std::filesystem::path static_dir;
  asio::thread_pool workers;

  Shared(std::shared_ptr<Runtime> rt, std::filesystem::path dir, std::size_t n)
      : runtime(std::move(rt)),
        canonical(canonicalize(runtime->document())),
        static_dir(std::move(dir)),
        workers(std::max<std::size_t>(n, 1)) {}
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, std::shared_ptr<Shared> shared)
      : ws_(std::move(socket)), shared_(std::move(shared)) {}

  ~WsSession() { drop_subscriptions(); }

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->read();
    });
  }

  /// Thread-safe.
  void send(json message) {
    asio::post(ws_.get_executor(), [self = shared_from_this(), text = message.dump()]() mutable {
      if (self->closing_) return;
      self->queue_.push_back(std::move(text));
      if (self->queue_.size() == 1) self->write_next();
    });
  }

  /// Thread-safe.
  /// Thread-safe. Drops the TCP connection without a handshake.
  void abort() {
    asio::post(ws_.get_executor(), [self = shared_from_this()] {
      beast::error_code ignored;
      beast::get_lowest_layer(self->ws_).socket().close(ignored);
    });
  }

  /// Thread-safe.
  void close() {
    asio::post(ws_.get_executor(), [self = shared_from_this()] {
      if (self->closing_) return;
      self->closing_ = true;
      self->drop_subscriptions();
      if (!self->queue_.empty()) return;  // write_next closes after the queue drains
      self->do_close();
    });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->drop_subscriptions();
        return;
      }
      std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      if (!self->ws_.got_text()) {
        self->send(error_message(nullptr, "bad-frame", "only text frames are accepted"));
      } else {
        self->handle(text);
      }
      self->read();
    });
  }

  void write_next() {
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->queue_.pop_front();
      if (ec) {
        self->queue_.clear();
        return;
      }
      if (!self->queue_.empty()) {
        self->write_next();
      } else if (self->closing_) {
        self->do_close();
      }
    });
  }

  void do_close() {
    ws_.async_close(websocket::close_code::going_away, [self = shared_from_this()](beast::error_code) {});
  }

  void drop_subscriptions() {
    std::map<std::string, std::unique_ptr<Subscription>> subs;
    {
      std::lock_guard lock(subs_mu_);
      subs.swap(subs_);
    }
    for (auto& [_, s] : subs) s->cancel();
  }

  void handle(const std::string& text) {
    json msg;
    try {
      msg = json::parse(text);
    } catch (const json::parse_error& e) {
      send(error_message(nullptr, "bad-json", e.what()));
      return;
    }
    if (!msg.is_object()) {
      send(error_message(nullptr, "bad-json", "message must be a JSON object"));
      return;
    }
    json id = msg.contains("id") ? msg["id"] : json();
    if (!msg.contains("type") || !msg["type"].is_string()) {
      send(error_message(id, "bad-type", "missing message type"));
      return;
    }
    const std::string type = msg["type"];
    if (type == "rdis") {
      send({{"type", "rdis"}, {"document", shared_->canonical}});
      return;
    }
    if (type == "list") {
      send(list_message(shared_->runtime->document()));
      return;
    }
    if (type != "call" && type != "subscribe" && type != "unsubscribe") {
      send(error_message(id, "bad-type", "unknown message type '" + type + "'"));
      return;
    }
    if (!id.is_string()) {
      send(error_message(id, "bad-request", "'" + type + "' needs a string id"));
      return;
    }
    if (type == "call") {
      call(id, msg);
    } else if (type == "subscribe") {
      subscribe(id, msg);
    } else {
      unsubscribe(id);
    }
  }

  void call(const json& id, const json& msg) {
    std::string target;
    if (msg.contains("interface") && msg["interface"].is_string()) target = msg["interface"];
    if (target.empty()) {
      send(error_message(id, "bad-request", "call needs an interface name"));
      return;
    }
    Values args;
    if (msg.contains("args")) {
      if (!msg["args"].is_object()) {
        send(error_message(id, "bad-request", "args must be an object"));
        return;
      }
      for (const auto& [k, v] : msg["args"].items()) {
        if (!v.is_number()) {
          send(error_message(id, "bad-request", "arg '" + k + "' is not a number"));
          return;
        }
        args[k] = v.get<double>();
      }
    }
    asio::post(shared_->workers, [self = shared_from_this(), id, target, args] {
      try {
        Values out;
        const auto& doc = self->shared_->runtime->document();
        if (doc.find_interface(target) == nullptr && concept_from_string(target)) {
          out = self->shared_->runtime->command(*concept_from_string(target), args);
        } else {
          out = self->shared_->runtime->call_interface(target, args);
        }
        self->send({{"type", "result"}, {"id", id}, {"values", values_json(out)}});
      } catch (const Error& e) {
        self->send(error_message(id, e.code(), e.what()));
      } catch (const std::exception& e) {
        self->send(error_message(id, "internal", e.what()));
      }
    });
  }

  void subscribe(const json& id, const json& msg) {
    if (!msg.contains("concept") || !msg["concept"].is_string()) {
      send(error_message(id, "bad-request", "subscribe needs a concept"));
      return;
    }
    if (!msg.contains("period_ms") || !msg["period_ms"].is_number()) {
      send(error_message(id, "bad-request", "subscribe needs a numeric period_ms"));
      return;
    }
    auto c = concept_from_string(msg["concept"].get<std::string>());
    if (!c) {
      send(error_message(id, "unknown-concept", "no concept '" + msg["concept"].get<std::string>() + "'"));
      return;
    }
    const std::string key = id;
    {
      std::lock_guard lock(subs_mu_);
      if (subs_.count(key) != 0) {
        send(error_message(id, "duplicate-id", "subscription '" + key + "' is already active"));
        return;
      }
    }
    double requested = msg["period_ms"].get<double>();
    int period = static_cast<int>(std::clamp(requested, double(kMinPeriodMs), double(kMaxPeriodMs)));
    std::weak_ptr<WsSession> weak = weak_from_this();
    try {
      auto sub = shared_->runtime->subscribe(
          *c, std::chrono::milliseconds(period),
          [weak, id](const ConceptSample& s) {
            if (auto self = weak.lock()) {
              self->send({{"type", "state"}, {"id", id}, {"values", values_json(s.values)}, {"age_ms", s.age.count()}});
            }
          },
          [weak, id](const Error& e) {
            if (auto self = weak.lock()) self->send(error_message(id, e.code(), e.what()));
          });
      std::lock_guard lock(subs_mu_);
      subs_[key] = std::move(sub);
    } catch (const Error& e) {
      send(error_message(id, e.code(), e.what()));
    }
  }

  void unsubscribe(const json& id) {
    std::unique_ptr<Subscription> sub;
    {
      std::lock_guard lock(subs_mu_);
      auto it = subs_.find(id.get<std::string>());
      if (it != subs_.end()) {
        sub = std::move(it->second);
        subs_.erase(it);
      }
    }
    if (!sub) {
      send(error_message(id, "unknown-subscription", "no subscription '" + id.get<std::string>() + "'"));
      return;
    }
    sub->cancel();
    send({{"type", "result"}, {"id", id}, {"values", json::object()}});
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<Shared> shared_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  bool closing_ = false;
  std::mutex subs_mu_;
  std::map<std::string, std::unique_ptr<Subscription>> subs_;
};

class Registry {
 public:
  void add(const std::shared_ptr<WsSession>& s) {
    std::lock_guard lock(mu_);
    std::erase_if(sessions_, [](const auto& w) { return w.expired(); });
    sessions_.push_back(s);
  }
  std::vector<std::shared_ptr<WsSession>> live() {
    std::lock_guard lock(mu_);
    std::vector<std::shared_ptr<WsSession>> out;
    for (auto& w : sessions_)
      if (auto s = w.lock()) out.push_back(s);
    return out;
  }

 private:
  std::mutex mu_;
  std::vector<std::weak_ptr<WsSession>> sessions_;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, std::shared_ptr<Shared> shared, std::shared_ptr<Registry> registry)
      : stream_(std::move(socket)), shared_(std::move(shared)), registry_(std::move(registry)) {}

  void start() { read(); }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->route();
    });
  }

  void route() {
    if (websocket::is_upgrade(req_)) {
      if (req_.target() != "/ws") {
        respond(http::status::not_found, "text/plain", "no websocket at this path\n");
        return;
      }
      stream_.expires_never();
      auto ws = std::make_shared<WsSession>(stream_.release_socket(), shared_);
      registry_->add(ws);
      ws->start(std::move(req_));
      return;
    }
    if (req_.method() != http::verb::get && req_.method() != http::verb::head) {
      respond(http::status::method_not_allowed, "text/plain", "GET only\n");
      return;
    }
    std::string target(req_.target());
    target = target.substr(0, target.find('?'));
    if (target == "/healthz") {
      respond(http::status::ok, "text/plain", "ok");
      return;
    }
    if (shared_->static_dir.empty()) {
      if (target == "/" || target == "/index.html") {
        respond(http::status::ok, "text/html; charset=utf-8", std::string(kIndexPage));
      } else {
        respond(http::status::not_found, "text/plain", "not found\n");
      }
      return;
    }
    if (target.find("..") != std::string::npos) {
      respond(http::status::bad_request, "text/plain", "bad path\n");
      return;
    }
    auto path = shared_->static_dir / (target == "/" ? "index.html" : target.substr(1));
    std::ifstream in(path, std::ios::binary);
    if (!in || std::filesystem::is_directory(path)) {
      respond(http::status::not_found, "text/plain", "not found\n");
      return;
    }
    std::ostringstream body;
    body << in.rdbuf();
    respond(http::status::ok, content_type(path), body.str());
  }

  void respond(http::status status, const std::string& type, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::server, "rdis-bridge");
    res->set(http::field::content_type, type);
    res->keep_alive(req_.keep_alive());
    res->body() = req_.method() == http::verb::head ? std::string() : std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec || !res->keep_alive()) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->read();
    });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::shared_ptr<Shared> shared_;
  std::shared_ptr<Registry> registry_;
};

}  // namespace

struct Server::Impl {
  asio::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::shared_ptr<Shared> shared;
  std::shared_ptr<Registry> registry = std::make_shared<Registry>();
  std::thread io_thread;
  std::atomic<bool> stopped{false};
  unsigned short port = 0;

  void accept() {
    acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpSession>(std::move(socket), shared, registry)->start();
      accept();
    });
  }
};

Server::Server(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

std::unique_ptr<Server> Server::serve(std::shared_ptr<Runtime> runtime, BridgeOptions options) {
  auto impl = std::make_unique<Impl>();
  impl->shared = std::make_shared<Shared>(std::move(runtime), options.static_dir, options.workers);
  try {
    tcp::endpoint ep(asio::ip::make_address(options.host), options.port);
    impl->acceptor.open(ep.protocol());
    impl->acceptor.set_option(asio::socket_base::reuse_address(true));
    impl->acceptor.bind(ep);
    impl->acceptor.listen(asio::socket_base::max_listen_connections);
  } catch (const boost::system::system_error& e) {
    throw Error("bind-failed", "cannot listen on " + options.host + ":" + std::to_string(options.port) + ": " +
                                   e.code().message());
  }
  impl->port = impl->acceptor.local_endpoint().port();
  impl->accept();
  Impl* raw = impl.get();
  impl->io_thread = std::thread([raw] { raw->ioc.run(); });
  spdlog::info("bridge listening on {}:{}", options.host, impl->port);
  return std::unique_ptr<Server>(new Server(std::move(impl)));
}

Server::~Server() { shutdown(); }

unsigned short Server::port() const { return impl_->port; }

void Server::shutdown() {
  if (impl_->stopped.exchange(true)) return;
  asio::post(impl_->ioc, [impl = impl_.get()] {
    beast::error_code ignored;
    impl->acceptor.close(ignored);
  });
  for (auto& s : impl_->registry->live()) s->close();
  // Close handshakes get a moment to finish; stragglers are cut off.
  auto wait_for_sessions = [this](std::chrono::milliseconds grace) {
    auto deadline = Clock::now() + grace;
    while (Clock::now() < deadline && !impl_->registry->live().empty()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  };
  wait_for_sessions(std::chrono::milliseconds(500));
  for (auto& s : impl_->registry->live()) s->abort();
  wait_for_sessions(std::chrono::milliseconds(100));
  impl_->ioc.stop();
  if (impl_->io_thread.joinable()) impl_->io_thread.join();
  impl_->shared->workers.join();
  spdlog::info("bridge stopped");
}

}  // namespace rdis::bridge
