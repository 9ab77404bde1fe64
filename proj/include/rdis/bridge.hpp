#pragma once

// Websocket bridge: discovery, interface calls and concept subscriptions for
// one running device, as JSON text frames on /ws. Plain HTTP on the same port
// answers /healthz and serves static files at /.

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "rdis/runtime.hpp"

namespace rdis::bridge {

inline constexpr int kMinPeriodMs = 20;
inline constexpr int kMaxPeriodMs = 5000;

struct BridgeOptions {
  std::string host = "127.0.0.1";
  /// 0 picks a free port.
  unsigned short port = 0;
  /// Served at /. Empty: a built-in page describing the endpoints.
  std::filesystem::path static_dir;
  /// Threads running blocking interface calls.
  std::size_t workers = 4;
};

class Server {
 public:
  /// Throws Error "bind-failed".
  static std::unique_ptr<Server> serve(std::shared_ptr<Runtime> runtime, BridgeOptions options = {});

  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const;

  /// Idempotent. Cancels all subscriptions, sends a close frame to every
  /// client and stops accepting.
  void shutdown();

 private:
  struct Impl;
  explicit Server(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

/// Blocking websocket client for the bridge protocol.
class Client {
 public:
  /// Accepts "ws://host:port[/path]" or "host:port"; the path defaults to /ws.
  /// Throws Error "connect-failed" or "bad-url".
  explicit Client(const std::string& url, std::chrono::milliseconds timeout = std::chrono::milliseconds(3000));
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  void send(const nlohmann::json& message);
  /// Sends raw text, for exercising malformed input.
  void send_text(const std::string& text);

  /// Next message, or nullopt when `timeout` passes first. Throws Error
  /// "connection-closed" once the server has closed.
  std::optional<nlohmann::json> receive(std::chrono::milliseconds timeout);

  /// Waits for a message of `type` whose id equals `id` (any id if empty),
  /// skipping others. Throws Error "timeout" when none arrives in time.
  nlohmann::json expect(const std::string& type, const std::string& id, std::chrono::milliseconds timeout);

  /// Sends a call and returns its result values. Error replies are rethrown
  /// as Error with the reply's code.
  nlohmann::json call(const std::string& interface, const nlohmann::json& args,
                      std::chrono::milliseconds timeout = std::chrono::milliseconds(3000));

  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int next_id_ = 0;
};

}  // namespace rdis::bridge
