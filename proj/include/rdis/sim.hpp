#pragma once

// Emulated robot firmwares with differential-drive physics, served over TCP.

#include <chrono>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rdis/codec.hpp"
#include "rdis/kinematics.hpp"
#include "rdis/net.hpp"

namespace rdis::sim {

using Clock = std::chrono::steady_clock;

enum class Protocol { kFinchling, kKoalette };

struct Profile {
  std::string id;
  Protocol protocol = Protocol::kFinchling;
  double wheel_track_m = 0.1;
  double ticks_per_meter = 1000;
  double max_wheel_mps = 0.5;
  std::chrono::milliseconds keepalive_timeout{2000};
};

/// "finchling" or "koalette"; anything else throws Error "unknown-profile".
Profile profile(const std::string& id);
std::vector<std::string> profile_ids();

struct LogEntry {
  bool inbound = true;
  std::string frame;  // hex for positional, escaped text for delimited
};

struct Snapshot {
  kinematics::Pose pose;
  kinematics::WheelSpeeds wheels;
  std::int64_t left_ticks = 0;
  std::int64_t right_ticks = 0;
  bool safety_stopped = false;
  bool connected = false;
  std::uint64_t frames_received = 0;
  std::uint64_t frames_dropped = 0;
  std::uint64_t safety_stops = 0;
  std::map<std::string, std::uint64_t> command_counts;
  std::vector<LogEntry> log_tail;

  nlohmann::json to_json() const;
};

/// Firmware and physics without any I/O. Time is passed in explicitly so
/// the state can be advanced to the exact arrival time of each frame.
class Simulator {
 public:
  explicit Simulator(Profile profile, Clock::time_point now = Clock::now());

  const Profile& profile() const { return profile_; }

  /// Feeds control-stream bytes received at `now`; returns reply bytes.
  std::vector<std::uint8_t> feed(std::span<const std::uint8_t> bytes, Clock::time_point now);

  /// Integrates the pose up to `now`, applying the safety stop if it fell
  /// due in between.
  void advance(Clock::time_point now);

  void connected(Clock::time_point now);
  void disconnected(Clock::time_point now);

  /// Sets wheel speeds directly, as a valid motor command would.
  void set_wheels(kinematics::WheelSpeeds w, Clock::time_point now);

  Snapshot snapshot(Clock::time_point now);

  static constexpr std::size_t kLogTail = 32;

 private:
  void integrate(Clock::time_point until);
  std::vector<std::uint8_t> handle(std::span<const std::uint8_t> frame, Clock::time_point now);
  void log(bool inbound, std::span<const std::uint8_t> frame);
  void accept_valid(Clock::time_point now);
  std::int64_t reported(double ticks) const;

  Profile profile_;
  MessageFormat wire_;  // framing of inbound frames
  Clock::time_point last_;
  kinematics::Pose pose_;
  kinematics::WheelSpeeds wheels_;
  double left_ticks_ = 0;
  double right_ticks_ = 0;
  bool armed_ = false;
  Clock::time_point last_valid_;
  bool safety_stopped_ = false;
  bool connected_ = false;
  std::vector<std::uint8_t> pending_;
  std::uint64_t frames_received_ = 0;
  std::uint64_t frames_dropped_ = 0;
  std::uint64_t safety_stops_ = 0;
  std::map<std::string, std::uint64_t> command_counts_;
  std::deque<LogEntry> log_;
};

/// TCP front end: one control client at a time on `control_port`, any number
/// of inspection clients on `inspect_port` sending "?\n" for a JSON line.
class SimServer {
 public:
  /// Port 0 picks an ephemeral port. Throws Error "bind-failed".
  SimServer(Profile profile, const std::string& host, int control_port, int inspect_port);
  ~SimServer();
  SimServer(const SimServer&) = delete;
  SimServer& operator=(const SimServer&) = delete;

  int control_port() const { return control_port_; }
  int inspect_port() const { return inspect_port_; }

  Snapshot snapshot();
  /// Idempotent.
  void stop();

  static constexpr std::chrono::milliseconds kTick{10};

 private:
  void run();

  std::mutex mu_;
  Simulator sim_;
  net::Fd control_listen_;
  net::Fd inspect_listen_;
  int control_port_ = 0;
  int inspect_port_ = 0;
  net::WakePipe wake_;
  bool stopping_ = false;
  std::thread thread_;
};

}  // namespace rdis::sim
