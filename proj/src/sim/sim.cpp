#include "rdis/sim.hpp"

#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

namespace rdis::sim {
namespace {

using codec::Bytes;
using Seconds = std::chrono::duration<double>;

constexpr std::size_t kMaxLine = 256;

PositionalFormat finch(std::uint8_t command, std::vector<PositionalField> fields = {}) {
  return PositionalFormat{8, command, std::move(fields)};
}

const PositionalFormat kFinchMotor = finch('M', {{"left", 1, 1, Encoding::kI8}, {"right", 2, 1, Encoding::kI8}});
const PositionalFormat kFinchKeepalive = finch('K');
const PositionalFormat kFinchQuery = finch('E');
const PositionalFormat kFinchEncoders =
    finch('e', {{"left", 1, 2, Encoding::kI16Be}, {"right", 3, 2, Encoding::kI16Be}});

DelimitedFormat koala(char prefix, std::vector<std::string> fields = {}) {
  DelimitedFormat f;
  f.prefix = prefix;
  f.fields = std::move(fields);
  return f;
}

const DelimitedFormat kKoalaSpeed = koala('D', {"left", "right"});
const DelimitedFormat kKoalaSpeedAck = koala('d');
const DelimitedFormat kKoalaQuery = koala('E');
const DelimitedFormat kKoalaEncoders = koala('e', {"left", "right"});
const DelimitedFormat kKoalaKeepalive = koala('K');
const DelimitedFormat kKoalaKeepaliveAck = koala('k');

std::int64_t wrap16(std::int64_t v) { return static_cast<std::int16_t>(static_cast<std::uint16_t>(v & 0xFFFF)); }

}  // namespace

Profile profile(const std::string& id) {
  if (id == "finchling") return Profile{"finchling", Protocol::kFinchling, 0.1, 1000, 0.5};
  if (id == "koalette") return Profile{"koalette", Protocol::kKoalette, 0.3, 5882, 1.0};
  throw Error("unknown-profile", "unknown sim profile '" + id + "'");
}

std::vector<std::string> profile_ids() { return {"finchling", "koalette"}; }

nlohmann::json Snapshot::to_json() const {
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : log_tail) log.push_back({{"dir", e.inbound ? "rx" : "tx"}, {"frame", e.frame}});
  return {
      {"pose", {{"x_m", pose.x_m}, {"y_m", pose.y_m}, {"theta_rad", pose.theta_rad}}},
      {"wheels", {{"left_mps", wheels.left_mps}, {"right_mps", wheels.right_mps}}},
      {"encoders", {{"left", left_ticks}, {"right", right_ticks}}},
      {"safety_stopped", safety_stopped},
      {"connected", connected},
      {"frames_received", frames_received},
      {"frames_dropped", frames_dropped},
      {"safety_stops", safety_stops},
      {"command_counts", command_counts},
      {"log_tail", log},
  };
}

Simulator::Simulator(Profile profile, Clock::time_point now)
    : profile_(std::move(profile)),
      wire_(profile_.protocol == Protocol::kFinchling ? MessageFormat(finch(0)) : MessageFormat(koala('?'))),
      last_(now),
      last_valid_(now) {}

void Simulator::integrate(Clock::time_point until) {
  if (until <= last_) return;
  double dt = Seconds(until - last_).count();
  auto twist = kinematics::forward(wheels_, profile_.wheel_track_m);
  pose_ = kinematics::integrate_pose(pose_, twist, dt);
  left_ticks_ += wheels_.left_mps * profile_.ticks_per_meter * dt;
  right_ticks_ += wheels_.right_mps * profile_.ticks_per_meter * dt;
  last_ = until;
}

void Simulator::advance(Clock::time_point now) {
  if (armed_ && !safety_stopped_) {
    auto due = last_valid_ + profile_.keepalive_timeout;
    if (now >= due) {
      integrate(due);
      wheels_ = {};
      safety_stopped_ = true;
      ++safety_stops_;
      spdlog::warn("sim: no valid frame for {} ms, safety stop", profile_.keepalive_timeout.count());
    }
  }
  integrate(now);
}

void Simulator::connected(Clock::time_point now) {
  advance(now);
  connected_ = true;
  armed_ = true;
  last_valid_ = now;
  pending_.clear();
}

void Simulator::disconnected(Clock::time_point now) {
  advance(now);
  connected_ = false;
  armed_ = false;
  wheels_ = {};
  pending_.clear();
}

void Simulator::set_wheels(kinematics::WheelSpeeds w, Clock::time_point now) {
  advance(now);
  accept_valid(now);
  auto limit = [&](double v) { return std::clamp(v, -profile_.max_wheel_mps, profile_.max_wheel_mps); };
  wheels_ = {limit(w.left_mps), limit(w.right_mps)};
}

void Simulator::accept_valid(Clock::time_point now) {
  last_valid_ = now;
  safety_stopped_ = false;
}

std::int64_t Simulator::reported(double ticks) const { return std::llround(ticks); }

void Simulator::log(bool inbound, std::span<const std::uint8_t> frame) {
  log_.push_back({inbound, codec::describe(wire_, frame)});
  while (log_.size() > kLogTail) log_.pop_front();
}

std::vector<std::uint8_t> Simulator::feed(std::span<const std::uint8_t> bytes, Clock::time_point now) {
  advance(now);
  pending_.insert(pending_.end(), bytes.begin(), bytes.end());
  auto scan = codec::frame_scan(wire_, pending_);
  pending_ = std::move(scan.remainder);
  if (pending_.size() > kMaxLine) {
    log(true, pending_);
    ++frames_dropped_;
    pending_.clear();
  }
  Bytes out;
  for (const auto& frame : scan.frames) {
    log(true, frame);
    auto reply = handle(frame, now);
    if (!reply.empty()) log(false, reply);
    out.insert(out.end(), reply.begin(), reply.end());
  }
  return out;
}

std::vector<std::uint8_t> Simulator::handle(std::span<const std::uint8_t> frame, Clock::time_point now) {
  if (frame.empty()) return {};
  const char cmd = static_cast<char>(frame[0]);
  auto valid = [&] {
    accept_valid(now);
    ++frames_received_;
    ++command_counts_[std::string(1, cmd)];
  };
  auto encoders = [&] { return codec::FieldValues{{"left", reported(left_ticks_)}, {"right", reported(right_ticks_)}}; };

  try {
    if (profile_.protocol == Protocol::kFinchling) {
      switch (cmd) {
        case 'M': {
          auto v = codec::decode(kFinchMotor, frame);
          if (std::abs(v["left"]) > 100 || std::abs(v["right"]) > 100) break;
          valid();
          wheels_ = {v["left"] / 100.0 * profile_.max_wheel_mps, v["right"] / 100.0 * profile_.max_wheel_mps};
          return {};
        }
        case 'K':
          codec::decode(kFinchKeepalive, frame);
          valid();
          return {};
        case 'E': {
          codec::decode(kFinchQuery, frame);
          valid();
          auto v = encoders();
          return codec::encode(kFinchEncoders, {{"left", wrap16(v["left"])}, {"right", wrap16(v["right"])}});
        }
        default:
          break;
      }
    } else {
      switch (cmd) {
        case 'D': {
          auto v = codec::decode(kKoalaSpeed, frame);
          valid();
          auto limit = [&](std::int64_t t) {
            return std::clamp(t / profile_.ticks_per_meter, -profile_.max_wheel_mps, profile_.max_wheel_mps);
          };
          wheels_ = {limit(v["left"]), limit(v["right"])};
          return codec::encode(kKoalaSpeedAck, {});
        }
        case 'K':
          codec::decode(kKoalaKeepalive, frame);
          valid();
          return codec::encode(kKoalaKeepaliveAck, {});
        case 'E':
          codec::decode(kKoalaQuery, frame);
          valid();
          return codec::encode(kKoalaEncoders, encoders());
        default:
          break;
      }
    }
  } catch (const codec::CodecError& e) {
    spdlog::debug("sim: dropping frame {}: {}", codec::describe(wire_, frame), e.what());
  }
  ++frames_dropped_;
  return {};
}

Snapshot Simulator::snapshot(Clock::time_point now) {
  advance(now);
  Snapshot s;
  s.pose = pose_;
  s.wheels = wheels_;
  s.left_ticks = reported(left_ticks_);
  s.right_ticks = reported(right_ticks_);
  s.safety_stopped = safety_stopped_;
  s.connected = connected_;
  s.frames_received = frames_received_;
  s.frames_dropped = frames_dropped_;
  s.safety_stops = safety_stops_;
  s.command_counts = command_counts_;
  s.log_tail.assign(log_.begin(), log_.end());
  return s;
}

// ---------------------------------------------------------------------------

namespace {

net::Fd accept_client(const net::Fd& listener) {
  net::Fd fd(::accept4(listener.get(), nullptr, nullptr, SOCK_CLOEXEC));
  if (fd.valid()) {
    int one = 1;
    ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  return fd;
}

struct InspectClient {
  net::Fd fd;
  std::string buffer;
};

}  // namespace

SimServer::SimServer(Profile profile, const std::string& host, int control_port, int inspect_port)
    : sim_(std::move(profile)),
      control_listen_(net::listen_tcp(host, control_port)),
      inspect_listen_(net::listen_tcp(host, inspect_port)),
      control_port_(net::local_port(control_listen_)),
      inspect_port_(net::local_port(inspect_listen_)) {
  thread_ = std::thread([this] { run(); });
}

SimServer::~SimServer() { stop(); }

void SimServer::stop() {
  {
    std::lock_guard lock(mu_);
    if (stopping_) return;
    stopping_ = true;
  }
  wake_.notify();
  if (thread_.joinable()) thread_.join();
}

Snapshot SimServer::snapshot() {
  std::lock_guard lock(mu_);
  return sim_.snapshot(Clock::now());
}

void SimServer::run() {
  net::Fd control;
  std::vector<InspectClient> inspectors;
  auto next_tick = Clock::now() + kTick;

  while (true) {
    {
      std::lock_guard lock(mu_);
      if (stopping_) break;
    }
    std::vector<pollfd> fds;
    fds.push_back({wake_.read_fd(), POLLIN, 0});
    fds.push_back({control_listen_.get(), POLLIN, 0});
    fds.push_back({inspect_listen_.get(), POLLIN, 0});
    fds.push_back({control.valid() ? control.get() : -1, POLLIN, 0});
    for (const auto& c : inspectors) fds.push_back({c.fd.get(), POLLIN, 0});

    auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(next_tick - Clock::now()).count();
    ::poll(fds.data(), fds.size(), static_cast<int>(std::max<long long>(wait, 0)));
    auto now = Clock::now();

    if (now >= next_tick) {
      std::lock_guard lock(mu_);
      sim_.advance(now);
      next_tick = now + kTick;
    }
    if (fds[0].revents & POLLIN) wake_.drain();

    if (fds[1].revents & POLLIN) {
      auto fd = accept_client(control_listen_);
      if (fd.valid() && control.valid()) {
        spdlog::warn("sim: refusing second control client");
      } else if (fd.valid()) {
        control = std::move(fd);
        std::lock_guard lock(mu_);
        sim_.connected(now);
      }
    }
    if (fds[2].revents & POLLIN) {
      auto fd = accept_client(inspect_listen_);
      if (fd.valid()) inspectors.push_back({std::move(fd), {}});
    }

    if (control.valid() && (fds[3].revents & (POLLIN | POLLHUP | POLLERR))) {
      std::vector<std::uint8_t> bytes;
      try {
        bytes = net::read_some(control);
      } catch (const Error&) {
      }
      if (bytes.empty()) {
        control.reset();
        std::lock_guard lock(mu_);
        sim_.disconnected(now);
      } else {
        std::vector<std::uint8_t> reply;
        {
          std::lock_guard lock(mu_);
          reply = sim_.feed(bytes, now);
        }
        try {
          if (!reply.empty()) net::write_all(control, reply);
        } catch (const Error&) {
          control.reset();
          std::lock_guard lock(mu_);
          sim_.disconnected(now);
        }
      }
    }

    for (std::size_t i = 0; i < inspectors.size(); ++i) {
      if (!(fds[4 + i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      auto& client = inspectors[i];
      std::vector<std::uint8_t> bytes;
      try {
        bytes = net::read_some(client.fd);
      } catch (const Error&) {
      }
      if (bytes.empty()) {
        client.fd.reset();
        continue;
      }
      client.buffer.append(bytes.begin(), bytes.end());
      std::size_t nl;
      while ((nl = client.buffer.find('\n')) != std::string::npos) {
        std::string line = client.buffer.substr(0, nl);
        client.buffer.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        nlohmann::json answer;
        if (line == "?") {
          std::lock_guard lock(mu_);
          answer = sim_.snapshot(now).to_json();
        } else {
          answer = {{"error", "bad-request"}, {"message", "send ?"}};
        }
        auto text = answer.dump() + "\n";
        try {
          net::write_all(client.fd, codec::to_bytes(text));
        } catch (const Error&) {
          client.fd.reset();
          break;
        }
      }
      if (client.buffer.size() > kMaxLine) client.fd.reset();
    }
    std::erase_if(inspectors, [](const InspectClient& c) { return !c.fd.valid(); });
  }
}

}  // namespace rdis::sim
