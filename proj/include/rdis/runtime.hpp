#pragma once

// Interprets a validated RdisDocument against live transports using the
// `single` threading model: one service loop per connection owns the
// transport and is the only writer on it. Keepalive, periodic primitives and
// queued adhoc requests are all due-time sources of that loop, dispatched in
// that priority order.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "rdis/codec.hpp"
#include "rdis/error.hpp"
#include "rdis/kinematics.hpp"
#include "rdis/model.hpp"
#include "rdis/transport.hpp"

namespace rdis {

using Clock = std::chrono::steady_clock;
using Values = std::map<std::string, double>;

struct RuntimeOptions {
  std::chrono::milliseconds reply_timeout{500};
};

struct StateReading {
  double value = 0.0;
  std::chrono::milliseconds age{0};
};

/// Thread-safe store of state variable values and their update times.
class StateStore {
 public:
  StateStore(const std::vector<StateVar>& vars, Clock::time_point created);

  /// All values in `updates` become visible together.
  void update(const Values& updates, Clock::time_point when);

  /// Throws Error "unknown-state" for undeclared names.
  std::map<std::string, StateReading> snapshot(const std::vector<std::string>& names,
                                               Clock::time_point now) const;

  Values values() const;
  /// Time of the oldest update among `names` (all declared names if empty).
  Clock::time_point oldest_update(const std::vector<std::string>& names) const;

 private:
  struct Entry {
    double value;
    Clock::time_point updated;
  };
  mutable std::mutex mu_;
  std::map<std::string, Entry> entries_;
};

struct ConceptSample {
  Values values;
  std::chrono::milliseconds age{0};
};

/// A cancellable periodic stream of concept samples. Destroying it cancels.
class Subscription {
 public:
  ~Subscription();
  Subscription(const Subscription&) = delete;
  Subscription& operator=(const Subscription&) = delete;

  /// After cancel() returns no further callbacks run (unless called from
  /// inside a callback, in which case the current one finishes).
  void cancel();
  bool active() const;

 private:
  friend class Runtime;
  struct Shared {
    std::mutex mu;
    std::condition_variable cv;
    bool cancelled = false;
  };
  Subscription() = default;

  std::shared_ptr<Shared> shared_;
  std::thread thread_;
};

class ConnectionLoop;

class Runtime : public std::enable_shared_from_this<Runtime> {
 public:
  using SampleCallback = std::function<void(const ConceptSample&)>;
  using ErrorCallback = std::function<void(const Error&)>;

  /// Opens every connection, runs on_connect primitives in order, then arms
  /// periodic and keepalive schedules. On any failure all opened connections
  /// are closed and the error is rethrown.
  static std::shared_ptr<Runtime> start(RdisDocument doc, TransportFactory& factory,
                                        RuntimeOptions options = {});

  ~Runtime();
  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  /// Error codes: "unknown-interface", "missing-arg", "unknown-arg",
  /// "reply-timeout", codec codes, expression codes, "shutdown",
  /// "handle-closed", "transport-closed".
  Values call_interface(const std::string& name, const Values& args);

  /// Drives a command concept through its mapping. "unknown-concept" if the
  /// document does not map it; "not-a-command" for telemetry concepts.
  Values command(Concept concept_id, const Values& fields);

  /// Evaluates a telemetry concept once.
  ConceptSample sample(Concept concept_id);

  std::map<std::string, StateReading> read_state(const std::vector<std::string>& names) const;

  /// Emits sample(concept_id) every `period` on a dedicated thread until
  /// cancelled or the runtime stops.
  std::unique_ptr<Subscription> subscribe(Concept concept_id, std::chrono::milliseconds period,
                                          SampleCallback on_sample, ErrorCallback on_error = {});

  /// Idempotent. Pending calls fail with "shutdown".
  void stop();
  bool running() const { return running_.load(); }

  const RdisDocument& document() const { return doc_; }
  const StateStore& state() const { return state_; }

 private:
  friend class ConnectionLoop;

  Runtime(RdisDocument doc, RuntimeOptions options);

  void apply_outputs(const Primitive& p, const codec::FieldValues& decoded);
  void integrate_odometry(Values& updates);
  ConnectionLoop& loop_for(const std::string& connection_id);
  Values evaluate_returns(const Interface& itf, const expr::Env& env) const;
  expr::Env base_env() const;
  void check_running() const;

  const RdisDocument doc_;
  const RuntimeOptions options_;
  const Clock::time_point started_;
  StateStore state_;
  std::vector<std::unique_ptr<ConnectionLoop>> loops_;
  std::atomic<bool> running_{false};
  std::mutex stop_mu_;

  std::mutex integrator_mu_;
  struct OdometryState {
    bool primed = false;
    double left_ticks = 0.0;
    double right_ticks = 0.0;
    kinematics::Pose pose;
  } odom_;

  std::mutex subs_mu_;
  std::vector<std::weak_ptr<Subscription::Shared>> subscriptions_;
};

}  // namespace rdis
