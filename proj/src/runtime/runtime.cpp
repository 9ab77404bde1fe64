#include "rdis/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <future>
#include <limits>
#include <set>

#include <spdlog/spdlog.h>

namespace rdis {

// ---------------------------------------------------------------------------
// StateStore

StateStore::StateStore(const std::vector<StateVar>& vars, Clock::time_point created) {
  for (const auto& v : vars) entries_[v.name] = {v.initial, created};
}

void StateStore::update(const Values& updates, Clock::time_point when) {
  std::lock_guard lock(mu_);
  for (const auto& [name, value] : updates) {
    auto it = entries_.find(name);
    if (it != entries_.end()) it->second = {value, when};
  }
}

std::map<std::string, StateReading> StateStore::snapshot(const std::vector<std::string>& names,
                                                         Clock::time_point now) const {
  std::lock_guard lock(mu_);
  std::map<std::string, StateReading> out;
  for (const auto& name : names) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("unknown-state", "state var '" + name + "' is not declared");
    auto age = std::chrono::duration_cast<std::chrono::milliseconds>(now - it->second.updated);
    out[name] = {it->second.value, std::max(age, std::chrono::milliseconds(0))};
  }
  return out;
}

Values StateStore::values() const {
  std::lock_guard lock(mu_);
  Values out;
  for (const auto& [name, e] : entries_) out[name] = e.value;
  return out;
}

Clock::time_point StateStore::oldest_update(const std::vector<std::string>& names) const {
  std::lock_guard lock(mu_);
  auto oldest = Clock::time_point::max();
  auto consider = [&](const Entry& e) { oldest = std::min(oldest, e.updated); };
  if (names.empty()) {
    for (const auto& [n, e] : entries_) consider(e);
  } else {
    for (const auto& n : names) {
      if (auto it = entries_.find(n); it != entries_.end()) consider(it->second);
    }
  }
  return oldest;
}

// ---------------------------------------------------------------------------
// Subscription

Subscription::~Subscription() { cancel(); }

void Subscription::cancel() {
  if (shared_) {
    std::lock_guard lock(shared_->mu);
    shared_->cancelled = true;
    shared_->cv.notify_all();
  }
  if (thread_.joinable()) {
    if (thread_.get_id() == std::this_thread::get_id()) {
      thread_.detach();
    } else {
      thread_.join();
    }
  }
}

bool Subscription::active() const {
  if (!shared_) return false;
  std::lock_guard lock(shared_->mu);
  return !shared_->cancelled;
}

// ---------------------------------------------------------------------------
// ConnectionLoop: the single service loop owning one transport.

class ConnectionLoop {
 public:
  ConnectionLoop(Runtime& rt, const Connection& connection, std::unique_ptr<Transport> transport)
      : rt_(rt), connection_(connection), transport_(std::move(transport)) {
    for (const auto& p : rt_.doc_.primitives) {
      if (p.connection != connection_.id) continue;
      if (!framing_) framing_ = p.read_format ? *p.read_format : p.write_format;
      if (p.periodic()) periodic_.push_back({&p, {}});
    }
    if (connection_.keepalive) keepalive_ = rt_.doc_.find_primitive(connection_.keepalive->primitive);
  }

  ~ConnectionLoop() { stop(); }

  const std::string& id() const { return connection_.id; }
  std::mutex& adhoc_mutex() { return adhoc_mu_; }

  void start() {
    auto ready = ready_.get_future();
    thread_ = std::thread([this] { run(); });
    ready.get();  // rethrows on_connect failures
  }

  std::future<codec::FieldValues> submit(const Primitive& p, codec::FieldValues values) {
    std::promise<codec::FieldValues> promise;
    auto fut = promise.get_future();
    {
      std::lock_guard lock(queue_mu_);
      if (stopping_ || failed_) {
        promise.set_exception(std::make_exception_ptr(
            Error(failed_ ? "transport-closed" : "shutdown",
                  "connection '" + connection_.id + "' is not running")));
        return fut;
      }
      queue_.push_back({&p, std::move(values), std::move(promise)});
    }
    transport_->interrupt();
    return fut;
  }

  void stop() {
    {
      std::lock_guard lock(queue_mu_);
      if (stopped_) return;
      stopped_ = true;
      stopping_ = true;
    }
    transport_->interrupt();
    if (thread_.joinable()) thread_.join();
    transport_->close();
    fail_pending(Error("shutdown", "runtime stopped"));
  }

 private:
  struct Job {
    const Primitive* primitive;
    codec::FieldValues values;
    std::promise<codec::FieldValues> promise;
  };
  struct Periodic {
    const Primitive* primitive;
    Clock::time_point due;
  };

  bool stopping() {
    std::lock_guard lock(queue_mu_);
    return stopping_;
  }

  void fail_pending(const Error& err) {
    std::deque<Job> jobs;
    {
      std::lock_guard lock(queue_mu_);
      jobs.swap(queue_);
    }
    for (auto& job : jobs) job.promise.set_exception(std::make_exception_ptr(err));
  }

  void run() {
    bool started = false;
    try {
      for (const auto& name : connection_.on_connect) {
        exchange(*rt_.doc_.find_primitive(name), {});
      }
      started = true;
      ready_.set_value();
      service();
    } catch (const Error& e) {
      if (!started) {
        ready_.set_exception(std::current_exception());
        return;
      }
      if (e.code() != "shutdown") {
        spdlog::error("connection '{}': {}", connection_.id, e.what());
        {
          std::lock_guard lock(queue_mu_);
          failed_ = true;
        }
        fail_pending(e);
      }
    }
  }

  void service() {
    const auto period = [](int ms) { return std::chrono::milliseconds(ms); };
    auto now = Clock::now();
    for (auto& p : periodic_) p.due = now + period(*p.primitive->period_ms);
    Clock::time_point keepalive_due = now + period(connection_.keepalive ? connection_.keepalive->period_ms : 0);

    while (!stopping()) {
      now = Clock::now();
      if (keepalive_ != nullptr && now >= keepalive_due) {
        run_scheduled(*keepalive_);
        keepalive_due = advance(keepalive_due, period(connection_.keepalive->period_ms));
        continue;
      }
      bool ran_periodic = false;
      for (auto& p : periodic_) {
        if (now >= p.due) {
          run_scheduled(*p.primitive);
          p.due = advance(p.due, period(*p.primitive->period_ms));
          ran_periodic = true;
          break;
        }
      }
      if (ran_periodic) continue;

      std::optional<Job> job;
      {
        std::lock_guard lock(queue_mu_);
        if (!queue_.empty()) {
          job.emplace(std::move(queue_.front()));
          queue_.pop_front();
        }
      }
      if (job) {
        run_job(*job);
        continue;
      }

      auto deadline = Clock::now() + std::chrono::seconds(1);
      if (keepalive_ != nullptr) deadline = std::min(deadline, keepalive_due);
      for (const auto& p : periodic_) deadline = std::min(deadline, p.due);
      auto bytes = transport_->read_some(deadline);
      if (!bytes.empty()) {
        rx_.insert(rx_.end(), bytes.begin(), bytes.end());
        drop_unsolicited();
      }
    }
  }

  // Fixed-rate schedule; a slot missed entirely is skipped rather than
  // replayed in a burst.
  static Clock::time_point advance(Clock::time_point due, std::chrono::milliseconds period) {
    due += period;
    auto now = Clock::now();
    if (due <= now) due = now + period;
    return due;
  }

  void run_scheduled(const Primitive& p) {
    try {
      auto decoded = exchange(p, {});
      rt_.apply_outputs(p, decoded);
    } catch (const Error& e) {
      if (e.code() == "shutdown" || e.code() == "transport-closed" || e.code() == "transport-error") throw;
      spdlog::warn("connection '{}': {} failed: {}", connection_.id, p.name, e.what());
    }
  }

  void run_job(Job& job) {
    try {
      auto decoded = exchange(*job.primitive, job.values);
      rt_.apply_outputs(*job.primitive, decoded);
      job.promise.set_value(std::move(decoded));
    } catch (const Error& e) {
      job.promise.set_exception(std::current_exception());
      if (e.code() == "shutdown" || e.code() == "transport-closed" || e.code() == "transport-error") throw;
    }
  }

  codec::FieldValues exchange(const Primitive& p, const codec::FieldValues& values) {
    auto frame = codec::encode(p.write_format, values);
    transport_->write(frame);
    spdlog::debug("connection '{}': -> {} [{}]", connection_.id, p.name, codec::describe(p.write_format, frame));
    if (!p.read_format) return {};

    const auto deadline = Clock::now() + rt_.options_.reply_timeout;
    for (;;) {
      if (auto reply = take_reply(*p.read_format)) return codec::decode(*p.read_format, *reply);
      if (stopping()) throw Error("shutdown", "runtime stopped while awaiting reply to '" + p.name + "'");
      if (Clock::now() >= deadline) {
        throw Error("reply-timeout", "no reply to '" + p.name + "' within " +
                                         std::to_string(rt_.options_.reply_timeout.count()) + " ms");
      }
      auto bytes = transport_->read_some(deadline);
      rx_.insert(rx_.end(), bytes.begin(), bytes.end());
    }
  }

  // First buffered frame carrying `format`'s command/prefix; frames before it
  // are dropped.
  std::optional<codec::Bytes> take_reply(const MessageFormat& format) {
    if (rx_.empty()) return std::nullopt;
    auto scan = codec::frame_scan(format, rx_);
    for (std::size_t i = 0; i < scan.frames.size(); ++i) {
      if (codec::matches(format, scan.frames[i])) {
        codec::Bytes rest;
        for (std::size_t k = i + 1; k < scan.frames.size(); ++k) {
          rest.insert(rest.end(), scan.frames[k].begin(), scan.frames[k].end());
        }
        rest.insert(rest.end(), scan.remainder.begin(), scan.remainder.end());
        rx_ = std::move(rest);
        return std::move(scan.frames[i]);
      }
      spdlog::debug("connection '{}': dropping unmatched frame [{}]", connection_.id,
                    codec::describe(format, scan.frames[i]));
    }
    rx_ = std::move(scan.remainder);
    return std::nullopt;
  }

  void drop_unsolicited() {
    if (!framing_) {
      rx_.clear();
      return;
    }
    auto scan = codec::frame_scan(*framing_, rx_);
    for (const auto& f : scan.frames) {
      spdlog::debug("connection '{}': dropping unsolicited frame [{}]", connection_.id, codec::describe(*framing_, f));
    }
    rx_ = std::move(scan.remainder);
  }

  Runtime& rt_;
  const Connection& connection_;
  std::unique_ptr<Transport> transport_;
  std::optional<MessageFormat> framing_;
  const Primitive* keepalive_ = nullptr;
  std::vector<Periodic> periodic_;
  codec::Bytes rx_;

  std::thread thread_;
  std::promise<void> ready_;
  std::mutex adhoc_mu_;

  std::mutex queue_mu_;
  std::deque<Job> queue_;
  bool stopping_ = false;
  bool stopped_ = false;
  bool failed_ = false;
};

// ---------------------------------------------------------------------------
// Runtime

Runtime::Runtime(RdisDocument doc, RuntimeOptions options)
    : doc_(std::move(doc)), options_(options), started_(Clock::now()), state_(doc_.state_vars, started_) {}

Runtime::~Runtime() { stop(); }

std::shared_ptr<Runtime> Runtime::start(RdisDocument doc, TransportFactory& factory, RuntimeOptions options) {
  std::shared_ptr<Runtime> rt(new Runtime(std::move(doc), options));
  try {
    for (const auto& c : rt->doc_.connections) {
      rt->loops_.push_back(std::make_unique<ConnectionLoop>(*rt, c, factory.open(c)));
    }
    rt->running_ = true;
    for (auto& loop : rt->loops_) loop->start();
  } catch (...) {
    rt->running_ = true;
    rt->stop();
    throw;
  }
  return rt;
}

void Runtime::stop() {
  std::lock_guard lock(stop_mu_);
  {
    std::lock_guard subs(subs_mu_);
    for (auto& weak : subscriptions_) {
      if (auto shared = weak.lock()) {
        std::lock_guard l(shared->mu);
        shared->cancelled = true;
        shared->cv.notify_all();
      }
    }
    subscriptions_.clear();
  }
  bool was_running = running_.exchange(false);
  if (!was_running && loops_.empty()) return;
  for (auto& loop : loops_) loop->stop();
}

void Runtime::check_running() const {
  if (!running_) throw Error("handle-closed", "runtime has been stopped");
}

ConnectionLoop& Runtime::loop_for(const std::string& connection_id) {
  for (auto& loop : loops_) {
    if (loop->id() == connection_id) return *loop;
  }
  throw Error("unknown-connection", "connection '" + connection_id + "' is not open");
}

expr::Env Runtime::base_env() const {
  expr::Env env;
  for (const auto& [k, v] : doc_.constants) env[k] = v;
  for (const auto& [k, v] : state_.values()) env[k] = v;
  return env;
}

Values Runtime::evaluate_returns(const Interface& itf, const expr::Env& env) const {
  Values out;
  for (const auto& [name, e] : itf.returns) out[name] = expr::eval(e, env);
  return out;
}

Values Runtime::call_interface(const std::string& name, const Values& args) {
  check_running();
  const Interface* itf = doc_.find_interface(name);
  if (itf == nullptr) throw Error("unknown-interface", "interface '" + name + "' is not declared");
  for (const auto& in : itf->inputs) {
    if (args.count(in.name) == 0) throw Error("missing-arg", "argument '" + in.name + "' is required by '" + name + "'");
  }
  for (const auto& [arg, v] : args) {
    bool known = std::any_of(itf->inputs.begin(), itf->inputs.end(), [&](const Param& p) { return p.name == arg; });
    if (!known) throw Error("unknown-arg", "'" + name + "' has no input '" + arg + "'");
    if (!std::isfinite(v)) throw Error("bad-arg", "argument '" + arg + "' is not finite");
  }

  // Hold each touched connection's adhoc lock for the whole invocation so
  // its calls are not interleaved with other adhoc traffic. Locks are taken
  // in loop order to avoid deadlock.
  std::set<std::string> touched;
  for (const auto& call : itf->calls) touched.insert(doc_.find_primitive(call.primitive)->connection);
  std::vector<std::unique_lock<std::mutex>> locks;
  for (auto& loop : loops_) {
    if (touched.count(loop->id()) != 0) locks.emplace_back(loop->adhoc_mutex());
  }

  expr::Env env = base_env();
  for (const auto& [k, v] : args) env[k] = v;
  for (const auto& call : itf->calls) {
    const Primitive& p = *doc_.find_primitive(call.primitive);
    codec::FieldValues fields;
    for (const auto& [input, e] : call.args) {
      double v = expr::round_half_away(expr::eval(e, env));
      if (!std::isfinite(v) || std::fabs(v) > 9.2e18) {
        throw codec::CodecError("out-of-range", "value for '" + p.name + "." + input + "' is not representable");
      }
      fields[input] = static_cast<std::int64_t>(v);
    }
    check_running();
    auto decoded = loop_for(p.connection).submit(p, std::move(fields)).get();
    for (const auto& out : p.outputs) {
      if (!out.to_state()) env[p.name + "." + out.field] = static_cast<double>(decoded.at(out.field));
    }
    // Later calls and returns see state written by this call.
    for (const auto& [k, v] : state_.values()) env[k] = v;
  }
  return evaluate_returns(*itf, env);
}

Values Runtime::command(Concept concept_id, const Values& fields) {
  check_running();
  const AbstractMapping* m = doc_.find_mapping(concept_id);
  if (m == nullptr) throw Error("unknown-concept", std::string(to_string(concept_id)) + " is not mapped");
  if (!is_command_concept(concept_id)) {
    throw Error("not-a-command", std::string(to_string(concept_id)) + " is a telemetry concept");
  }
  expr::Env env;
  for (const auto& [k, v] : doc_.constants) env[k] = v;
  for (const auto& f : concept_fields(concept_id)) {
    auto it = fields.find(f);
    if (it == fields.end()) throw Error("missing-arg", "concept field '" + f + "' is required");
    env[f] = it->second;
  }
  Values args;
  for (const auto& [input, e] : m->bindings) args[input] = expr::eval(e, env);
  return call_interface(m->interface, args);
}

ConceptSample Runtime::sample(Concept concept_id) {
  check_running();
  const AbstractMapping* m = doc_.find_mapping(concept_id);
  if (m == nullptr) throw Error("unknown-concept", std::string(to_string(concept_id)) + " is not mapped");
  if (is_command_concept(concept_id)) {
    throw Error("not-telemetry", std::string(to_string(concept_id)) + " is a command concept");
  }
  const Interface& itf = *doc_.find_interface(m->interface);
  std::vector<std::string> sources;
  for (const auto& [name, e] : itf.returns) {
    for (const auto& v : expr::free_vars(e)) {
      if (doc_.find_state(v) != nullptr) sources.push_back(v);
    }
  }
  auto oldest = sources.empty() ? Clock::now() : state_.oldest_update(sources);
  Values returns = call_interface(itf.name, {});
  expr::Env env;
  for (const auto& [k, v] : doc_.constants) env[k] = v;
  for (const auto& [k, v] : returns) env[k] = v;
  ConceptSample out;
  for (const auto& [field, e] : m->bindings) out.values[field] = expr::eval(e, env);
  out.age = std::max(std::chrono::milliseconds(0),
                     std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - oldest));
  return out;
}

std::map<std::string, StateReading> Runtime::read_state(const std::vector<std::string>& names) const {
  check_running();
  return state_.snapshot(names, Clock::now());
}

std::unique_ptr<Subscription> Runtime::subscribe(Concept concept_id, std::chrono::milliseconds period,
                                                 SampleCallback on_sample, ErrorCallback on_error) {
  check_running();
  const AbstractMapping* m = doc_.find_mapping(concept_id);
  if (m == nullptr) throw Error("unknown-concept", std::string(to_string(concept_id)) + " is not mapped");
  if (is_command_concept(concept_id)) {
    throw Error("not-telemetry", std::string(to_string(concept_id)) + " cannot be subscribed");
  }
  if (period.count() <= 0) throw Error("bad-period", "subscription period must be positive");

  std::unique_ptr<Subscription> sub(new Subscription());
  sub->shared_ = std::make_shared<Subscription::Shared>();
  {
    std::lock_guard lock(subs_mu_);
    subscriptions_.push_back(sub->shared_);
  }
  std::weak_ptr<Runtime> weak = weak_from_this();
  sub->thread_ = std::thread([weak, shared = sub->shared_, concept_id, period, on_sample = std::move(on_sample),
                              on_error = std::move(on_error)] {
    auto next = Clock::now() + period;
    for (;;) {
      {
        std::unique_lock lock(shared->mu);
        if (shared->cv.wait_until(lock, next, [&] { return shared->cancelled; })) return;
      }
      next += period;
      if (next <= Clock::now()) next = Clock::now() + period;
      auto rt = weak.lock();
      if (!rt || !rt->running()) return;
      try {
        auto s = rt->sample(concept_id);
        {
          std::lock_guard lock(shared->mu);
          if (shared->cancelled) return;
        }
        on_sample(s);
      } catch (const Error& e) {
        if (e.code() == "handle-closed" || e.code() == "shutdown") return;
        if (on_error) on_error(e);
      }
    }
  });
  return sub;
}

// Called from service loops after every successful exchange.
void Runtime::apply_outputs(const Primitive& p, const codec::FieldValues& decoded) {
  Values updates;
  for (const auto& out : p.outputs) {
    if (out.to_state()) updates[out.state_var] = static_cast<double>(decoded.at(out.field));
  }
  if (updates.empty()) return;
  std::lock_guard lock(integrator_mu_);
  integrate_odometry(updates);
  state_.update(updates, Clock::now());
}

// Turns wheel tick deltas into an exact-arc pose update. The arc only depends
// on the two wheel distances, so the time between samples is irrelevant.
void Runtime::integrate_odometry(Values& updates) {
  const AbstractMapping* m = doc_.find_mapping(Concept::kOdometry);
  if (m == nullptr || !m->integrator) return;
  const auto& in = *m->integrator;
  if (updates.count(in.left_ticks) == 0 && updates.count(in.right_ticks) == 0) return;

  auto current = state_.values();
  for (const auto& [k, v] : updates) current[k] = v;
  double left = current.at(in.left_ticks);
  double right = current.at(in.right_ticks);
  if (!odom_.primed) {
    odom_.primed = true;
    odom_.left_ticks = left;
    odom_.right_ticks = right;
    odom_.pose = {current.at(in.pose_x), current.at(in.pose_y), current.at(in.pose_theta)};
    return;
  }
  auto delta = [&](double now, double before) {
    double d = now - before;
    if (in.tick_modulus > 0) {
      const auto mod = static_cast<double>(in.tick_modulus);
      d = std::fmod(d, mod);
      if (d >= mod / 2) d -= mod;
      if (d < -mod / 2) d += mod;
    }
    return d;
  };
  expr::Env consts;
  for (const auto& [k, v] : doc_.constants) consts[k] = v;
  double tpm = expr::eval(in.ticks_per_meter, consts);
  double track = expr::eval(in.wheel_track_m, consts);
  if (tpm == 0.0) throw Error("division-by-zero", "ticks_per_meter evaluates to zero");
  kinematics::WheelSpeeds dist{delta(left, odom_.left_ticks) / tpm, delta(right, odom_.right_ticks) / tpm};
  odom_.left_ticks = left;
  odom_.right_ticks = right;
  odom_.pose = kinematics::integrate_pose(odom_.pose, kinematics::forward(dist, track), 1.0);
  updates[in.pose_x] = odom_.pose.x_m;
  updates[in.pose_y] = odom_.pose.y_m;
  updates[in.pose_theta] = odom_.pose.theta_rad;
}

}  // namespace rdis
