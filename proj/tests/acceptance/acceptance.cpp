// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "process.hpp"
#include "rdis/bridge.hpp"
#include "rdis/codec.hpp"
#include "rdis/codegen.hpp"
#include "rdis/document.hpp"
#include "rdis/kinematics.hpp"
#include "rdis/net.hpp"
#include "test_support.hpp"

using namespace rdis;
using namespace std::chrono_literals;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using SteadyClock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects the first failure; later checks still run so the detail is useful.
class Checker {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok && failure_.empty()) failure_ = what;
  }
  bool ok() const { return failure_.empty(); }
  Outcome done(const std::string& summary) const { return ok() ? Outcome{true, summary} : Outcome{false, failure_}; }

 private:
  std::string failure_;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double seconds_since(SteadyClock::time_point t) {
  return std::chrono::duration<double>(SteadyClock::now() - t).count();
}

std::vector<fs::path> files_in(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// 1. parser suite

Outcome parser_suite() {
  const auto start = SteadyClock::now();
  Checker c;
  auto docs = files_in(test::fixture("valid"));
  docs.push_back(test::device("finchling"));
  docs.push_back(test::device("koalette"));
  for (const auto& p : docs) {
    auto first = parse_document(test::read_file(p));
    c.require(first.ok(), p.filename().string() + " does not parse");
    if (!first.ok()) continue;
    auto second = parse_document(canonicalize(*first.document));
    c.require(second.ok() && *second.document == *first.document, p.filename().string() + " does not round-trip");
  }
  auto negatives = files_in(test::fixture("negative"));
  for (const auto& p : negatives) {
    std::string expected = p.filename().string();
    expected = expected.substr(0, expected.find('.'));
    auto r = parse_document(test::read_file(p));
    std::vector<std::string> codes;
    for (const auto& d : r.diagnostics)
      if (d.severity == Severity::kError) codes.push_back(d.code);
    c.require(codes == std::vector<std::string>{expected},
              p.filename().string() + " expected exactly [" + expected + "], got " + std::to_string(codes.size()) +
                  " error(s)");
  }
  c.require(negatives.size() >= 10, "only " + std::to_string(negatives.size()) + " negative fixtures");
  const double secs = seconds_since(start);
  c.require(secs < 5.0, "took " + fmt(secs, 2) + " s (limit 5 s)");
  return c.done(std::to_string(docs.size()) + " documents round-trip, " + std::to_string(negatives.size()) +
                " negative fixtures hit their code, " + fmt(secs, 2) + " s");
}

// ---------------------------------------------------------------------------
// 2. codec properties

std::mt19937_64 rng(0xacce97ULL);

long long uniform_int(long long lo, long long hi) { return std::uniform_int_distribution<long long>(lo, hi)(rng); }
double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

MessageFormat random_format() {
  if (uniform_int(0, 1) == 0) {
    PositionalFormat f;
    f.frame_len = static_cast<int>(uniform_int(1, 16));
    f.command = static_cast<std::uint8_t>(uniform_int(0, 255));
    int at = 1;
    for (int n = 0; at < f.frame_len; ++n) {
      at += static_cast<int>(uniform_int(0, 2));
      auto enc = static_cast<Encoding>(uniform_int(0, 3));
      int width = encoding_width(enc);
      if (at + width > f.frame_len) break;
      f.fields.push_back({"f" + std::to_string(n), at, width, enc});
      at += width;
    }
    return f;
  }
  static const std::string kSeparators = ",;: |/";
  static const std::string kTerminators = "\n\r#!";
  DelimitedFormat f;
  f.prefix = static_cast<char>('A' + uniform_int(0, 25));
  f.separator = kSeparators[uniform_int(0, kSeparators.size() - 1)];
  f.terminator = kTerminators[uniform_int(0, kTerminators.size() - 1)];
  for (int k = 0, n = static_cast<int>(uniform_int(0, 6)); k < n; ++k) f.fields.push_back("f" + std::to_string(k));
  return f;
}

codec::FieldValues random_values(const MessageFormat& format) {
  codec::FieldValues v;
  if (const auto* p = std::get_if<PositionalFormat>(&format)) {
    for (const auto& field : p->fields) {
      auto [lo, hi] = codec::encoding_range(field.encoding);
      v[field.name] = uniform_int(lo, hi);
    }
  } else {
    for (const auto& name : std::get<DelimitedFormat>(format).fields) {
      v[name] = uniform_int(-1'000'000'000'000LL, 1'000'000'000'000LL);
    }
  }
  return v;
}

Outcome codec_properties() {
  const auto start = SteadyClock::now();
  Checker c;
  int identity = 0;
  int scans = 0;
  for (int i = 0; i < 10000; ++i) {
    auto f = random_format();
    auto v = random_values(f);
    auto frame = codec::encode(f, v);
    bool same = codec::decode(f, frame) == v;
    c.require(same, "decode(encode(v)) != v at case " + std::to_string(i));
    identity += same;

    // A stream of frames in this format, cut at random points.
    codec::Bytes stream;
    for (int k = 0, n = static_cast<int>(uniform_int(0, 8)); k < n; ++k) {
      auto more = codec::encode(f, random_values(f));
      stream.insert(stream.end(), more.begin(), more.end());
    }
    auto tail = static_cast<std::size_t>(uniform_int(0, frame.size() - 1));
    stream.insert(stream.end(), frame.begin(), frame.begin() + static_cast<long>(tail));
    auto whole = codec::frame_scan(f, stream);
    std::vector<codec::Bytes> pieces;
    codec::Bytes pending;
    std::size_t at = 0;
    while (at < stream.size()) {
      auto len = static_cast<std::size_t>(uniform_int(1, std::max<long long>(1, stream.size() - at)));
      pending.insert(pending.end(), stream.begin() + static_cast<long>(at), stream.begin() + static_cast<long>(at + len));
      at += len;
      auto part = codec::frame_scan(f, pending);
      pieces.insert(pieces.end(), part.frames.begin(), part.frames.end());
      pending = part.remainder;
    }
    bool scan_ok = pieces == whole.frames && pending == whole.remainder;
    c.require(scan_ok, "chunked frame_scan differs from one-shot at case " + std::to_string(i));
    scans += scan_ok;
  }
  const double secs = seconds_since(start);
  c.require(secs < 30.0, "took " + fmt(secs, 2) + " s (limit 30 s)");
  return c.done(std::to_string(identity) + "/10000 round-trips, " + std::to_string(scans) +
                "/10000 chunked scans match, " + fmt(secs, 2) + " s");
}

// ---------------------------------------------------------------------------
// 3. kinematics

kinematics::Pose euler(kinematics::Pose p, const kinematics::Twist& t, double dt, int steps) {
  const double h = dt / steps;
  for (int i = 0; i < steps; ++i) {
    p.x_m += t.linear_mps * std::cos(p.theta_rad) * h;
    p.y_m += t.linear_mps * std::sin(p.theta_rad) * h;
    p.theta_rad += t.angular_radps * h;
  }
  return p;
}

double angle_gap(double a, double b) { return std::abs(std::remainder(a - b, 2 * M_PI)); }

double pose_gap(const kinematics::Pose& a, const kinematics::Pose& b) {
  return std::max({std::abs(a.x_m - b.x_m), std::abs(a.y_m - b.y_m), angle_gap(a.theta_rad, b.theta_rad)});
}

kinematics::Pose random_pose() { return {uniform(-5, 5), uniform(-5, 5), uniform(-M_PI, M_PI)}; }

Outcome kinematics_properties() {
  Checker c;
  double worst_identity = 0;
  for (int i = 0; i < 1000; ++i) {
    double track = uniform(0.05, 1.0);
    kinematics::Twist t{uniform(-2, 2), uniform(-10, 10)};
    auto back = kinematics::forward(kinematics::inverse(t, track), track);
    worst_identity = std::max({worst_identity, std::abs(back.linear_mps - t.linear_mps),
                               std::abs(back.angular_radps - t.angular_radps)});
  }
  c.require(worst_identity <= 1e-12, "forward(inverse(t)) off by " + std::to_string(worst_identity));

  double worst_euler = 0;
  for (int i = 0; i < 100; ++i) {
    auto p = random_pose();
    kinematics::Twist t{uniform(-0.5, 0.5), uniform(-2, 2)};
    double dt = uniform(1e-3, 0.1);
    worst_euler = std::max(worst_euler, pose_gap(kinematics::integrate_pose(p, t, dt), euler(p, t, dt, 10000)));
  }
  c.require(worst_euler <= 1e-6, "integrate_pose differs from Euler by " + std::to_string(worst_euler));

  double worst_compose = 0;
  for (int i = 0; i < 1000; ++i) {
    auto p = random_pose();
    kinematics::Twist t{uniform(-2, 2), uniform(-5, 5)};
    double a = uniform(0, 2);
    double b = uniform(0, 2);
    auto split = kinematics::integrate_pose(kinematics::integrate_pose(p, t, a), t, b);
    worst_compose = std::max(worst_compose, pose_gap(split, kinematics::integrate_pose(p, t, a + b)));
  }
  c.require(worst_compose <= 1e-9, "composition off by " + std::to_string(worst_compose));

  char detail[160];
  std::snprintf(detail, sizeof detail, "identity err %.1e, Euler err %.1e, composition err %.1e", worst_identity,
                worst_euler, worst_compose);
  return c.done(detail);
}

// ---------------------------------------------------------------------------
// Live stack: `rdis sim` and `rdis run` as child processes.

json inspect(int port) {
  auto fd = net::connect_tcp("127.0.0.1", port, 1000ms);
  const std::string q = "?\n";
  net::write_all(fd, std::span(reinterpret_cast<const std::uint8_t*>(q.data()), q.size()));
  std::string line;
  auto deadline = SteadyClock::now() + 2s;
  while (line.find('\n') == std::string::npos) {
    if (net::wait_readable(fd, nullptr, deadline) != net::WaitResult::kReadable) throw Error("timeout", "inspect");
    auto b = net::read_some(fd);
    if (b.empty()) break;
    line.append(b.begin(), b.end());
  }
  return json::parse(line);
}

struct Sim {
  std::unique_ptr<test::Process> proc;
  int control = 0;
  int inspect_port = 0;

  explicit Sim(const std::string& profile) {
    proc = std::make_unique<test::Process>(std::vector<std::string>{
        RDIS_CLI_PATH, "--log-level", "warn", "sim", "--profile", profile, "--port", "0", "--inspect-port", "0"});
    auto c = proc->await_line("control port ", 5s);
    auto i = proc->await_line("inspect port ", 5s);
    if (!c || !i) throw std::runtime_error("rdis sim did not report its ports");
    control = std::stoi(*c);
    inspect_port = std::stoi(*i);
  }
  ~Sim() {
    proc->signal(SIGINT);
    proc->wait(3s);
  }
  json state() const { return inspect(inspect_port); }
};

struct Stack {
  Sim sim;
  std::unique_ptr<test::Process> run;
  int bridge = 0;

  explicit Stack(const std::string& device) : sim(device) {
    run = std::make_unique<test::Process>(std::vector<std::string>{
        RDIS_CLI_PATH, "--log-level", "warn", "run", test::device(device).string(), "--connect",
        "127.0.0.1:" + std::to_string(sim.control), "--bridge-port", "0"});
    auto b = run->await_line("bridge port ", 5s);
    if (!b) throw std::runtime_error("rdis run did not report its bridge port");
    bridge = std::stoi(*b);
  }
  ~Stack() {
    run->signal(SIGINT);
    run->wait(3s);
  }
  std::string url() const { return "ws://127.0.0.1:" + std::to_string(bridge) + "/ws"; }
};

struct PoseDelta {
  double forward = 0;
  double lateral = 0;
  double turn = 0;
};

// Motion between two inspections, in the frame of the first.
PoseDelta delta(const json& a, const json& b) {
  double th = a["pose"]["theta_rad"];
  double dx = b["pose"]["x_m"].get<double>() - a["pose"]["x_m"].get<double>();
  double dy = b["pose"]["y_m"].get<double>() - a["pose"]["y_m"].get<double>();
  return {dx * std::cos(th) + dy * std::sin(th), -dx * std::sin(th) + dy * std::cos(th),
          std::remainder(b["pose"]["theta_rad"].get<double>() - th, 2 * M_PI)};
}

PoseDelta hold(Stack& s, bridge::Client& client, double linear, double angular) {
  auto before = s.sim.state();
  client.call("drive", {{"linear", linear}, {"angular", angular}});
  std::this_thread::sleep_for(1s);
  client.call("drive", {{"linear", 0.0}, {"angular", 0.0}});
  std::this_thread::sleep_for(50ms);
  return delta(before, s.sim.state());
}

Outcome end_to_end(Stack& koalette, Stack& finchling) {
  Checker c;
  std::string detail;
  for (auto* entry : {&koalette, &finchling}) {
    const std::string name = entry == &koalette ? "koalette" : "finchling";
    bridge::Client client(entry->url());
    auto straight = hold(*entry, client, 0.2, 0.0);
    c.require(straight.forward >= 0.190 && straight.forward <= 0.210,
              name + " straight x = " + fmt(straight.forward) + " outside [0.190, 0.210]");
    c.require(std::abs(straight.lateral) < 0.005, name + " straight |y| = " + fmt(straight.lateral) + " >= 0.005");
    c.require(std::abs(straight.turn) < 0.02, name + " straight |theta| = " + fmt(straight.turn) + " >= 0.02");
    auto spin = hold(*entry, client, 0.0, 1.0);
    c.require(spin.turn >= 0.95 && spin.turn <= 1.05,
              name + " rotation theta = " + fmt(spin.turn) + " outside [0.95, 1.05]");
    detail += (detail.empty() ? "" : "; ") + name + " x=" + fmt(straight.forward) + " y=" + fmt(straight.lateral) +
              " th=" + fmt(straight.turn) + ", spin th=" + fmt(spin.turn);
  }
  return c.done(detail);
}

Outcome scheduling(Stack& koalette, Stack& finchling) {
  Checker c;
  std::string detail;
  // Both devices are watched over the same ten seconds.
  const auto t0 = SteadyClock::now();
  std::map<Stack*, json> first;
  std::map<Stack*, std::uint64_t> e_at_5s;
  std::map<Stack*, bool> stopped;
  for (auto* s : {&koalette, &finchling}) first[s] = s->sim.state();
  bool measured = false;
  while (SteadyClock::now() - t0 < 10s) {
    if (!measured && SteadyClock::now() - t0 >= 5s) {
      measured = true;
      for (auto* s : {&koalette, &finchling}) e_at_5s[s] = s->sim.state()["command_counts"].value("E", 0ULL);
    }
    for (auto* s : {&koalette, &finchling}) stopped[s] = stopped[s] || s->sim.state()["safety_stopped"].get<bool>();
    auto next = SteadyClock::now() + 50ms;
    if (!measured && next - t0 > 5s) next = t0 + 5s;
    std::this_thread::sleep_until(next);
  }
  for (auto* s : {&koalette, &finchling}) {
    const std::string name = s == &koalette ? "koalette" : "finchling";
    auto last = s->sim.state();
    auto polls = static_cast<long long>(e_at_5s[s]) -
                 static_cast<long long>(first[s]["command_counts"].value("E", 0ULL));
    c.require(polls >= 49 && polls <= 51, name + " sent " + std::to_string(polls) + " E queries in 5 s");
    auto stops = last["safety_stops"].get<std::uint64_t>() - first[s]["safety_stops"].get<std::uint64_t>();
    c.require(!stopped[s] && stops == 0, name + " safety stop fired during 10 s of keepalives");
    detail += (detail.empty() ? "" : "; ") + name + " " + std::to_string(polls) + " E/5 s, safety_stopped never";
  }
  return c.done(detail);
}

Outcome discovery(Stack& koalette, Stack& finchling) {
  Checker c;
  for (auto* s : {&koalette, &finchling}) {
    const std::string name = s == &koalette ? "koalette" : "finchling";
    bridge::Client client(s->url());
    client.send({{"type", "rdis"}});
    auto text = client.expect("rdis", "", 3s)["document"].get<std::string>();
    c.require(text == canonicalize(test::load_valid(test::device(name))),
              name + " discovery reply differs from the canonical document");
  }
  return c.done("rdis replies byte-identical to canonicalize for koalette and finchling");
}

// ---------------------------------------------------------------------------
// 7. codegen

std::string shell(const std::string& cmd, int* status = nullptr) {
  std::string out;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (p == nullptr) throw std::runtime_error("popen failed");
  char buf[512];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  int rc = ::pclose(p);
  if (status != nullptr) *status = rc;
  return out;
}

Outcome codegen_check() {
  Checker c;
  struct Sample {
    std::string device;
    std::string primitive;
    std::string left_field;
    long long left;
    long long right;
    codec::Bytes expected;
  };
  const std::vector<Sample> samples = {
      {"finchling", "setMotor", "left", 5, -5, {0x4D, 0x05, 0xFB, 0x00, 0x00, 0x00, 0x00, 0x00}},
      {"koalette", "setSpeed", "left", 10, -10, codec::to_bytes("D,10,-10\n")},
  };
  std::string detail = "goldens byte-stable";
  const bool have_cc = std::system("cc --version > /dev/null 2>&1") == 0;
  const fs::path work = fs::temp_directory_path() / ("rdis_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(work);

  for (const auto& s : samples) {
    auto doc = test::load_valid(test::device(s.device));
    auto a = codegen::generate(doc, "c-cli");
    auto b = codegen::generate(test::load_valid(test::device(s.device)), "c-cli");
    c.require(a.files == b.files, s.device + " generation is not deterministic");
    for (const auto& [rel, text] : a.files) {
      auto golden = test::source_dir() / "tests" / "golden" / "c-cli" / s.device / rel;
      c.require(text == test::read_file(golden), s.device + "/" + rel + " differs from its golden file");
    }

    const Primitive* p = doc.find_primitive(s.primitive);
    c.require(p != nullptr, s.device + " has no " + s.primitive);
    if (p == nullptr) continue;
    codec::FieldValues v{{p->inputs[0].name, s.left}, {p->inputs[1].name, s.right}};
    auto encoded = codec::encode(p->write_format, v);
    c.require(encoded == s.expected, s.device + " codec frame " + codec::to_hex(encoded) + " != " +
                                         codec::to_hex(s.expected));

    if (!have_cc) continue;
    codegen::write_artifact(a, work, true);
    const fs::path dir = work / s.device / "c-cli";
    const std::string exe = (dir / s.device).string();
    int rc = 0;
    auto log = shell("cc -std=c99 -Wall -Wextra -Werror -O2 -o " + exe + " " + (dir / "main.c").string() +
                         " -lm 2>&1",
                     &rc);
    c.require(rc == 0, s.device + " generated C does not compile: " + log.substr(0, 200));
    if (rc != 0) continue;
    auto dumped = shell("printf 'raw " + s.primitive + " " + std::to_string(s.left) + " " + std::to_string(s.right) +
                        "\\nquit\\n' | " + exe + " --dump");
    c.require(dumped == codec::to_hex(s.expected) + "\nok\n",
              s.device + " generated frame '" + dumped.substr(0, dumped.find('\n')) + "' != " +
                  codec::to_hex(s.expected));

    // Smoke: the generated driver moves the simulated robot.
    Sim sim(s.device);
    std::string out;
    std::thread driver([&] {
      out = shell("(printf 'drive 0.2 0\\n'; sleep 0.4; printf 'quit\\n') | " + exe + " --port " +
                      std::to_string(sim.control) + " 2>&1",
                  &rc);
    });
    std::this_thread::sleep_for(250ms);
    double left = sim.state()["wheels"]["left_mps"];
    driver.join();
    c.require(rc == 0 && out.find("ok") != std::string::npos, s.device + " driver run failed: " + out);
    c.require(std::abs(left - 0.2) <= 0.01, s.device + " driver left wheel " + fmt(left) + " m/s, expected 0.2");
  }
  fs::remove_all(work);
  detail += ", sample frames equal codec.encode";
  detail += have_cc ? ", generated drivers compile with -Werror, dump the same frames and drive the sims"
                    : ", no C compiler so compile smoke skipped";
  return c.done(detail);
}

Outcome guarded(const std::function<Outcome()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, Outcome>> results;
  auto report = [&](int n, const std::string& title, const Outcome& o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << n << " " << title << ": " << o.detail << std::endl;
    results.emplace_back(title, o);
  };

  report(1, "parser suite", guarded(parser_suite));
  report(2, "codec properties", guarded(codec_properties));
  report(3, "kinematics", guarded(kinematics_properties));

  std::unique_ptr<Stack> koalette;
  std::unique_ptr<Stack> finchling;
  std::string stack_error;
  try {
    koalette = std::make_unique<Stack>("koalette");
    finchling = std::make_unique<Stack>("finchling");
  } catch (const std::exception& e) {
    stack_error = e.what();
  }
  auto live = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!koalette || !finchling) return {false, "could not start sim and bridge: " + stack_error};
      return fn(*koalette, *finchling);
    };
  };
  // Scheduling runs first, before any motion, so the robots sit idle.
  auto sched = guarded(live(scheduling));
  report(4, "end-to-end translation", guarded(live(end_to_end)));
  report(5, "scheduling", sched);
  report(6, "discovery", guarded(live(discovery)));
  koalette.reset();
  finchling.reset();
  report(7, "codegen", guarded(codegen_check));

  bool all = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.second.pass; });
  return all ? 0 : 1;
}
