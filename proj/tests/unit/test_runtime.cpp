#include <doctest.h>

#include <atomic>
#include <thread>

#include "rdis/runtime.hpp"
#include "test_support.hpp"

using namespace rdis;
using namespace std::chrono_literals;
using codec::Bytes;

namespace {

std::string code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

Bytes i16be_reply(char cmd, std::int16_t left, std::int16_t right) {
  auto l = static_cast<std::uint16_t>(left);
  auto r = static_cast<std::uint16_t>(right);
  return Bytes{static_cast<std::uint8_t>(cmd), static_cast<std::uint8_t>(l >> 8), static_cast<std::uint8_t>(l),
               static_cast<std::uint8_t>(r >> 8), static_cast<std::uint8_t>(r), 0, 0, 0};
}

// Finchling firmware stand-in: answers 'E' with the current counts.
struct FakeFinch {
  std::atomic<int> left{0};
  std::atomic<int> right{0};
  std::atomic<int> step{0};  // added to both counts after each reply
  std::atomic<bool> mute{false};

  std::shared_ptr<LoopbackDevice> device() {
    return std::make_shared<LoopbackDevice>([this](std::span<const std::uint8_t> frame) -> Bytes {
      if (frame.empty() || frame[0] != 'E' || mute) return {};
      auto reply = i16be_reply('e', static_cast<std::int16_t>(left.load()), static_cast<std::int16_t>(right.load()));
      left += step;
      right += step;
      return reply;
    });
  }
};

int count_command(const LoopbackDevice& dev, std::uint8_t cmd) {
  int n = 0;
  for (const auto& w : dev.writes()) n += (!w.empty() && w[0] == cmd) ? 1 : 0;
  return n;
}

void wait_for(auto&& pred, std::chrono::milliseconds limit = 3000ms) {
  auto deadline = Clock::now() + limit;
  while (!pred() && Clock::now() < deadline) std::this_thread::sleep_for(5ms);
}

}  // namespace

TEST_CASE("on_connect runs before the first periodic frame") {
  FakeFinch fw;
  auto dev = fw.device();
  LoopbackFactory factory(dev);
  auto rt = Runtime::start(test::load_valid(test::device("finchling")), factory);
  wait_for([&] { return count_command(*dev, 'E') > 0; });
  rt->stop();
  auto writes = dev->writes();
  REQUIRE_FALSE(writes.empty());
  CHECK(writes[0] == Bytes{'M', 0, 0, 0, 0, 0, 0, 0});
  CHECK(count_command(*dev, 'E') > 0);
}

TEST_CASE("document without primitives idles and stops") {
  auto dev = std::make_shared<LoopbackDevice>();
  LoopbackFactory factory(dev);
  auto rt = Runtime::start(test::load_valid(test::fixture("valid/minimal.rdis.json")), factory);
  std::this_thread::sleep_for(50ms);
  rt->stop();
  CHECK(dev->writes().empty());
  CHECK(dev->closed());
}

TEST_CASE("serial transports are refused at start") {
  TcpTransportFactory factory;
  CHECK(code_of([&] { Runtime::start(test::load_valid(test::fixture("valid/serial.rdis.json")), factory); }) ==
        "serial-not-implemented");
}

TEST_CASE("a failed open closes connections already opened") {
  auto doc = test::load_valid(test::fixture("valid/minimal.rdis.json"));
  auto second = doc.connections[0];
  second.id = "d";
  doc.connections.push_back(second);
  auto dev = std::make_shared<LoopbackDevice>();
  LoopbackFactory factory(dev);
  factory.fail_on_open = 1;
  CHECK(code_of([&] { Runtime::start(doc, factory); }) == "connect-failed");
  CHECK(dev->closed());
}

TEST_CASE("drive straight writes equal wheel values") {
  FakeFinch fw;
  auto dev = fw.device();
  LoopbackFactory factory(dev);
  auto rt = Runtime::start(test::load_valid(test::device("finchling")), factory);
  auto out = rt->call_interface("drive", {{"linear", 0.2}, {"angular", 0}});
  CHECK(out.empty());
  rt->stop();

  // 100 * 0.2 / 0.5 percent on both wheels.
  auto pct = static_cast<std::uint8_t>(std::lround(100 * 0.2 / 0.5));
  Bytes expected{'M', pct, pct, 0, 0, 0, 0, 0};
  int seen = 0;
  for (const auto& w : dev->writes()) seen += (w == expected) ? 1 : 0;
  CHECK(seen == 1);
}

TEST_CASE("command concept maps onto drive") {
  FakeFinch fw;
  auto dev = fw.device();
  LoopbackFactory factory(dev);
  auto rt = Runtime::start(test::load_valid(test::device("finchling")), factory);
  rt->command(Concept::kCommandVelocity, {{"linear_mps", 0.0}, {"angular_radps", 2.0}});
  CHECK(code_of([&] { rt->command(Concept::kOdometry, {}); }) == "not-a-command");
  CHECK(code_of([&] { rt->sample(Concept::kCommandVelocity); }) == "not-telemetry");
  rt->stop();

  // Wheels at -/+ w*L/2 = 0.1 m/s, i.e. 20 percent of 0.5.
  auto pct = static_cast<int>(std::lround(100 * (2.0 * 0.1 / 2) / 0.5));
  Bytes expected{'M', static_cast<std::uint8_t>(-pct), static_cast<std::uint8_t>(pct), 0, 0, 0, 0, 0};
  bool found = false;
  for (const auto& w : dev->writes()) found = found || w == expected;
  CHECK(found);
}

TEST_CASE("getEncoders returns the decoded reply") {
  FakeFinch fw;
  fw.left = 1234;
  fw.right = -77;
  auto dev = fw.device();
  LoopbackFactory factory(dev);
  auto rt = Runtime::start(test::load_valid(test::device("finchling")), factory);
  auto out = rt->call_interface("getEncoders", {});
  CHECK(out == Values{{"left", 1234}, {"right", -77}});
  rt->stop();
}

TEST_CASE("call argument errors") {
  FakeFinch fw;
  auto dev = fw.device();
  LoopbackFactory factory(dev);
  auto rt = Runtime::start(test::load_valid(test::device("finchling")), factory);
  CHECK(code_of([&] { rt->call_interface("fly", {}); }) == "unknown-interface");
  CHECK(code_of([&] { rt->call_interface("drive", {{"linear", 1}}); }) == "missing-arg");
  CHECK(code_of([&] { rt->call_interface("drive", {{"linear", 1}, {"angular", 0}, {"z", 0}}); }) ==
        "unknown-arg");
  rt->stop();
}

TEST_CASE("reply timeout") {
  FakeFinch fw;
  fw.mute = true;
  auto dev = fw.device();
  LoopbackFactory factory(dev);
  auto rt = Runtime::start(test::load_valid(test::device("finchling")), factory, {.reply_timeout = 100ms});
  auto t0 = Clock::now();
  CHECK(code_of([&] { rt->call_interface("getEncoders", {}); }) == "reply-timeout");
  CHECK(Clock::now() - t0 >= 100ms);
  rt->stop();
}

TEST_CASE("periodic poll updates state") {
  FakeFinch fw;
  fw.left = 42;
  fw.right = 43;
  auto dev = fw.device();
  LoopbackFactory factory(dev);
  auto rt = Runtime::start(test::load_valid(test::device("finchling")), factory);
  wait_for([&] { return rt->state().values().at("left_ticks") == 42; });
  auto s = rt->read_state({"left_ticks", "right_ticks"});
  CHECK(s.at("left_ticks").value == 42);
  CHECK(s.at("right_ticks").value == 43);
  CHECK(s.at("left_ticks").age < 300ms);
  CHECK(code_of([&] { rt->read_state({"nope"}); }) == "unknown-state");
  rt->stop();
}

TEST_CASE("periodic cadence and keepalive") {
  FakeFinch fw;
  auto dev = fw.device();
  LoopbackFactory factory(dev);
  auto rt = Runtime::start(test::load_valid(test::device("finchling")), factory);
  std::this_thread::sleep_for(1050ms);
  rt->stop();
  // 100 ms poll period, 500 ms keepalive over about one second.
  int polls = count_command(*dev, 'E');
  CHECK(polls >= 9);
  CHECK(polls <= 11);
  CHECK(count_command(*dev, 'K') == 2);
}

TEST_CASE("odometry integrates straight travel") {
  FakeFinch fw;
  fw.step = 10;
  auto dev = fw.device();
  LoopbackFactory factory(dev);
  auto rt = Runtime::start(test::load_valid(test::device("finchling")), factory);
  wait_for([&] { return rt->state().values().at("left_ticks") >= 50; });
  rt->stop();
  auto v = rt->state().values();
  // Baseline is the first reading (0); 1000 ticks per metre.
  CHECK(v.at("pose_x") == doctest::Approx(v.at("left_ticks") / 1000).epsilon(1e-12));
  CHECK(v.at("pose_y") == 0);
  CHECK(v.at("pose_theta") == 0);
}

TEST_CASE("odometry unwraps 16-bit counters") {
  FakeFinch fw;
  fw.left = 32700;
  fw.right = 32700;
  fw.step = 20;
  auto dev = fw.device();
  LoopbackFactory factory(dev);
  auto rt = Runtime::start(test::load_valid(test::device("finchling")), factory);
  // Wait until the reported count has wrapped negative.
  wait_for([&] { return rt->state().values().at("left_ticks") < 0; });
  rt->stop();
  auto v = rt->state().values();
  REQUIRE(v.at("left_ticks") < 0);
  double travelled = v.at("left_ticks") + 65536 - 32700;
  CHECK(v.at("pose_x") == doctest::Approx(travelled / 1000).epsilon(1e-12));
}

TEST_CASE("odometry sample and subscription") {
  FakeFinch fw;
  fw.step = 5;
  auto dev = fw.device();
  LoopbackFactory factory(dev);
  auto rt = Runtime::start(test::load_valid(test::device("finchling")), factory);
  auto s = rt->sample(Concept::kOdometry);
  CHECK(s.values.count("x_m") == 1);
  CHECK(s.values.count("theta_rad") == 1);

  CHECK(code_of([&] { rt->subscribe(Concept::kOdometry, 0ms, [](const ConceptSample&) {}); }) == "bad-period");

  std::atomic<int> samples{0};
  auto sub = rt->subscribe(Concept::kOdometry, 30ms, [&](const ConceptSample&) { ++samples; });
  wait_for([&] { return samples >= 3; });
  CHECK(samples >= 3);
  sub->cancel();
  CHECK_FALSE(sub->active());
  int after = samples;
  std::this_thread::sleep_for(100ms);
  CHECK(samples == after);
  rt->stop();
}

TEST_CASE("concurrent calls are all served") {
  FakeFinch fw;
  fw.left = 7;
  auto dev = fw.device();
  LoopbackFactory factory(dev);
  auto rt = Runtime::start(test::load_valid(test::device("finchling")), factory);
  std::atomic<int> ok{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 10; ++i) {
        if (t % 2 == 0) {
          rt->call_interface("drive", {{"linear", 0.01 * i}, {"angular", 0}});
          ++ok;
        } else if (rt->call_interface("getEncoders", {}).at("left") == 7) {
          ++ok;
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(ok == 40);
  rt->stop();
}

TEST_CASE("stop is idempotent and closes the handle") {
  FakeFinch fw;
  auto dev = fw.device();
  LoopbackFactory factory(dev);
  auto rt = Runtime::start(test::load_valid(test::device("finchling")), factory);
  std::atomic<int> samples{0};
  auto sub = rt->subscribe(Concept::kOdometry, 20ms, [&](const ConceptSample&) { ++samples; });
  rt->stop();
  rt->stop();
  CHECK_FALSE(rt->running());
  CHECK_FALSE(sub->active());
  CHECK(dev->closed());
  CHECK(code_of([&] { rt->call_interface("stop", {}); }) == "handle-closed");
}

TEST_CASE("peer hang-up fails later calls") {
  FakeFinch fw;
  auto dev = fw.device();
  LoopbackFactory factory(dev);
  auto rt = Runtime::start(test::load_valid(test::device("finchling")), factory);
  dev->hang_up();
  std::this_thread::sleep_for(50ms);
  auto code = code_of([&] { rt->call_interface("getEncoders", {}); });
  CHECK(code == "transport-closed");
  rt->stop();
}
