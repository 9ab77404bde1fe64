// rdis: validate, inspect, generate, simulate and run RDIS device documents.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "rdis/bridge.hpp"
#include "rdis/codegen.hpp"
#include "rdis/document.hpp"
#include "rdis/runtime.hpp"
#include "rdis/sim.hpp"

namespace {

using namespace rdis;
using nlohmann::json;

constexpr int kOk = 0;
constexpr int kDomainError = 1;
constexpr int kUsageError = 2;

/// Raised for problems the caller caused: bad paths, bad flag values.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ParseResult load(const std::string& path) {
  try {
    return load_document(path);
  } catch (const Error& e) {
    if (e.code() == "io-error") throw UsageError(e.what());
    throw;
  }
}

RdisDocument load_valid(const std::string& path) {
  auto r = load(path);
  if (!r.ok()) {
    for (const auto& d : r.diagnostics) std::cerr << format_diagnostic(d) << "\n";
    throw Error("invalid-document", path + " is not a valid RDIS document");
  }
  return *r.document;
}

std::pair<std::string, int> host_port(const std::string& text) {
  auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0) throw UsageError("expected host:port, got '" + text + "'");
  try {
    std::size_t used = 0;
    int port = std::stoi(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1 || port < 0 || port > 65535) throw std::out_of_range("port");
    return {text.substr(0, colon), port};
  } catch (const std::logic_error&) {
    throw UsageError("bad port in '" + text + "'");
  }
}

// Blocks until SIGINT or SIGTERM. Signals must already be blocked.
void wait_for_signal() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
  spdlog::info("signal {}, shutting down", sig);
}

void block_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

// ---------------------------------------------------------------------------
// inspect

std::string char_text(char c) {
  if (c == '\n') return "\\n";
  if (c == '\r') return "\\r";
  if (c == '\t') return "\\t";
  return std::string(1, c);
}

std::string describe_format(const MessageFormat& f) {
  std::ostringstream out;
  if (const auto* p = std::get_if<PositionalFormat>(&f)) {
    char hex[8];
    std::snprintf(hex, sizeof hex, "0x%02X", p->command);
    out << "positional " << p->frame_len << " bytes, command " << hex;
    if (p->command >= 0x20 && p->command < 0x7f) out << " '" << static_cast<char>(p->command) << "'";
    for (const auto& field : p->fields) out << ", " << field.name << "@" << field.offset << ":" << to_string(field.encoding);
  } else {
    const auto& d = std::get<DelimitedFormat>(f);
    out << "delimited '" << char_text(d.prefix) << "'";
    for (const auto& field : d.fields) out << " " << char_text(d.separator) << field;
    out << " '" << char_text(d.terminator) << "'";
  }
  return out.str();
}

json inspect_json(const RdisDocument& doc) {
  json j{{"name", doc.name}, {"version", doc.version}};
  j["connections"] = json::array();
  for (const auto& c : doc.connections) {
    json cj{{"id", c.id}, {"on_connect", c.on_connect}};
    if (const auto* t = std::get_if<TcpTransport>(&c.transport)) {
      cj["transport"] = "tcp " + t->host + ":" + std::to_string(t->port);
    } else {
      const auto& s = std::get<SerialTransport>(c.transport);
      cj["transport"] = "serial " + s.device + " @" + std::to_string(s.baud);
    }
    cj["keepalive"] = c.keepalive ? json{{"primitive", c.keepalive->primitive}, {"period_ms", c.keepalive->period_ms}}
                                  : json(nullptr);
    j["connections"].push_back(cj);
  }
  j["primitives"] = json::array();
  for (const auto& p : doc.primitives) {
    json pj{{"name", p.name},
            {"connection", p.connection},
            {"frequency", p.periodic() ? "periodic " + std::to_string(*p.period_ms) + " ms" : "adhoc"},
            {"write", describe_format(p.write_format)}};
    pj["read"] = p.read_format ? json(describe_format(*p.read_format)) : json(nullptr);
    j["primitives"].push_back(pj);
  }
  j["interfaces"] = json::array();
  for (const auto& i : doc.interfaces) {
    json inputs = json::array();
    for (const auto& in : i.inputs) inputs.push_back(in.name);
    json returns = json::array();
    for (const auto& [name, _] : i.returns) returns.push_back(name);
    j["interfaces"].push_back({{"name", i.name}, {"inputs", inputs}, {"returns", returns}});
  }
  j["concepts"] = json::array();
  for (const auto& m : doc.mappings) {
    j["concepts"].push_back({{"concept", to_string(m.concept_id)}, {"interface", m.interface}});
  }
  return j;
}

std::string inspect_text(const RdisDocument& doc) {
  const json j = inspect_json(doc);
  std::ostringstream out;
  out << doc.name << " " << doc.version << "\n";
  out << "connections:\n";
  for (const auto& c : j["connections"]) {
    out << "  " << c["id"].get<std::string>() << "  " << c["transport"].get<std::string>();
    if (!c["keepalive"].is_null()) {
      out << "  keepalive " << c["keepalive"]["primitive"].get<std::string>() << " every "
          << c["keepalive"]["period_ms"] << " ms";
    }
    out << "\n";
  }
  out << "primitives:\n";
  for (const auto& p : j["primitives"]) {
    out << "  " << p["name"].get<std::string>() << "  (" << p["frequency"].get<std::string>() << ")\n";
    out << "    write: " << p["write"].get<std::string>() << "\n";
    if (!p["read"].is_null()) out << "    read:  " << p["read"].get<std::string>() << "\n";
  }
  out << "interfaces:\n";
  for (const auto& i : j["interfaces"]) {
    std::string ins;
    for (const auto& x : i["inputs"]) ins += (ins.empty() ? "" : ", ") + x.get<std::string>();
    out << "  " << i["name"].get<std::string>() << "(" << ins << ")";
    if (!i["returns"].empty()) {
      std::string outs;
      for (const auto& x : i["returns"]) outs += (outs.empty() ? "" : ", ") + x.get<std::string>();
      out << " -> " << outs;
    }
    out << "\n";
  }
  out << "concepts:\n";
  for (const auto& c : j["concepts"]) {
    out << "  " << c["concept"].get<std::string>() << " -> " << c["interface"].get<std::string>() << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_validate(const std::string& path) {
  auto r = load(path);
  for (const auto& d : r.diagnostics) std::cout << format_diagnostic(d) << "\n";
  if (!r.ok()) return kDomainError;
  std::cout << path << ": ok\n";
  return kOk;
}

int cmd_inspect(const std::string& path, bool as_json) {
  auto doc = load_valid(path);
  if (as_json) {
    std::cout << inspect_json(doc).dump(2) << "\n";
  } else {
    std::cout << inspect_text(doc);
  }
  return kOk;
}

int cmd_generate(const std::string& path, const std::string& target, const std::string& out, bool force) {
  auto doc = load_valid(path);
  auto artifact = codegen::generate(doc, target);
  for (const auto& p : codegen::write_artifact(artifact, out, force)) std::cout << p.string() << "\n";
  return kOk;
}

int cmd_sim(const std::string& profile, const std::string& host, int port, int inspect_port) {
  sim::SimServer server(sim::profile(profile), host, port, inspect_port);
  std::cout << "control port " << server.control_port() << "\n"
            << "inspect port " << server.inspect_port() << "\n"
            << std::flush;
  wait_for_signal();
  server.stop();
  return kOk;
}

int cmd_run(const std::string& path, const std::string& connect, const std::string& host, int bridge_port,
            const std::string& static_dir, int reply_timeout_ms) {
  auto doc = load_valid(path);
  std::unique_ptr<TcpTransportFactory> factory;
  if (connect.empty()) {
    factory = std::make_unique<TcpTransportFactory>();
  } else {
    auto [h, p] = host_port(connect);
    factory = std::make_unique<TcpTransportFactory>(TcpTransportFactory::Endpoint{h, p});
  }
  RuntimeOptions options;
  options.reply_timeout = std::chrono::milliseconds(reply_timeout_ms);
  auto runtime = Runtime::start(std::move(doc), *factory, options);
  bridge::BridgeOptions bopts;
  bopts.host = host;
  bopts.port = static_cast<unsigned short>(bridge_port);
  bopts.static_dir = static_dir;
  std::unique_ptr<bridge::Server> server;
  try {
    server = bridge::Server::serve(runtime, bopts);
  } catch (...) {
    runtime->stop();
    throw;
  }
  std::cout << "bridge port " << server->port() << "\n" << std::flush;
  wait_for_signal();
  server->shutdown();
  runtime->stop();
  return kOk;
}

int cmd_drive(const std::string& url, double linear, double angular, double duration) {
  bridge::Client client(url);
  client.send({{"type", "list"}});
  auto list = client.expect("list", "", std::chrono::seconds(3));
  const std::string concept_name(to_string(Concept::kCommandVelocity));
  bool mapped = false;
  for (const auto& c : list["concepts"]) mapped = mapped || c["concept"] == concept_name;
  if (!mapped) throw Error("unknown-concept", "device does not map " + concept_name);

  const json twist{{"linear_mps", linear}, {"angular_radps", angular}};
  if (duration <= 0) {
    client.call(concept_name, twist);
    return kOk;
  }
  // Repeat at 10 Hz so the command outlives any device watchdog, then stop.
  const auto start = std::chrono::steady_clock::now();
  const auto end = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                               std::chrono::duration<double>(duration));
  auto next = start;
  while (next < end) {
    client.call(concept_name, twist);
    next += std::chrono::milliseconds(100);
    std::this_thread::sleep_until(std::min(next, end));
  }
  client.call(concept_name, {{"linear_mps", 0.0}, {"angular_radps", 0.0}});
  client.close();
  return kOk;
}

int cmd_discover(const std::string& url, bool summary) {
  bridge::Client client(url);
  client.send({{"type", "rdis"}});
  auto text = client.expect("rdis", "", std::chrono::seconds(3))["document"].get<std::string>();
  client.close();
  if (!summary) {
    std::cout << text << std::flush;
    return kOk;
  }
  auto r = parse_document(text);
  if (!r.ok()) throw Error("invalid-document", "device sent an invalid document");
  std::cout << inspect_text(*r.document);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  block_signals();
  auto logger = spdlog::stderr_color_mt("rdis");
  spdlog::set_default_logger(logger);

  CLI::App app{"RDIS toolchain: device documents, simulator, runtime bridge and code generation"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->envname("RDIS_LOG_LEVEL")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::string path;
  bool as_json = false;
  bool force = false;
  bool summary = false;
  std::string target = "c-cli";
  std::string out_dir = "generated";
  std::string profile;
  std::string host = "127.0.0.1";
  int port = 0;
  int inspect_port = 0;
  std::string connect;
  int bridge_port = 8080;
  std::string static_dir;
  int reply_timeout_ms = 500;
  std::string url;
  double linear = 0.0;
  double angular = 0.0;
  double duration = 0.0;

  auto* validate = app.add_subcommand("validate", "Check a document and list diagnostics");
  validate->add_option("path", path, "RDIS document")->required();

  auto* inspect = app.add_subcommand("inspect", "Summarize connections, primitives, interfaces and concepts");
  inspect->add_option("path", path, "RDIS document")->required();
  inspect->add_flag("--json", as_json, "Machine-readable output");

  auto* generate = app.add_subcommand("generate", "Generate driver source from a document");
  generate->add_option("path", path, "RDIS document")->required();
  generate->add_option("--target", target, "Generator target")->envname("RDIS_TARGET")->capture_default_str();
  generate->add_option("--out", out_dir, "Output root")->envname("RDIS_OUT")->capture_default_str();
  generate->add_flag("--force", force, "Replace existing files");

  auto* sim_cmd = app.add_subcommand("sim", "Serve an emulated device firmware until interrupted");
  sim_cmd->add_option("--profile", profile, "Device profile")
      ->required()
      ->envname("RDIS_PROFILE")
      ->check(CLI::IsMember(sim::profile_ids()));
  sim_cmd->add_option("--host", host, "Listen address")->envname("RDIS_HOST")->capture_default_str();
  sim_cmd->add_option("--port", port, "Control port, 0 for any")->envname("RDIS_PORT")->check(CLI::Range(0, 65535));
  sim_cmd->add_option("--inspect-port", inspect_port, "Inspection port, 0 for any")
      ->envname("RDIS_INSPECT_PORT")
      ->check(CLI::Range(0, 65535));

  auto* run = app.add_subcommand("run", "Start the runtime and websocket bridge against a device");
  run->add_option("path", path, "RDIS document")->required();
  run->add_option("--connect", connect, "host:port overriding the document's tcp endpoint")
      ->envname("RDIS_CONNECT");
  run->add_option("--host", host, "Bridge listen address")->envname("RDIS_HOST")->capture_default_str();
  run->add_option("--bridge-port", bridge_port, "Bridge port, 0 for any")
      ->envname("RDIS_BRIDGE_PORT")
      ->check(CLI::Range(0, 65535))
      ->capture_default_str();
  run->add_option("--static-dir", static_dir, "Directory served at /")->envname("RDIS_STATIC_DIR");
  run->add_option("--reply-timeout-ms", reply_timeout_ms, "Reply timeout for read primitives")
      ->envname("RDIS_REPLY_TIMEOUT_MS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* drive = app.add_subcommand("drive", "Send a velocity command through a bridge");
  drive->add_option("--connect", url, "Bridge url, ws://host:port")->required()->envname("RDIS_BRIDGE");
  drive->add_option("--linear", linear, "Linear velocity, m/s");
  drive->add_option("--angular", angular, "Angular velocity, rad/s");
  drive->add_option("--duration", duration, "Seconds to hold the command, then stop; 0 sends it once")
      ->check(CLI::NonNegativeNumber);

  auto* discover = app.add_subcommand("discover", "Print the document a bridge serves");
  discover->add_option("--connect", url, "Bridge url, ws://host:port")->required()->envname("RDIS_BRIDGE");
  discover->add_flag("--summary", summary, "Print the inspect view instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsageError;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*validate) return cmd_validate(path);
    if (*inspect) return cmd_inspect(path, as_json);
    if (*generate) return cmd_generate(path, target, out_dir, force);
    if (*sim_cmd) return cmd_sim(profile, host, port, inspect_port);
    if (*run) return cmd_run(path, connect, host, bridge_port, static_dir, reply_timeout_ms);
    if (*drive) return cmd_drive(url, linear, angular, duration);
    if (*discover) return cmd_discover(url, summary);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const Error& e) {
    std::cerr << "error[" << e.code() << "]: " << e.what() << "\n";
    return kDomainError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainError;
  }
  return kUsageError;
}
