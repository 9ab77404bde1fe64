#pragma once

// Typed form of an RDIS device description. Everything here is a plain
// value; a parsed document is immutable by convention and freely shared.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rdis/expr.hpp"

namespace rdis {

inline constexpr const char* kRdisVersion = "0.1";

enum class ValueKind { kInt, kFloat };

struct TcpTransport {
  std::string host;
  int port = 0;
  bool operator==(const TcpTransport&) const = default;
};

/// Accepted by the schema; the runtime refuses to open it.
struct SerialTransport {
  std::string device;
  int baud = 0;
  bool operator==(const SerialTransport&) const = default;
};

using TransportSpec = std::variant<TcpTransport, SerialTransport>;

enum class ThreadingModel { kSingle };

struct Keepalive {
  std::string primitive;
  int period_ms = 0;
  bool operator==(const Keepalive&) const = default;
};

struct Connection {
  std::string id;
  TransportSpec transport;
  ThreadingModel threading_model = ThreadingModel::kSingle;
  std::optional<Keepalive> keepalive;
  std::vector<std::string> on_connect;
  bool operator==(const Connection&) const = default;
};

struct StateVar {
  std::string name;
  ValueKind kind = ValueKind::kFloat;
  double initial = 0.0;
  bool operator==(const StateVar&) const = default;
};

enum class Encoding { kU8, kI8, kI16Be, kU16Be };

struct PositionalField {
  std::string name;
  int offset = 0;
  int width = 1;
  Encoding encoding = Encoding::kU8;
  bool operator==(const PositionalField&) const = default;
};

struct PositionalFormat {
  int frame_len = 0;
  std::uint8_t command = 0;
  std::vector<PositionalField> fields;
  bool operator==(const PositionalFormat&) const = default;
};

struct DelimitedFormat {
  char prefix = '\0';
  char separator = ',';
  char terminator = '\n';
  std::vector<std::string> fields;
  bool operator==(const DelimitedFormat&) const = default;
};

using MessageFormat = std::variant<PositionalFormat, DelimitedFormat>;

struct Param {
  std::string name;
  ValueKind kind = ValueKind::kFloat;
  bool operator==(const Param&) const = default;
};

struct OutputBinding {
  std::string field;
  /// Empty: value is returned to the caller. Otherwise the state var it feeds.
  std::string state_var;
  bool to_state() const { return !state_var.empty(); }
  bool operator==(const OutputBinding&) const = default;
};

struct Primitive {
  std::string name;
  std::string connection;
  /// nullopt for adhoc; the period otherwise.
  std::optional<int> period_ms;
  MessageFormat write_format;
  std::optional<MessageFormat> read_format;
  std::vector<Param> inputs;
  std::vector<OutputBinding> outputs;

  bool periodic() const { return period_ms.has_value(); }
  bool operator==(const Primitive&) const = default;
};

struct InterfaceCall {
  std::string primitive;
  std::map<std::string, expr::Expr> args;
  bool operator==(const InterfaceCall&) const = default;
};

struct Interface {
  std::string name;
  std::vector<Param> inputs;
  std::vector<InterfaceCall> calls;
  std::map<std::string, expr::Expr> returns;
  bool operator==(const Interface&) const = default;
};

enum class Concept { kCommandVelocity, kOdometry };

/// Dead-reckoning source for position2d.odometry: the runtime turns wheel
/// tick deltas into pose updates written to three float state vars.
struct OdometryIntegrator {
  std::string left_ticks;
  std::string right_ticks;
  expr::Expr ticks_per_meter;
  expr::Expr wheel_track_m;
  /// 0 means counters do not wrap.
  std::int64_t tick_modulus = 0;
  std::string pose_x;
  std::string pose_y;
  std::string pose_theta;
  bool operator==(const OdometryIntegrator&) const = default;
};

struct AbstractMapping {
  Concept concept_id = Concept::kCommandVelocity;
  std::string interface;
  std::map<std::string, expr::Expr> bindings;
  std::optional<OdometryIntegrator> integrator;
  bool operator==(const AbstractMapping&) const = default;
};

struct RdisDocument {
  std::string name;
  std::string version;
  std::map<std::string, double> constants;
  std::vector<Connection> connections;
  std::vector<StateVar> state_vars;
  std::vector<Primitive> primitives;
  std::vector<Interface> interfaces;
  std::vector<AbstractMapping> mappings;

  const Connection* find_connection(std::string_view id) const;
  const StateVar* find_state(std::string_view name) const;
  const Primitive* find_primitive(std::string_view name) const;
  const Interface* find_interface(std::string_view name) const;
  const AbstractMapping* find_mapping(Concept c) const;

  bool operator==(const RdisDocument&) const = default;
};

// Names used in the concrete syntax.
std::string_view to_string(ValueKind k);
std::string_view to_string(Encoding e);
std::string_view to_string(Concept c);
std::optional<Concept> concept_from_string(std::string_view s);
int encoding_width(Encoding e);

/// Input fields a concept supplies (command) or output fields it publishes
/// (telemetry).
const std::vector<std::string>& concept_fields(Concept c);
bool is_command_concept(Concept c);

}  // namespace rdis
