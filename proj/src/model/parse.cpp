#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "rdis/document.hpp"

namespace rdis {
namespace {

using json = nlohmann::json;

bool valid_identifier(std::string_view s) {
  if (s.empty()) return false;
  auto start = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
  if (!start(s.front())) return false;
  for (char c : s) {
    if (!start(c) && !(c >= '0' && c <= '9')) return false;
  }
  return true;
}

std::string index_path(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

std::string key_path(const std::string& base, std::string_view key) {
  return base.empty() ? std::string(key) : base + "." + std::string(key);
}

const char* type_name(const json& j) { return j.type_name(); }

// Walks the JSON tree, collecting every schema violation instead of stopping
// at the first one.
class SchemaReader {
 public:
  explicit SchemaReader(std::vector<Diagnostic>& diags) : diags_(diags) {}

  void error(const std::string& path, std::string code, std::string message) {
    diags_.push_back({Severity::kError, std::move(code), path, std::move(message)});
  }

  bool ok() const { return !has_errors(diags_); }

  // Object with a closed key set. Returns false if `j` is not an object.
  bool object(const json& j, const std::string& path, std::initializer_list<std::string_view> required,
              std::initializer_list<std::string_view> optional) {
    if (!j.is_object()) {
      error(path, "bad-type", std::string("expected object, found ") + type_name(j));
      return false;
    }
    for (auto key : required) {
      if (!j.contains(key)) error(key_path(path, key), "missing-key", "required key '" + std::string(key) + "' is missing");
    }
    for (const auto& [key, value] : j.items()) {
      bool known = false;
      for (auto k : required) known = known || k == key;
      for (auto k : optional) known = known || k == key;
      if (!known) error(key_path(path, key), "unknown-key", "unknown key '" + key + "'");
    }
    return true;
  }

  std::optional<std::string> string(const json& j, const std::string& path) {
    if (!j.is_string()) {
      error(path, "bad-type", std::string("expected string, found ") + type_name(j));
      return std::nullopt;
    }
    return j.get<std::string>();
  }

  std::string identifier(const json& j, const std::string& path) {
    auto s = string(j, path);
    if (!s) return {};
    if (!valid_identifier(*s)) {
      error(path, "bad-identifier", "'" + *s + "' is not an identifier");
    }
    return *s;
  }

  std::optional<double> number(const json& j, const std::string& path) {
    if (!j.is_number()) {
      error(path, "bad-type", std::string("expected number, found ") + type_name(j));
      return std::nullopt;
    }
    double v = j.get<double>();
    if (!std::isfinite(v)) {
      error(path, "bad-value", "number is not finite");
      return std::nullopt;
    }
    return v;
  }

  std::optional<long long> integer(const json& j, const std::string& path, long long lo, long long hi) {
    auto v = number(j, path);
    if (!v) return std::nullopt;
    if (std::floor(*v) != *v) {
      error(path, "bad-value", "expected an integer, found " + expr::format_number(*v));
      return std::nullopt;
    }
    if (*v < static_cast<double>(lo) || *v > static_cast<double>(hi)) {
      error(path, "bad-value",
            "value " + expr::format_number(*v) + " outside [" + std::to_string(lo) + ", " +
                std::to_string(hi) + "]");
      return std::nullopt;
    }
    return static_cast<long long>(*v);
  }

  const json* array(const json& obj, std::string_view key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) return nullptr;
    const json& j = obj.at(std::string(key));
    if (!j.is_array()) {
      error(key_path(path, key), "bad-type", std::string("expected array, found ") + type_name(j));
      return nullptr;
    }
    return &j;
  }

  char single_char(const json& j, const std::string& path) {
    auto s = string(j, path);
    if (!s) return '\0';
    if (s->size() != 1) {
      error(path, "bad-value", "expected a single character, found \"" + *s + "\"");
      return '\0';
    }
    return (*s)[0];
  }

  expr::Expr expression(const json& j, const std::string& path) {
    if (j.is_number()) {
      auto v = number(j, path);
      if (!v) return {};
      return expr::parse(expr::format_number(*v));
    }
    auto s = string(j, path);
    if (!s) return {};
    try {
      return expr::parse(*s);
    } catch (const expr::SyntaxError& e) {
      error(path, e.code(), std::string("in \"") + *s + "\": " + e.what());
      return {};
    }
  }

  std::map<std::string, expr::Expr> expression_map(const json& j, const std::string& path) {
    std::map<std::string, expr::Expr> out;
    if (!j.is_object()) {
      error(path, "bad-type", std::string("expected object, found ") + type_name(j));
      return out;
    }
    for (const auto& [key, value] : j.items()) {
      auto p = key_path(path, key);
      if (!valid_identifier(key)) error(p, "bad-identifier", "'" + key + "' is not an identifier");
      out[key] = expression(value, p);
    }
    return out;
  }

  ValueKind kind(const json& j, const std::string& path) {
    auto s = string(j, path);
    if (!s) return ValueKind::kFloat;
    if (*s == "int") return ValueKind::kInt;
    if (*s == "float") return ValueKind::kFloat;
    error(path, "bad-value", "kind must be \"int\" or \"float\", found \"" + *s + "\"");
    return ValueKind::kFloat;
  }

  std::vector<Param> params(const json& obj, const std::string& path, ValueKind default_kind) {
    std::vector<Param> out;
    const json* arr = array(obj, "inputs", path);
    if (arr == nullptr) return out;
    for (std::size_t i = 0; i < arr->size(); ++i) {
      auto p = index_path(key_path(path, "inputs"), i);
      const json& item = (*arr)[i];
      if (!object(item, p, {"name"}, {"kind"})) continue;
      Param param;
      if (item.contains("name")) param.name = identifier(item["name"], p + ".name");
      param.kind = item.contains("kind") ? kind(item["kind"], p + ".kind") : default_kind;
      out.push_back(std::move(param));
    }
    return out;
  }

  TransportSpec transport(const json& j, const std::string& path) {
    if (!j.is_object() || !j.contains("kind")) {
      object(j, path, {"kind"}, {});
      return TcpTransport{};
    }
    auto kind = string(j["kind"], path + ".kind");
    if (kind == "tcp") {
      TcpTransport t;
      if (object(j, path, {"kind", "host", "port"}, {})) {
        if (j.contains("host")) {
          if (auto s = string(j["host"], path + ".host")) t.host = *s;
        }
        if (j.contains("port")) {
          if (auto v = integer(j["port"], path + ".port", 1, 65535)) t.port = static_cast<int>(*v);
        }
      }
      return t;
    }
    if (kind == "serial") {
      SerialTransport t;
      if (object(j, path, {"kind", "device", "baud"}, {})) {
        if (j.contains("device")) {
          if (auto s = string(j["device"], path + ".device")) t.device = *s;
        }
        if (j.contains("baud")) {
          if (auto v = integer(j["baud"], path + ".baud", 1, 100'000'000)) t.baud = static_cast<int>(*v);
        }
      }
      return t;
    }
    if (kind) error(path + ".kind", "bad-value", "transport kind must be \"tcp\" or \"serial\", found \"" + *kind + "\"");
    return TcpTransport{};
  }

  Connection connection(const json& j, const std::string& path) {
    Connection c;
    if (!object(j, path, {"id", "transport"}, {"threading_model", "keepalive", "on_connect"})) return c;
    if (j.contains("id")) c.id = identifier(j["id"], path + ".id");
    if (j.contains("transport")) c.transport = transport(j["transport"], path + ".transport");
    if (j.contains("threading_model")) {
      auto p = path + ".threading_model";
      auto s = string(j["threading_model"], p);
      if (s && *s != "single") {
        if (*s == "dual" || *s == "multiple") {
          error(p, "threading-not-implemented", "threading model \"" + *s + "\" is not implemented; only \"single\" is supported");
        } else {
          error(p, "bad-value", "unknown threading model \"" + *s + "\"");
        }
      }
    }
    if (j.contains("keepalive")) {
      auto p = path + ".keepalive";
      const json& k = j["keepalive"];
      if (object(k, p, {"primitive", "period_ms"}, {})) {
        Keepalive ka;
        if (k.contains("primitive")) ka.primitive = identifier(k["primitive"], p + ".primitive");
        if (k.contains("period_ms")) {
          if (auto v = integer(k["period_ms"], p + ".period_ms", 1, 3'600'000)) ka.period_ms = static_cast<int>(*v);
        }
        c.keepalive = ka;
      }
    }
    if (const json* arr = array(j, "on_connect", path)) {
      for (std::size_t i = 0; i < arr->size(); ++i) {
        c.on_connect.push_back(identifier((*arr)[i], index_path(path + ".on_connect", i)));
      }
    }
    return c;
  }

  StateVar state_var(const json& j, const std::string& path) {
    StateVar s;
    if (!object(j, path, {"name", "kind"}, {"initial"})) return s;
    if (j.contains("name")) s.name = identifier(j["name"], path + ".name");
    if (j.contains("kind")) s.kind = kind(j["kind"], path + ".kind");
    if (j.contains("initial")) {
      if (auto v = number(j["initial"], path + ".initial")) s.initial = *v;
    }
    return s;
  }

  std::optional<Encoding> encoding(const json& j, const std::string& path) {
    auto s = string(j, path);
    if (!s) return std::nullopt;
    for (Encoding e : {Encoding::kU8, Encoding::kI8, Encoding::kI16Be, Encoding::kU16Be}) {
      if (to_string(e) == *s) return e;
    }
    error(path, "bad-value", "unknown encoding \"" + *s + "\" (expected u8, i8, i16be or u16be)");
    return std::nullopt;
  }

  MessageFormat format(const json& j, const std::string& path) {
    if (!j.is_object() || !j.contains("kind")) {
      object(j, path, {"kind"}, {});
      return PositionalFormat{};
    }
    auto kind = string(j["kind"], path + ".kind");
    if (kind == "positional") {
      PositionalFormat f;
      if (!object(j, path, {"kind", "frame_len", "command"}, {"fields"})) return f;
      if (j.contains("frame_len")) {
        if (auto v = integer(j["frame_len"], path + ".frame_len", 1, 4096)) f.frame_len = static_cast<int>(*v);
      }
      if (j.contains("command")) {
        const json& cmd = j["command"];
        if (cmd.is_string()) {
          f.command = static_cast<std::uint8_t>(single_char(cmd, path + ".command"));
        } else if (auto v = integer(cmd, path + ".command", 0, 255)) {
          f.command = static_cast<std::uint8_t>(*v);
        }
      }
      if (const json* arr = array(j, "fields", path)) {
        for (std::size_t i = 0; i < arr->size(); ++i) {
          auto p = index_path(path + ".fields", i);
          const json& item = (*arr)[i];
          if (!object(item, p, {"name", "offset"}, {"width", "encoding"})) continue;
          PositionalField field;
          if (item.contains("name")) field.name = identifier(item["name"], p + ".name");
          if (item.contains("offset")) {
            if (auto v = integer(item["offset"], p + ".offset", 0, 4096)) field.offset = static_cast<int>(*v);
          }
          std::optional<int> width;
          if (item.contains("width")) {
            if (auto v = integer(item["width"], p + ".width", 1, 2)) width = static_cast<int>(*v);
          }
          std::optional<Encoding> enc;
          if (item.contains("encoding")) enc = encoding(item["encoding"], p + ".encoding");
          // Width and encoding default from each other; bare fields are u8.
          if (enc) {
            field.encoding = *enc;
            field.width = width.value_or(encoding_width(*enc));
          } else {
            field.width = width.value_or(1);
            field.encoding = field.width == 2 ? Encoding::kU16Be : Encoding::kU8;
          }
          f.fields.push_back(std::move(field));
        }
      }
      return f;
    }
    if (kind == "delimited") {
      DelimitedFormat f;
      if (!object(j, path, {"kind", "prefix"}, {"separator", "terminator", "fields"})) return f;
      if (j.contains("prefix")) f.prefix = single_char(j["prefix"], path + ".prefix");
      if (j.contains("separator")) f.separator = single_char(j["separator"], path + ".separator");
      if (j.contains("terminator")) f.terminator = single_char(j["terminator"], path + ".terminator");
      if (const json* arr = array(j, "fields", path)) {
        for (std::size_t i = 0; i < arr->size(); ++i) {
          f.fields.push_back(identifier((*arr)[i], index_path(path + ".fields", i)));
        }
      }
      return f;
    }
    if (kind) error(path + ".kind", "bad-value", "format kind must be \"positional\" or \"delimited\", found \"" + *kind + "\"");
    return PositionalFormat{};
  }

  Primitive primitive(const json& j, const std::string& path) {
    Primitive p;
    if (!object(j, path, {"name", "connection", "frequency", "write"},
                {"period_ms", "read", "inputs", "outputs"})) {
      return p;
    }
    if (j.contains("name")) p.name = identifier(j["name"], path + ".name");
    if (j.contains("connection")) p.connection = identifier(j["connection"], path + ".connection");
    if (j.contains("frequency")) {
      auto freq = string(j["frequency"], path + ".frequency");
      if (freq == "periodic") {
        if (!j.contains("period_ms")) {
          error(path + ".period_ms", "missing-key", "periodic primitives require period_ms");
          p.period_ms = 1;
        } else if (auto v = integer(j["period_ms"], path + ".period_ms", 1, 3'600'000)) {
          p.period_ms = static_cast<int>(*v);
        } else {
          p.period_ms = 1;
        }
      } else if (freq == "adhoc") {
        if (j.contains("period_ms")) {
          error(path + ".period_ms", "unknown-key", "period_ms is only allowed on periodic primitives");
        }
      } else if (freq) {
        error(path + ".frequency", "bad-value", "frequency must be \"adhoc\" or \"periodic\", found \"" + *freq + "\"");
      }
    }
    if (j.contains("write")) p.write_format = format(j["write"], path + ".write");
    if (j.contains("read")) p.read_format = format(j["read"], path + ".read");
    p.inputs = params(j, path, ValueKind::kInt);
    if (const json* arr = array(j, "outputs", path)) {
      for (std::size_t i = 0; i < arr->size(); ++i) {
        auto op = index_path(path + ".outputs", i);
        const json& item = (*arr)[i];
        if (!object(item, op, {"field"}, {"state"})) continue;
        OutputBinding b;
        if (item.contains("field")) b.field = identifier(item["field"], op + ".field");
        if (item.contains("state")) b.state_var = identifier(item["state"], op + ".state");
        p.outputs.push_back(std::move(b));
      }
    }
    return p;
  }

  Interface interface(const json& j, const std::string& path) {
    Interface itf;
    if (!object(j, path, {"name"}, {"inputs", "calls", "returns"})) return itf;
    if (j.contains("name")) itf.name = identifier(j["name"], path + ".name");
    itf.inputs = params(j, path, ValueKind::kFloat);
    if (const json* arr = array(j, "calls", path)) {
      for (std::size_t i = 0; i < arr->size(); ++i) {
        auto cp = index_path(path + ".calls", i);
        const json& item = (*arr)[i];
        if (!object(item, cp, {"primitive"}, {"args"})) continue;
        InterfaceCall call;
        if (item.contains("primitive")) call.primitive = identifier(item["primitive"], cp + ".primitive");
        if (item.contains("args")) call.args = expression_map(item["args"], cp + ".args");
        itf.calls.push_back(std::move(call));
      }
    }
    if (j.contains("returns")) itf.returns = expression_map(j["returns"], path + ".returns");
    return itf;
  }

  OdometryIntegrator integrator(const json& j, const std::string& path) {
    OdometryIntegrator in;
    if (!object(j, path, {"left_ticks", "right_ticks", "ticks_per_meter", "wheel_track_m", "pose"},
                {"tick_modulus"})) {
      return in;
    }
    if (j.contains("left_ticks")) in.left_ticks = identifier(j["left_ticks"], path + ".left_ticks");
    if (j.contains("right_ticks")) in.right_ticks = identifier(j["right_ticks"], path + ".right_ticks");
    if (j.contains("ticks_per_meter")) in.ticks_per_meter = expression(j["ticks_per_meter"], path + ".ticks_per_meter");
    if (j.contains("wheel_track_m")) in.wheel_track_m = expression(j["wheel_track_m"], path + ".wheel_track_m");
    if (j.contains("tick_modulus")) {
      if (auto v = integer(j["tick_modulus"], path + ".tick_modulus", 0, 1LL << 53)) in.tick_modulus = *v;
    }
    if (j.contains("pose")) {
      const json& pose = j["pose"];
      auto pp = path + ".pose";
      if (object(pose, pp, {"x_m", "y_m", "theta_rad"}, {})) {
        if (pose.contains("x_m")) in.pose_x = identifier(pose["x_m"], pp + ".x_m");
        if (pose.contains("y_m")) in.pose_y = identifier(pose["y_m"], pp + ".y_m");
        if (pose.contains("theta_rad")) in.pose_theta = identifier(pose["theta_rad"], pp + ".theta_rad");
      }
    }
    return in;
  }

  AbstractMapping mapping(const json& j, const std::string& path) {
    AbstractMapping m;
    if (!object(j, path, {"concept", "interface", "bindings"}, {"integrator"})) return m;
    if (j.contains("concept")) {
      if (auto s = string(j["concept"], path + ".concept")) {
        if (auto c = concept_from_string(*s)) {
          m.concept_id = *c;
        } else {
          error(path + ".concept", "unknown-concept", "unknown concept \"" + *s + "\"");
        }
      }
    }
    if (j.contains("interface")) m.interface = identifier(j["interface"], path + ".interface");
    if (j.contains("bindings")) m.bindings = expression_map(j["bindings"], path + ".bindings");
    if (j.contains("integrator")) m.integrator = integrator(j["integrator"], path + ".integrator");
    return m;
  }

  RdisDocument document(const json& j) {
    RdisDocument doc;
    if (!object(j, "", {"name", "version"},
                {"rdis_version", "constants", "connections", "state", "primitives", "interfaces", "mappings"})) {
      return doc;
    }
    if (j.contains("rdis_version")) {
      auto v = string(j["rdis_version"], "rdis_version");
      if (v && *v != kRdisVersion) {
        error("rdis_version", "unsupported-version",
              "rdis_version \"" + *v + "\" is not supported (expected \"" + kRdisVersion + "\")");
      }
    }
    if (j.contains("name")) doc.name = identifier(j["name"], "name");
    if (j.contains("version")) {
      if (auto v = string(j["version"], "version")) doc.version = *v;
    }
    if (j.contains("constants")) {
      const json& c = j["constants"];
      if (!c.is_object()) {
        error("constants", "bad-type", std::string("expected object, found ") + type_name(c));
      } else {
        for (const auto& [key, value] : c.items()) {
          auto p = key_path("constants", key);
          if (!valid_identifier(key)) error(p, "bad-identifier", "'" + key + "' is not an identifier");
          if (auto v = number(value, p)) doc.constants[key] = *v;
        }
      }
    }
    if (const json* arr = array(j, "connections", "")) {
      for (std::size_t i = 0; i < arr->size(); ++i) {
        doc.connections.push_back(connection((*arr)[i], index_path("connections", i)));
      }
    }
    if (const json* arr = array(j, "state", "")) {
      for (std::size_t i = 0; i < arr->size(); ++i) {
        doc.state_vars.push_back(state_var((*arr)[i], index_path("state", i)));
      }
    }
    if (const json* arr = array(j, "primitives", "")) {
      for (std::size_t i = 0; i < arr->size(); ++i) {
        doc.primitives.push_back(primitive((*arr)[i], index_path("primitives", i)));
      }
    }
    if (const json* arr = array(j, "interfaces", "")) {
      for (std::size_t i = 0; i < arr->size(); ++i) {
        doc.interfaces.push_back(interface((*arr)[i], index_path("interfaces", i)));
      }
    }
    if (const json* arr = array(j, "mappings", "")) {
      for (std::size_t i = 0; i < arr->size(); ++i) {
        doc.mappings.push_back(mapping((*arr)[i], index_path("mappings", i)));
      }
    }
    return doc;
  }

 private:
  std::vector<Diagnostic>& diags_;
};

}  // namespace

std::string format_diagnostic(const Diagnostic& d) {
  std::string out = d.severity == Severity::kError ? "error" : "warning";
  out += "[" + d.code + "]";
  if (!d.path.empty()) out += " " + d.path;
  out += ": " + d.message;
  return out;
}

bool has_errors(const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags) {
    if (d.severity == Severity::kError) return true;
  }
  return false;
}

ParseResult parse_structure(std::string_view text) {
  ParseResult result;
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    result.diagnostics.push_back(
        {Severity::kError, "syntax-error", "byte " + std::to_string(e.byte), e.what()});
    return result;
  }
  SchemaReader reader(result.diagnostics);
  RdisDocument doc = reader.document(j);
  if (reader.ok()) result.document = std::move(doc);
  return result;
}

ParseResult parse_document(std::string_view text) {
  ParseResult result = parse_structure(text);
  if (!result.document) return result;
  auto diags = validate(*result.document);
  result.diagnostics.insert(result.diagnostics.end(), diags.begin(), diags.end());
  if (has_errors(result.diagnostics)) result.document.reset();
  return result;
}

ParseResult load_document(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io-error", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_document(ss.str());
}

}  // namespace rdis
