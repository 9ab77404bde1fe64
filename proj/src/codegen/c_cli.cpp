// Context for the c-cli target: everything the templates need, with C
// identifiers and expressions already resolved.

#include "c_cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "rdis/codec.hpp"
#include "rdis/expr.hpp"

namespace rdis::codegen::detail {
namespace {

using nlohmann::json;

const std::set<std::string>& reserved_c_names() {
  static const std::set<std::string> names = {
      "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum", "extern",
      "float", "for", "goto", "if", "inline", "int", "long", "register", "restrict", "return", "short", "signed",
      "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned", "void", "volatile", "while",
      "_Bool", "_Complex", "_Imaginary", "main", "read", "write", "send", "recv", "select", "close", "connect",
      "socket", "printf", "fprintf", "snprintf", "memset", "memcpy", "memmove", "memchr", "strcmp", "strtok",
      "strtod", "strtoll", "exit", "abort", "free", "malloc", "round", "fmod", "fmin", "fmax", "fabs", "sin",
      "cos", "remainder", "time", "errno", "stdin", "stdout", "stderr", "setsockopt", "getaddrinfo",
      "freeaddrinfo", "clock_gettime", "fflush", "in", "out", "frame", "line", "len", "values", "reply"};
  return names;
}

std::string c_double(double v) {
  std::string s = expr::format_number(v);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string c_escape(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '"': out += "\\\""; break;
      case '\'': out += "\\'"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20 || c >= 0x7f) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\%03o", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out;
}

std::string c_char(char c) { return "'" + c_escape(std::string_view(&c, 1)) + "'"; }

std::string hex_byte(std::uint8_t b) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "0x%02X", b);
  return buf;
}

std::string printable(std::uint8_t b) {
  if (b >= 0x20 && b < 0x7f && b != '\'' && b != '\\' && b != '*') return std::string(1, static_cast<char>(b));
  return "?";
}

std::string output_local(const std::string& primitive, const std::string& field) {
  return "o_" + primitive + "_" + field;
}

// Resolves document names to the C identifiers used by the program.
class Names {
 public:
  Names(const RdisDocument& doc, const Interface* itf) : doc_(doc), itf_(itf) {}

  std::string operator()(const std::string& name) const {
    if (auto dot = name.find('.'); dot != std::string::npos) {
      return "(double)" + output_local(name.substr(0, dot), name.substr(dot + 1));
    }
    if (itf_ != nullptr) {
      for (const auto& in : itf_->inputs)
        if (in.name == name) return "a_" + name;
    }
    if (doc_.find_state(name) != nullptr) return "s_" + name;
    if (doc_.constants.count(name) != 0) return "k_" + name;
    throw Error("unsupported-feature", "cannot resolve name '" + name + "'");
  }

 private:
  const RdisDocument& doc_;
  const Interface* itf_;
};

std::string to_c(const expr::Node& n, const Names& names) {
  return std::visit(
      [&](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, expr::Number>) {
          return c_double(v.value);
        } else if constexpr (std::is_same_v<T, expr::Name>) {
          return names(v.id);
        } else if constexpr (std::is_same_v<T, expr::Negate>) {
          return "(-" + to_c(*v.operand, names) + ")";
        } else if constexpr (std::is_same_v<T, expr::Binary>) {
          auto a = to_c(*v.lhs, names);
          auto b = to_c(*v.rhs, names);
          switch (v.op) {
            case expr::BinaryOp::kAdd: return "(" + a + " + " + b + ")";
            case expr::BinaryOp::kSub: return "(" + a + " - " + b + ")";
            case expr::BinaryOp::kMul: return "(" + a + " * " + b + ")";
            case expr::BinaryOp::kDiv: return "rdis_div(" + a + ", " + b + ")";
          }
          return {};
        } else {
          std::vector<std::string> args;
          for (const auto& a : v.args) args.push_back(to_c(*a, names));
          std::string joined;
          for (std::size_t i = 0; i < args.size(); ++i) joined += (i ? ", " : "") + args[i];
          switch (v.fn) {
            case expr::Builtin::kClamp: return "rdis_clamp(" + joined + ")";
            case expr::Builtin::kRound: return "rdis_round(" + joined + ")";
            case expr::Builtin::kMin: return "fmin(" + joined + ")";
            case expr::Builtin::kMax: return "fmax(" + joined + ")";
          }
          return {};
        }
      },
      n.v);
}

std::string to_c(const expr::Expr& e, const Names& names) { return to_c(e.root(), names); }

std::string usage(const std::vector<Param>& params) {
  std::string s;
  for (const auto& p : params) s += " <" + p.name + ">";
  return s;
}

std::string join(const std::vector<std::string>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + xs[i];
  return s;
}

const char* encoding_getter(Encoding e) {
  switch (e) {
    case Encoding::kU8: return "u8";
    case Encoding::kI8: return "i8";
    case Encoding::kI16Be: return "i16be";
    case Encoding::kU16Be: return "u16be";
  }
  return "u8";
}

json primitive_context(const RdisDocument& doc, const Primitive& p, const OdometryIntegrator* odo) {
  json j;
  j["name"] = p.name;
  j["adhoc"] = !p.periodic();
  j["input_count"] = p.inputs.size();
  j["in_capacity"] = std::max<std::size_t>(p.inputs.size(), 1);
  j["out_capacity"] = std::max<std::size_t>(p.outputs.size(), 1);
  j["usage"] = usage(p.inputs);

  std::vector<std::string> params;
  std::vector<std::string> dispatch;
  for (std::size_t i = 0; i < p.inputs.size(); ++i) {
    params.push_back("long long p_" + p.inputs[i].name);
    dispatch.push_back("in[" + std::to_string(i) + "]");
  }
  json outputs = json::array();
  for (std::size_t i = 0; i < p.outputs.size(); ++i) {
    const auto& o = p.outputs[i];
    json oj{{"field", o.field}, {"state_id", o.to_state() ? "s_" + o.state_var : ""}, {"out_param", ""}};
    if (!p.periodic()) {
      oj["out_param"] = "out_" + o.field;
      params.push_back("long long *out_" + o.field);
      dispatch.push_back("&out[" + std::to_string(i) + "]");
    }
    outputs.push_back(oj);
  }
  j["params"] = params.empty() ? "void" : join(params);
  j["dispatch_args"] = join(dispatch);
  j["outputs"] = outputs;

  bool integrates = false;
  if (odo != nullptr) {
    for (const auto& o : p.outputs) {
      integrates = integrates || (o.to_state() && (o.state_var == odo->left_ticks || o.state_var == odo->right_ticks));
    }
  }
  j["integrates"] = integrates;

  if (const auto* pf = std::get_if<PositionalFormat>(&p.write_format)) {
    j["positional"] = true;
    j["frame_len"] = pf->frame_len;
    j["command_hex"] = hex_byte(pf->command);
    j["command_char"] = printable(pf->command);
    json fields = json::array();
    for (const auto& f : pf->fields) {
      auto [lo, hi] = codec::encoding_range(f.encoding);
      fields.push_back({{"name", f.name},
                        {"param", "p_" + f.name},
                        {"primitive", p.name},
                        {"offset", f.offset},
                        {"offset_next", f.offset + 1},
                        {"wide", f.width == 2},
                        {"lo", lo},
                        {"hi", hi}});
    }
    j["fields"] = fields;
  } else {
    const auto& df = std::get<DelimitedFormat>(p.write_format);
    j["positional"] = false;
    auto literal = [](char c) { return c == '%' ? std::string("%%") : std::string(1, c); };
    std::string fmt = literal(df.prefix);
    std::string args;
    for (const auto& f : df.fields) {
      fmt += literal(df.separator) + "%lld";
      args += ", p_" + f;
    }
    fmt += literal(df.terminator);
    j["format_string"] = c_escape(fmt);
    j["format_args"] = args;
    j["line_cap"] = 3 + df.fields.size() * 21;
  }

  j["read"] = false;
  if (p.read_format) {
    json r;
    json fields = json::array();
    if (const auto* pf = std::get_if<PositionalFormat>(&*p.read_format)) {
      r["command_hex"] = hex_byte(pf->command);
      for (const auto& f : pf->fields)
        fields.push_back({{"name", f.name}, {"offset", f.offset}, {"encoding", encoding_getter(f.encoding)}});
    } else {
      const auto& df = std::get<DelimitedFormat>(*p.read_format);
      r["prefix"] = c_char(df.prefix);
      r["count"] = df.fields.size();
      r["capacity"] = std::max<std::size_t>(df.fields.size(), 1);
      for (const auto& f : df.fields) fields.push_back({{"name", f}});
    }
    r["fields"] = fields;
    j["read"] = r;
  }
  (void)doc;
  return j;
}

std::string zero_arg_call(const Primitive& p) {
  std::vector<std::string> nulls(p.periodic() ? 0 : p.outputs.size(), "NULL");
  return p.name + "(" + join(nulls) + ")";
}

json interface_context(const RdisDocument& doc, const Interface& itf) {
  Names names(doc, &itf);
  json j;
  j["name"] = itf.name;
  j["usage"] = usage(itf.inputs);
  j["input_count"] = itf.inputs.size();
  j["in_capacity"] = std::max<std::size_t>(itf.inputs.size(), 1);
  j["out_capacity"] = std::max<std::size_t>(itf.returns.size(), 1);

  std::vector<std::string> params;
  std::vector<std::string> dispatch;
  json inputs = json::array();
  for (std::size_t i = 0; i < itf.inputs.size(); ++i) {
    params.push_back("double a_" + itf.inputs[i].name);
    dispatch.push_back("in[" + std::to_string(i) + "]");
    inputs.push_back({{"id", "a_" + itf.inputs[i].name}});
  }
  j["inputs"] = inputs;

  std::set<std::string> locals;
  json calls = json::array();
  for (const auto& call : itf.calls) {
    const Primitive& p = *doc.find_primitive(call.primitive);
    json cj{{"primitive", p.name}};
    json args = json::array();
    std::vector<std::string> call_args;
    for (const auto& in : p.inputs) {
      std::string id = "arg_" + in.name;
      args.push_back({{"id", id}, {"c_expr", to_c(call.args.at(in.name), names)}});
      call_args.push_back(id);
    }
    for (const auto& o : p.outputs) {
      if (p.periodic()) break;
      auto local = output_local(p.name, o.field);
      locals.insert(local);
      call_args.push_back("&" + local);
    }
    cj["args"] = args;
    cj["call_args"] = join(call_args);
    calls.push_back(cj);
  }
  j["calls"] = calls;
  j["locals"] = std::vector<std::string>(locals.begin(), locals.end());

  json returns = json::array();
  std::size_t i = 0;
  for (const auto& [name, e] : itf.returns) {
    params.push_back("double *r_" + name);
    dispatch.push_back("&out[" + std::to_string(i++) + "]");
    returns.push_back({{"name", name}, {"id", "r_" + name}, {"c_expr", to_c(e, names)}});
  }
  j["returns"] = returns;
  j["params"] = params.empty() ? "void" : join(params);
  j["dispatch_args"] = join(dispatch);
  return j;
}

}  // namespace

std::vector<std::string> c_cli_unsupported(const RdisDocument& doc) {
  std::vector<std::string> problems;
  if (doc.connections.size() != 1) {
    problems.push_back("c-cli drives exactly one connection; document declares " +
                       std::to_string(doc.connections.size()));
  }
  for (const auto& c : doc.connections) {
    if (!std::holds_alternative<TcpTransport>(c.transport)) {
      problems.push_back("connection '" + c.id + "' uses a serial transport");
    }
  }
  for (const auto& p : doc.primitives) {
    if (reserved_c_names().count(p.name) != 0 || p.name.rfind("rdis_", 0) == 0 || p.name.rfind("iface_", 0) == 0) {
      problems.push_back("primitive name '" + p.name + "' collides with a C identifier");
    }
  }
  return problems;
}

nlohmann::json c_cli_context(const RdisDocument& doc, const std::string& hash) {
  const Connection& conn = doc.connections.front();
  const auto& tcp = std::get<TcpTransport>(conn.transport);
  const AbstractMapping* odo_map = doc.find_mapping(Concept::kOdometry);
  const OdometryIntegrator* odo = (odo_map != nullptr && odo_map->integrator) ? &*odo_map->integrator : nullptr;

  json j;
  j["name"] = doc.name;
  j["version"] = doc.version;
  j["hash"] = hash;
  j["host"] = c_escape(tcp.host);
  j["port"] = tcp.port;
  j["reply_timeout_ms"] = 500;

  // All frames on a connection share one framing; take it from any primitive.
  j["positional"] = true;
  j["frame_len"] = 1;
  for (const auto& p : doc.primitives) {
    if (const auto* pf = std::get_if<PositionalFormat>(&p.write_format)) {
      j["frame_len"] = pf->frame_len;
    } else {
      const auto& df = std::get<DelimitedFormat>(p.write_format);
      j["positional"] = false;
      j["terminator"] = c_char(df.terminator);
      j["separator"] = c_char(df.separator);
      if (p.read_format) {
        const auto& rf = std::get<DelimitedFormat>(*p.read_format);
        j["separator"] = c_char(rf.separator);
      }
    }
    break;
  }

  json constants = json::array();
  for (const auto& [name, v] : doc.constants) constants.push_back({{"id", "k_" + name}, {"value", c_double(v)}});
  j["constants"] = constants;
  json state = json::array();
  for (const auto& s : doc.state_vars) state.push_back({{"id", "s_" + s.name}, {"initial", c_double(s.initial)}});
  j["state"] = state;

  json primitives = json::array();
  json adhoc = json::array();
  json periodics = json::array();
  for (const auto& p : doc.primitives) {
    auto pj = primitive_context(doc, p, odo);
    primitives.push_back(pj);
    if (p.periodic()) {
      periodics.push_back({{"name", p.name}, {"period_ms", *p.period_ms}});
    } else {
      adhoc.push_back(pj);
    }
  }
  j["primitives"] = primitives;
  j["adhoc"] = adhoc;
  j["periodics"] = periodics;
  j["periodic_count"] = periodics.size();

  json interfaces = json::array();
  for (const auto& itf : doc.interfaces) interfaces.push_back(interface_context(doc, itf));
  j["interfaces"] = interfaces;

  json on_connect = json::array();
  for (const auto& name : conn.on_connect) on_connect.push_back({{"call", zero_arg_call(*doc.find_primitive(name))}});
  j["on_connect"] = on_connect;

  j["keepalive"] = false;
  if (conn.keepalive) {
    const Primitive& k = *doc.find_primitive(conn.keepalive->primitive);
    j["keepalive"] = {{"primitive", k.name}, {"call", zero_arg_call(k)}, {"period_ms", conn.keepalive->period_ms}};
  }
  j["background"] = !periodics.empty() || conn.keepalive.has_value();

  j["odometry"] = false;
  if (odo != nullptr) {
    Names names(doc, nullptr);
    j["odometry"] = {{"left", "s_" + odo->left_ticks},
                     {"right", "s_" + odo->right_ticks},
                     {"ticks_per_meter", to_c(odo->ticks_per_meter, names)},
                     {"wheel_track_m", to_c(odo->wheel_track_m, names)},
                     {"modulus", odo->tick_modulus},
                     {"x", "s_" + odo->pose_x},
                     {"y", "s_" + odo->pose_y},
                     {"theta", "s_" + odo->pose_theta}};
  }
  return j;
}

}  // namespace rdis::codegen::detail
