#include <cmath>

#include <json.hpp>

#include "rdis/document.hpp"

namespace rdis {
namespace {

using json = nlohmann::json;

json exprs(const std::map<std::string, expr::Expr>& m) {
  json out = json::object();
  for (const auto& [k, e] : m) out[k] = e.to_string();
  return out;
}

json params(const std::vector<Param>& ps) {
  json out = json::array();
  for (const auto& p : ps) out.push_back({{"name", p.name}, {"kind", to_string(p.kind)}});
  return out;
}

json format(const MessageFormat& f) {
  if (const auto* pf = std::get_if<PositionalFormat>(&f)) {
    json fields = json::array();
    for (const auto& field : pf->fields) {
      fields.push_back({{"name", field.name},
                        {"offset", field.offset},
                        {"width", field.width},
                        {"encoding", to_string(field.encoding)}});
    }
    return {{"kind", "positional"},
            {"frame_len", pf->frame_len},
            {"command", static_cast<int>(pf->command)},
            {"fields", fields}};
  }
  const auto& df = std::get<DelimitedFormat>(f);
  return {{"kind", "delimited"},
          {"prefix", std::string(1, df.prefix)},
          {"separator", std::string(1, df.separator)},
          {"terminator", std::string(1, df.terminator)},
          {"fields", df.fields}};
}

json to_json(const RdisDocument& doc) {
  json j;
  j["rdis_version"] = kRdisVersion;
  j["name"] = doc.name;
  j["version"] = doc.version;
  j["constants"] = json::object();
  for (const auto& [k, v] : doc.constants) j["constants"][k] = v;

  j["connections"] = json::array();
  for (const auto& c : doc.connections) {
    json cj;
    cj["id"] = c.id;
    if (const auto* tcp = std::get_if<TcpTransport>(&c.transport)) {
      cj["transport"] = {{"kind", "tcp"}, {"host", tcp->host}, {"port", tcp->port}};
    } else {
      const auto& serial = std::get<SerialTransport>(c.transport);
      cj["transport"] = {{"kind", "serial"}, {"device", serial.device}, {"baud", serial.baud}};
    }
    cj["threading_model"] = "single";
    if (c.keepalive) {
      cj["keepalive"] = {{"primitive", c.keepalive->primitive}, {"period_ms", c.keepalive->period_ms}};
    }
    cj["on_connect"] = c.on_connect;
    j["connections"].push_back(std::move(cj));
  }

  j["state"] = json::array();
  for (const auto& s : doc.state_vars) {
    j["state"].push_back({{"name", s.name}, {"kind", to_string(s.kind)}, {"initial", s.initial}});
  }

  j["primitives"] = json::array();
  for (const auto& p : doc.primitives) {
    json pj;
    pj["name"] = p.name;
    pj["connection"] = p.connection;
    pj["frequency"] = p.periodic() ? "periodic" : "adhoc";
    if (p.period_ms) pj["period_ms"] = *p.period_ms;
    pj["write"] = format(p.write_format);
    if (p.read_format) pj["read"] = format(*p.read_format);
    pj["inputs"] = params(p.inputs);
    pj["outputs"] = json::array();
    for (const auto& out : p.outputs) {
      json oj{{"field", out.field}};
      if (out.to_state()) oj["state"] = out.state_var;
      pj["outputs"].push_back(std::move(oj));
    }
    j["primitives"].push_back(std::move(pj));
  }

  j["interfaces"] = json::array();
  for (const auto& itf : doc.interfaces) {
    json ij;
    ij["name"] = itf.name;
    ij["inputs"] = params(itf.inputs);
    ij["calls"] = json::array();
    for (const auto& call : itf.calls) {
      ij["calls"].push_back({{"primitive", call.primitive}, {"args", exprs(call.args)}});
    }
    ij["returns"] = exprs(itf.returns);
    j["interfaces"].push_back(std::move(ij));
  }

  j["mappings"] = json::array();
  for (const auto& m : doc.mappings) {
    json mj;
    mj["concept"] = to_string(m.concept_id);
    mj["interface"] = m.interface;
    mj["bindings"] = exprs(m.bindings);
    if (m.integrator) {
      const auto& in = *m.integrator;
      mj["integrator"] = {{"left_ticks", in.left_ticks},
                          {"right_ticks", in.right_ticks},
                          {"ticks_per_meter", in.ticks_per_meter.to_string()},
                          {"wheel_track_m", in.wheel_track_m.to_string()},
                          {"tick_modulus", in.tick_modulus},
                          {"pose", {{"x_m", in.pose_x}, {"y_m", in.pose_y}, {"theta_rad", in.pose_theta}}}};
    }
    j["mappings"].push_back(std::move(mj));
  }
  return j;
}

void emit(const json& j, int indent, std::string& out) {
  auto pad = [&out](int n) { out.append(static_cast<std::size_t>(n), ' '); };
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      // nlohmann's default object type is an ordered std::map: keys come out sorted.
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        pad(indent + 2);
        out += json(it.key()).dump();
        out += ": ";
        emit(it.value(), indent + 2, out);
      }
      out += "\n";
      pad(indent);
      out += "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i != 0) out += ",\n";
        pad(indent + 2);
        emit(j[i], indent + 2, out);
      }
      out += "\n";
      pad(indent);
      out += "]";
      return;
    }
    case json::value_t::number_float:
      out += expr::format_number(j.get<double>());
      return;
    default:
      out += j.dump();
      return;
  }
}

}  // namespace

std::string canonicalize(const RdisDocument& doc) {
  auto diags = validate(doc);
  if (has_errors(diags)) {
    std::string msg = "cannot canonicalize an invalid document";
    for (const auto& d : diags) {
      if (d.severity == Severity::kError) {
        msg += "; " + format_diagnostic(d);
        break;
      }
    }
    throw Error("invalid-document", msg);
  }
  std::string out;
  emit(to_json(doc), 0, out);
  out += "\n";
  return out;
}

}  // namespace rdis
