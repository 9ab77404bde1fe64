#include <algorithm>
#include <cmath>
#include <set>

#include "rdis/document.hpp"

namespace rdis {
namespace {

class Validator {
 public:
  explicit Validator(const RdisDocument& doc) : doc_(doc) {}

  std::vector<Diagnostic> run() {
    check_unique_names();
    for (std::size_t i = 0; i < doc_.connections.size(); ++i) check_connection(i);
    for (std::size_t i = 0; i < doc_.state_vars.size(); ++i) check_state(i);
    for (std::size_t i = 0; i < doc_.primitives.size(); ++i) check_primitive(i);
    check_framing();
    for (std::size_t i = 0; i < doc_.interfaces.size(); ++i) check_interface(i);
    for (std::size_t i = 0; i < doc_.mappings.size(); ++i) check_mapping(i);
    check_state_updates();
    return std::move(diags_);
  }

 private:
  void error(std::string path, std::string code, std::string msg) {
    diags_.push_back({Severity::kError, std::move(code), std::move(path), std::move(msg)});
  }
  void warning(std::string path, std::string code, std::string msg) {
    diags_.push_back({Severity::kWarning, std::move(code), std::move(path), std::move(msg)});
  }

  static std::string at(const std::string& base, std::size_t i) {
    return base + "[" + std::to_string(i) + "]";
  }

  template <typename T>
  void unique(const std::vector<T>& items, const std::string& category, std::string T::*key,
              const std::string& key_name) {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& name = items[i].*key;
      if (!seen.insert(name).second) {
        error(at(category, i) + "." + key_name, "duplicate-name",
              "'" + name + "' is declared more than once in " + category);
      }
    }
  }

  void check_unique_names() {
    unique(doc_.connections, "connections", &Connection::id, "id");
    unique(doc_.state_vars, "state", &StateVar::name, "name");
    unique(doc_.primitives, "primitives", &Primitive::name, "name");
    unique(doc_.interfaces, "interfaces", &Interface::name, "name");
    std::set<Concept> concepts;
    for (std::size_t i = 0; i < doc_.mappings.size(); ++i) {
      if (!concepts.insert(doc_.mappings[i].concept_id).second) {
        error(at("mappings", i) + ".concept", "duplicate-mapping",
              std::string(to_string(doc_.mappings[i].concept_id)) + " is mapped more than once");
      }
    }
    for (std::size_t i = 0; i < doc_.state_vars.size(); ++i) {
      if (doc_.constants.count(doc_.state_vars[i].name) != 0) {
        error(at("state", i) + ".name", "name-collision",
              "state var '" + doc_.state_vars[i].name + "' shadows a constant");
      }
    }
  }

  void check_connect_primitive(const Connection& c, const std::string& name, const std::string& path) {
    const Primitive* p = doc_.find_primitive(name);
    if (p == nullptr) {
      error(path, "dangling-ref", "primitive '" + name + "' is not declared");
      return;
    }
    if (p->periodic() || !p->inputs.empty()) {
      error(path, "bad-connect-primitive",
            "'" + name + "' must be an adhoc primitive with no inputs");
    } else if (p->connection != c.id) {
      error(path, "bad-connect-primitive",
            "'" + name + "' belongs to connection '" + p->connection + "', not '" + c.id + "'");
    }
  }

  void check_connection(std::size_t i) {
    const Connection& c = doc_.connections[i];
    auto base = at("connections", i);
    if (c.keepalive) check_connect_primitive(c, c.keepalive->primitive, base + ".keepalive.primitive");
    for (std::size_t k = 0; k < c.on_connect.size(); ++k) {
      check_connect_primitive(c, c.on_connect[k], at(base + ".on_connect", k));
    }
  }

  void check_state(std::size_t i) {
    const StateVar& s = doc_.state_vars[i];
    if (s.kind == ValueKind::kInt &&
        (std::floor(s.initial) != s.initial || std::fabs(s.initial) > 9007199254740992.0)) {
      error(at("state", i) + ".initial", "bad-initial",
            "initial value " + expr::format_number(s.initial) + " is not representable as int");
    }
  }

  std::vector<std::string> format_fields(const MessageFormat& f) {
    std::vector<std::string> names;
    if (const auto* pf = std::get_if<PositionalFormat>(&f)) {
      for (const auto& field : pf->fields) names.push_back(field.name);
    } else {
      names = std::get<DelimitedFormat>(f).fields;
    }
    return names;
  }

  void check_format(const MessageFormat& f, const std::string& path) {
    auto names = format_fields(f);
    std::set<std::string> seen;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (!seen.insert(names[i]).second) {
        error(at(path + ".fields", i), "duplicate-name", "field '" + names[i] + "' appears twice");
      }
    }
    if (const auto* pf = std::get_if<PositionalFormat>(&f)) {
      std::vector<std::pair<int, int>> ranges;  // [begin, end)
      for (std::size_t i = 0; i < pf->fields.size(); ++i) {
        const auto& field = pf->fields[i];
        auto fp = at(path + ".fields", i);
        if (field.width != encoding_width(field.encoding)) {
          error(fp + ".width", "width-mismatch",
                "width " + std::to_string(field.width) + " does not match encoding " +
                    std::string(to_string(field.encoding)));
        }
        int begin = field.offset;
        int end = field.offset + field.width;
        if (begin < 1 || end > pf->frame_len) {
          error(fp + ".offset", "field-out-of-frame",
                "bytes [" + std::to_string(begin) + ", " + std::to_string(end) +
                    ") fall outside [1, " + std::to_string(pf->frame_len) + ")");
          continue;
        }
        for (const auto& [b, e] : ranges) {
          if (begin < e && b < end) {
            error(fp + ".offset", "overlapping-fields",
                  "field '" + field.name + "' overlaps bytes [" + std::to_string(b) + ", " +
                      std::to_string(e) + ")");
            break;
          }
        }
        ranges.emplace_back(begin, end);
      }
    } else {
      const auto& df = std::get<DelimitedFormat>(f);
      bool printable = df.prefix > 0x20 && df.prefix < 0x7f;
      if (!printable || df.prefix == df.separator || df.prefix == df.terminator) {
        error(path + ".prefix", "bad-prefix",
              "prefix must be printable ASCII distinct from separator and terminator");
      }
      if (df.separator == df.terminator) {
        error(path + ".separator", "bad-delimiter", "separator and terminator must differ");
      }
      auto numeric = [](char c) { return (c >= '0' && c <= '9') || c == '-' || c == '+'; };
      if (numeric(df.separator) || numeric(df.terminator)) {
        error(path + ".separator", "bad-delimiter", "separator and terminator cannot be numeral characters");
      }
    }
  }

  void check_primitive(std::size_t i) {
    const Primitive& p = doc_.primitives[i];
    auto base = at("primitives", i);
    if (doc_.find_connection(p.connection) == nullptr) {
      error(base + ".connection", "dangling-ref", "connection '" + p.connection + "' is not declared");
    }
    check_format(p.write_format, base + ".write");
    if (p.read_format) check_format(*p.read_format, base + ".read");

    if (p.periodic() && !p.inputs.empty()) {
      error(base + ".inputs", "periodic-has-inputs", "periodic primitive '" + p.name + "' cannot take inputs");
    }
    std::set<std::string> input_names;
    for (std::size_t k = 0; k < p.inputs.size(); ++k) {
      if (!input_names.insert(p.inputs[k].name).second) {
        error(at(base + ".inputs", k) + ".name", "duplicate-name", "input '" + p.inputs[k].name + "' appears twice");
      }
    }
    auto write_fields = format_fields(p.write_format);
    for (std::size_t k = 0; k < p.inputs.size(); ++k) {
      if (std::find(write_fields.begin(), write_fields.end(), p.inputs[k].name) == write_fields.end()) {
        error(at(base + ".inputs", k), "input-not-encoded",
              "input '" + p.inputs[k].name + "' has no field in the write format");
      }
    }
    for (std::size_t k = 0; k < write_fields.size(); ++k) {
      if (input_names.count(write_fields[k]) == 0) {
        error(at(base + ".write.fields", k), "field-not-bound",
              "write field '" + write_fields[k] + "' is not an input of '" + p.name + "'");
      }
    }
    std::vector<std::string> read_fields;
    if (p.read_format) read_fields = format_fields(*p.read_format);
    for (std::size_t k = 0; k < p.outputs.size(); ++k) {
      const auto& out = p.outputs[k];
      auto op = at(base + ".outputs", k);
      if (std::find(read_fields.begin(), read_fields.end(), out.field) == read_fields.end()) {
        error(op + ".field", "output-not-decoded",
              "output '" + out.field + "' is not a field of the read format");
      }
      if (out.to_state()) {
        if (doc_.find_state(out.state_var) == nullptr) {
          error(op + ".state", "dangling-ref", "state var '" + out.state_var + "' is not declared");
        }
      } else if (p.periodic()) {
        error(op, "periodic-return-output",
              "periodic primitive '" + p.name + "' can only write outputs to state vars");
      }
    }
  }

  // Every format carried on one connection must be split the same way by the
  // stream reader.
  void check_framing() {
    for (const auto& c : doc_.connections) {
      std::optional<MessageFormat> first;
      std::string first_owner;
      for (std::size_t i = 0; i < doc_.primitives.size(); ++i) {
        const Primitive& p = doc_.primitives[i];
        if (p.connection != c.id) continue;
        std::vector<std::pair<const MessageFormat*, std::string>> formats{{&p.write_format, at("primitives", i) + ".write"}};
        if (p.read_format) formats.emplace_back(&*p.read_format, at("primitives", i) + ".read");
        for (const auto& [f, path] : formats) {
          if (!first) {
            first = *f;
            first_owner = path;
            continue;
          }
          bool compatible = f->index() == first->index();
          if (compatible) {
            if (const auto* pf = std::get_if<PositionalFormat>(f)) {
              compatible = pf->frame_len == std::get<PositionalFormat>(*first).frame_len;
            } else {
              compatible = std::get<DelimitedFormat>(*f).terminator ==
                           std::get<DelimitedFormat>(*first).terminator;
            }
          }
          if (!compatible) {
            error(path, "mixed-framing",
                  "framing differs from " + first_owner + " on connection '" + c.id + "'");
          }
        }
      }
    }
  }

  void check_names(const expr::Expr& e, const std::set<std::string>& allowed, const std::string& path) {
    for (const auto& name : expr::free_vars(e)) {
      if (allowed.count(name) == 0) {
        error(path, "unbound-name", "name '" + name + "' does not resolve here");
      }
    }
  }

  std::set<std::string> global_names() const {
    std::set<std::string> names;
    for (const auto& [k, v] : doc_.constants) names.insert(k);
    for (const auto& s : doc_.state_vars) names.insert(s.name);
    return names;
  }

  void check_interface(std::size_t i) {
    const Interface& itf = doc_.interfaces[i];
    auto base = at("interfaces", i);
    std::set<std::string> scope = global_names();
    std::set<std::string> seen;
    for (std::size_t k = 0; k < itf.inputs.size(); ++k) {
      const auto& name = itf.inputs[k].name;
      if (!seen.insert(name).second) {
        error(at(base + ".inputs", k) + ".name", "duplicate-name", "input '" + name + "' appears twice");
      } else if (scope.count(name) != 0) {
        error(at(base + ".inputs", k) + ".name", "name-collision",
              "input '" + name + "' shadows a constant or state var");
      }
    }
    scope.insert(seen.begin(), seen.end());
    for (std::size_t k = 0; k < itf.calls.size(); ++k) {
      const auto& call = itf.calls[k];
      auto cp = at(base + ".calls", k);
      const Primitive* p = doc_.find_primitive(call.primitive);
      if (p == nullptr) {
        error(cp + ".primitive", "dangling-ref", "primitive '" + call.primitive + "' is not declared");
        continue;
      }
      if (p->periodic()) {
        error(cp + ".primitive", "call-periodic", "periodic primitive '" + p->name + "' cannot be called");
      }
      for (const auto& in : p->inputs) {
        if (call.args.count(in.name) == 0) {
          error(cp + ".args", "unbound-input", "input '" + in.name + "' of '" + p->name + "' is not bound");
        }
      }
      for (const auto& [name, e] : call.args) {
        auto ap = cp + ".args." + name;
        bool known = std::any_of(p->inputs.begin(), p->inputs.end(),
                                 [&](const Param& in) { return in.name == name; });
        if (!known) error(ap, "unknown-input", "'" + p->name + "' has no input '" + name + "'");
        check_names(e, scope, ap);
      }
      for (const auto& out : p->outputs) {
        if (!out.to_state()) scope.insert(p->name + "." + out.field);
      }
    }
    for (const auto& [name, e] : itf.returns) check_names(e, scope, base + ".returns." + name);
  }

  void check_integrator(const OdometryIntegrator& in, const std::string& path) {
    auto state_ref = [&](const std::string& name, const std::string& p, bool want_float) {
      const StateVar* s = doc_.find_state(name);
      if (s == nullptr) {
        error(p, "dangling-ref", "state var '" + name + "' is not declared");
      } else if (want_float && s->kind != ValueKind::kFloat) {
        error(p, "bad-integrator", "pose state var '" + name + "' must be float");
      }
    };
    state_ref(in.left_ticks, path + ".left_ticks", false);
    state_ref(in.right_ticks, path + ".right_ticks", false);
    state_ref(in.pose_x, path + ".pose.x_m", true);
    state_ref(in.pose_y, path + ".pose.y_m", true);
    state_ref(in.pose_theta, path + ".pose.theta_rad", true);
    std::set<std::string> constants;
    for (const auto& [k, v] : doc_.constants) constants.insert(k);
    check_names(in.ticks_per_meter, constants, path + ".ticks_per_meter");
    check_names(in.wheel_track_m, constants, path + ".wheel_track_m");
  }

  void check_mapping(std::size_t i) {
    const AbstractMapping& m = doc_.mappings[i];
    auto base = at("mappings", i);
    const Interface* itf = doc_.find_interface(m.interface);
    if (m.integrator) {
      if (m.concept_id != Concept::kOdometry) {
        error(base + ".integrator", "bad-integrator", "only position2d.odometry may declare an integrator");
      } else {
        check_integrator(*m.integrator, base + ".integrator");
      }
    }
    if (itf == nullptr) {
      error(base + ".interface", "dangling-ref", "interface '" + m.interface + "' is not declared");
      return;
    }
    std::set<std::string> constants;
    for (const auto& [k, v] : doc_.constants) constants.insert(k);
    const auto& fields = concept_fields(m.concept_id);
    if (is_command_concept(m.concept_id)) {
      // Keys are the interface inputs; values are over concept fields.
      for (const auto& in : itf->inputs) {
        if (m.bindings.count(in.name) == 0) {
          error(base + ".bindings", "mapping-incomplete", "interface input '" + in.name + "' is not bound");
        }
      }
      std::set<std::string> scope = constants;
      scope.insert(fields.begin(), fields.end());
      for (const auto& [name, e] : m.bindings) {
        auto bp = base + ".bindings." + name;
        bool known = std::any_of(itf->inputs.begin(), itf->inputs.end(),
                                 [&](const Param& in) { return in.name == name; });
        if (!known) error(bp, "unknown-input", "interface '" + itf->name + "' has no input '" + name + "'");
        check_names(e, scope, bp);
      }
    } else {
      // Keys are concept outputs; values are over the interface's returns.
      if (!itf->inputs.empty()) {
        error(base + ".interface", "telemetry-has-inputs",
              "telemetry interface '" + itf->name + "' must not take inputs");
      }
      for (const auto& f : fields) {
        if (m.bindings.count(f) == 0) {
          error(base + ".bindings", "mapping-incomplete", "concept field '" + f + "' is not bound");
        }
      }
      std::set<std::string> scope = constants;
      for (const auto& [name, e] : itf->returns) scope.insert(name);
      for (const auto& [name, e] : m.bindings) {
        auto bp = base + ".bindings." + name;
        if (std::find(fields.begin(), fields.end(), name) == fields.end()) {
          error(bp, "unknown-binding", "concept has no field '" + name + "'");
        }
        check_names(e, scope, bp);
      }
    }
  }

  void check_state_updates() {
    std::set<std::string> written;
    for (const auto& p : doc_.primitives) {
      for (const auto& out : p.outputs) {
        if (out.to_state()) written.insert(out.state_var);
      }
    }
    for (const auto& m : doc_.mappings) {
      if (m.integrator) {
        written.insert(m.integrator->pose_x);
        written.insert(m.integrator->pose_y);
        written.insert(m.integrator->pose_theta);
      }
    }
    for (std::size_t i = 0; i < doc_.state_vars.size(); ++i) {
      if (written.count(doc_.state_vars[i].name) == 0) {
        warning(at("state", i), "state-never-updated",
                "state var '" + doc_.state_vars[i].name + "' is never written");
      }
    }
  }

  const RdisDocument& doc_;
  std::vector<Diagnostic> diags_;
};

}  // namespace

std::vector<Diagnostic> validate(const RdisDocument& doc) { return Validator(doc).run(); }

}  // namespace rdis
