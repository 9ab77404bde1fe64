#include "rdis/model.hpp"

#include <algorithm>

namespace rdis {
namespace {

template <typename T, typename Key>
const T* find_by(const std::vector<T>& items, Key T::*key, std::string_view value) {
  auto it = std::find_if(items.begin(), items.end(),
                         [&](const T& item) { return item.*key == value; });
  return it == items.end() ? nullptr : &*it;
}

}  // namespace

const Connection* RdisDocument::find_connection(std::string_view id) const {
  return find_by(connections, &Connection::id, id);
}
const StateVar* RdisDocument::find_state(std::string_view n) const {
  return find_by(state_vars, &StateVar::name, n);
}
const Primitive* RdisDocument::find_primitive(std::string_view n) const {
  return find_by(primitives, &Primitive::name, n);
}
const Interface* RdisDocument::find_interface(std::string_view n) const {
  return find_by(interfaces, &Interface::name, n);
}
const AbstractMapping* RdisDocument::find_mapping(Concept c) const {
  auto it = std::find_if(mappings.begin(), mappings.end(),
                         [c](const AbstractMapping& m) { return m.concept_id == c; });
  return it == mappings.end() ? nullptr : &*it;
}

std::string_view to_string(ValueKind k) { return k == ValueKind::kInt ? "int" : "float"; }

std::string_view to_string(Encoding e) {
  switch (e) {
    case Encoding::kU8: return "u8";
    case Encoding::kI8: return "i8";
    case Encoding::kI16Be: return "i16be";
    case Encoding::kU16Be: return "u16be";
  }
  return "?";
}

std::string_view to_string(Concept c) {
  return c == Concept::kCommandVelocity ? "position2d.command_velocity" : "position2d.odometry";
}

std::optional<Concept> concept_from_string(std::string_view s) {
  if (s == "position2d.command_velocity") return Concept::kCommandVelocity;
  if (s == "position2d.odometry") return Concept::kOdometry;
  return std::nullopt;
}

int encoding_width(Encoding e) { return (e == Encoding::kU8 || e == Encoding::kI8) ? 1 : 2; }

const std::vector<std::string>& concept_fields(Concept c) {
  static const std::vector<std::string> kCommand{"linear_mps", "angular_radps"};
  static const std::vector<std::string> kOdometry{"x_m", "y_m", "theta_rad"};
  return c == Concept::kCommandVelocity ? kCommand : kOdometry;
}

bool is_command_concept(Concept c) { return c == Concept::kCommandVelocity; }

}  // namespace rdis
