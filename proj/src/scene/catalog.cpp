#include <algorithm>
#include <numbers>

#include "microsim/scene.hpp"

namespace microsim::scene {

namespace {

using K = FieldKind;

FieldSpec f(std::string_view name, double def) { return {name, K::Float, def}; }
FieldSpec i(std::string_view name, std::int64_t def) { return {name, K::Int, def}; }
FieldSpec b(std::string_view name, bool def) { return {name, K::Bool, def}; }
FieldSpec s(std::string_view name, std::string def) { return {name, K::String, std::move(def)}; }
FieldSpec v2(std::string_view name, Vec2 def) { return {name, K::Vec2, def}; }
FieldSpec v3(std::string_view name, Vec3 def) { return {name, K::Vec3, def}; }
FieldSpec list(std::string_view name, FloatList def) { return {name, K::FloatList, std::move(def)}; }
FieldSpec node(std::string_view name) { return {name, K::Node, NodeRef{}}; }
FieldSpec nodes(std::string_view name) { return {name, K::NodeList, NodeList{}}; }

std::vector<FieldSpec> device(std::vector<FieldSpec> extra) {
  std::vector<FieldSpec> out{s("name", ""), v2("translation", {}), f("rotation", 0.0)};
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

std::vector<NodeSpec> build_catalog() {
  constexpr double pi = std::numbers::pi;
  std::vector<NodeSpec> c;
  c.push_back({NodeType::WorldInfo, "WorldInfo", {s("title", ""), i("basicTimeStep", 32), i("randomSeed", 0)}});
  c.push_back({NodeType::Solid,
               "Solid",
               {s("name", ""), v2("translation", {}), f("rotation", 0.0), f("color", 0.5), nodes("children"),
                node("boundingObject"), node("physics")}});
  c.push_back({NodeType::Physics,
               "Physics",
               {f("mass", 1.0), f("inertia", 0.01), f("staticFriction", 0.5), f("kineticFriction", 0.4),
                f("bounce", 0.0)}});
  c.push_back({NodeType::Transform, "Transform", {v2("translation", {}), f("rotation", 0.0), nodes("children")}});
  c.push_back({NodeType::Box, "Box", {v2("size", {0.1, 0.1})}});
  c.push_back({NodeType::Cylinder, "Cylinder", {f("radius", 0.05)}});
  c.push_back({NodeType::DifferentialWheels,
               "DifferentialWheels",
               {s("name", ""), v2("translation", {}), f("rotation", 0.0), s("controller", ""), f("color", 0.3),
                f("wheelRadius", 0.05), f("axleLength", 0.1), f("maxSpeed", 100.0), f("encoderResolution", 100.0),
                nodes("children"), node("boundingObject"), node("physics")}});
  c.push_back({NodeType::Robot,
               "Robot",
               {s("name", ""), v2("translation", {}), f("rotation", 0.0), s("controller", ""), b("supervisor", false),
                f("color", 0.3), nodes("children"), node("boundingObject"), node("physics")}});
  c.push_back({NodeType::Servo,
               "Servo",
               {s("name", ""), v2("translation", {}), f("rotation", 0.0), v3("axis", {0.0, 0.0, 1.0}),
                f("minPosition", -pi), f("maxPosition", pi), f("maxVelocity", 10.0), f("maxTorque", 10.0),
                f("kP", 10.0), f("inertia", 0.01), nodes("children")}});
  c.push_back({NodeType::DistanceSensor,
               "DistanceSensor",
               device({list("lookupTable", {0, 1024, 0, 0.1, 1024, 0, 0.3, 0, 0}), f("aperture", 0.0),
                       i("rayCount", 1), s("type", "infra-red")})});
  c.push_back({NodeType::LightSensor, "LightSensor", device({list("lookupTable", {0, 0, 0, 10, 1000, 0})})});
  c.push_back({NodeType::TouchSensor, "TouchSensor", device({node("boundingObject")})});
  c.push_back({NodeType::GPS, "GPS", device({})});
  c.push_back({NodeType::Compass, "Compass", device({})});
  c.push_back({NodeType::Camera1D, "Camera1D", device({f("fieldOfView", pi / 4.0), i("width", 64)})});
  c.push_back({NodeType::Emitter,
               "Emitter",
               device({s("type", "radio"), i("channel", 1), f("range", -1.0), f("aperture", -1.0)})});
  c.push_back({NodeType::Receiver, "Receiver", device({s("type", "radio"), i("channel", 1)})});
  c.push_back({NodeType::LED, "LED", device({})});
  c.push_back({NodeType::PointLight, "PointLight", {f("intensity", 1.0), v2("location", {})}});
  return c;
}

const std::vector<NodeSpec>& catalog() {
  static const std::vector<NodeSpec> specs = build_catalog();
  return specs;
}

}  // namespace

FieldKind kind_of(const FieldValue& value) { return static_cast<FieldKind>(value.index()); }

int NodeSpec::field_index(std::string_view field) const {
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (fields[k].name == field) return static_cast<int>(k);
  }
  return -1;
}

const NodeSpec& node_spec(NodeType type) { return catalog().at(static_cast<std::size_t>(type)); }

std::optional<NodeType> node_type_from_name(std::string_view name) {
  const auto& specs = catalog();
  auto it = std::find_if(specs.begin(), specs.end(), [&](const NodeSpec& s) { return s.name == name; });
  if (it == specs.end()) return std::nullopt;
  return it->type;
}

std::string_view node_type_name(NodeType type) { return node_spec(type).name; }

bool is_robot(NodeType type) { return type == NodeType::Robot || type == NodeType::DifferentialWheels; }

bool is_device(NodeType type) {
  switch (type) {
    case NodeType::DistanceSensor:
    case NodeType::LightSensor:
    case NodeType::TouchSensor:
    case NodeType::GPS:
    case NodeType::Compass:
    case NodeType::Camera1D:
    case NodeType::Emitter:
    case NodeType::Receiver:
    case NodeType::LED:
      return true;
    default:
      return false;
  }
}

bool is_placed(NodeType type) {
  return node_spec(type).field_index("translation") >= 0;
}

}  // namespace microsim::scene
