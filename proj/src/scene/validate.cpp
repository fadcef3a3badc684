#include <cmath>
#include <set>
#include <string>

#include "microsim/scene.hpp"

namespace microsim::scene {

namespace {

struct RobotScope {
  NodeId robot = kNoNode;
  std::set<std::string> device_names;
};

class Validator {
 public:
  explicit Validator(const SceneTree& tree) : tree_(tree) {}

  std::vector<Diagnostic> run() {
    for (NodeId root : tree_.roots()) visit(root, kNoNode, nullptr, true);
    if (world_infos_ == 0) out_.push_back({"missing WorldInfo", kNoNode, {}});
    return std::move(out_);
  }

 private:
  void report(NodeId id, std::string message) {
    const Node& n = tree_.node(id);
    out_.push_back({std::string(node_type_name(n.type)) + ": " + message, id, n.location});
  }

  void check_lookup_table(NodeId id, const Node& n) {
    const FloatList& t = n.get_list("lookupTable");
    if (t.size() % 3 != 0) {
      report(id, "lookupTable must hold [input, output, noise] triples");
      return;
    }
    if (t.size() < 6) report(id, "lookupTable needs at least 2 rows");
    for (std::size_t r = 0; r + 2 < t.size(); r += 3) {
      if (t[r + 2] < 0.0) report(id, "lookupTable noise ratio must be >= 0");
      if (r >= 3 && !(t[r] > t[r - 3])) report(id, "lookupTable inputs must be strictly increasing");
    }
  }

  void check_shape(NodeId field_owner, NodeId shape_id) {
    if (shape_id == kNoNode) return;
    const Node& shape = tree_.node(tree_.resolve(shape_id));
    if (shape.type == NodeType::Box) {
      const Vec2 size = shape.get_vec2("size");
      if (!(size.x > 0.0 && size.y > 0.0)) report(field_owner, "Box size must be positive");
    } else if (shape.type == NodeType::Cylinder) {
      if (!(shape.get_float("radius") > 0.0)) report(field_owner, "Cylinder radius must be positive");
    } else {
      report(field_owner, "boundingObject must be a Box or a Cylinder");
    }
  }

  void check_physics(NodeId owner, NodeId phys_id) {
    if (phys_id == kNoNode) return;
    const Node& p = tree_.node(tree_.resolve(phys_id));
    if (p.type != NodeType::Physics) {
      report(owner, "physics must be a Physics node");
      return;
    }
    if (!(p.get_float("mass") > 0.0)) report(owner, "mass must be > 0");
    if (!(p.get_float("inertia") > 0.0)) report(owner, "inertia must be > 0");
    const double mus = p.get_float("staticFriction");
    const double muk = p.get_float("kineticFriction");
    if (mus < 0.0 || muk < 0.0) report(owner, "friction coefficients must be >= 0");
    if (muk > mus) report(owner, "kineticFriction must not exceed staticFriction");
    const double e = p.get_float("bounce");
    if (e < 0.0 || e > 1.0) report(owner, "bounce must lie in [0, 1]");
  }

  void check_color(NodeId id, const Node& n) {
    const double c = n.get_float("color");
    if (c < 0.0 || c > 1.0) report(id, "color must lie in [0, 1]");
  }

  void check_node(NodeId id, const Node& n, NodeType parent_type, RobotScope* scope, bool at_root) {
    switch (n.type) {
      case NodeType::WorldInfo:
        if (++world_infos_ > 1) report(id, "duplicate WorldInfo");
        if (!at_root) report(id, "WorldInfo must be a root node");
        if (n.get_int("basicTimeStep") <= 0) report(id, "basicTimeStep must be > 0");
        break;
      case NodeType::Solid:
        check_color(id, n);
        check_shape(id, n.get_node("boundingObject"));
        check_physics(id, n.get_node("physics"));
        break;
      case NodeType::Physics:
      case NodeType::Box:
      case NodeType::Cylinder:
        report(id, "only valid as a boundingObject or physics field value");
        break;
      case NodeType::Transform:
        break;
      case NodeType::DifferentialWheels:
      case NodeType::Robot:
        if (scope) report(id, "robots cannot be nested inside another robot");
        if (n.get_string("controller").empty()) report(id, "controller must be non-empty");
        check_color(id, n);
        check_shape(id, n.get_node("boundingObject"));
        check_physics(id, n.get_node("physics"));
        if (n.type == NodeType::DifferentialWheels) {
          if (!(n.get_float("wheelRadius") > 0.0)) report(id, "wheelRadius must be > 0");
          if (!(n.get_float("axleLength") > 0.0)) report(id, "axleLength must be > 0");
          if (!(n.get_float("maxSpeed") > 0.0)) report(id, "maxSpeed must be > 0");
          if (!(n.get_float("encoderResolution") > 0.0)) report(id, "encoderResolution must be > 0");
        }
        if (const std::string& name = n.get_string("name"); !name.empty()) {
          if (!robot_names_.insert(name).second) report(id, "duplicate robot name \"" + name + "\"");
        }
        break;
      case NodeType::Servo: {
        const bool ok_parent = parent_type == NodeType::Servo || is_robot(parent_type);
        if (!ok_parent) report(id, "Servo must be a child of a robot or another Servo");
        if (n.get_float("minPosition") > n.get_float("maxPosition")) report(id, "minPosition exceeds maxPosition");
        if (n.get_float("maxVelocity") < 0.0 || n.get_float("maxTorque") < 0.0 || n.get_float("kP") < 0.0) {
          report(id, "maxVelocity, maxTorque and kP must be >= 0");
        }
        if (!(n.get_float("inertia") > 0.0)) report(id, "inertia must be > 0");
        const Vec3 axis = std::get<Vec3>(n.get("axis"));
        if (axis[0] != 0.0 || axis[1] != 0.0 || axis[2] == 0.0) report(id, "axis must be vertical (0 0 z)");
        break;
      }
      case NodeType::PointLight:
        if (n.get_float("intensity") < 0.0) report(id, "intensity must be >= 0");
        break;
      default:
        break;
    }

    if (is_device(n.type)) {
      if (!scope) {
        report(id, "devices must belong to a robot");
      } else {
        const std::string& name = n.get_string("name");
        if (name.empty()) {
          report(id, "device name must be non-empty");
        } else if (!scope->device_names.insert(name).second) {
          report(id, "duplicate device name \"" + name + "\" on one robot");
        }
      }
      check_device(id, n);
    }
  }

  void check_device(NodeId id, const Node& n) {
    switch (n.type) {
      case NodeType::DistanceSensor: {
        check_lookup_table(id, n);
        if (n.get_int("rayCount") < 1) report(id, "rayCount must be >= 1");
        if (n.get_float("aperture") < 0.0) report(id, "aperture must be >= 0");
        const std::string& type = n.get_string("type");
        if (type != "infra-red" && type != "ultra-sonic") report(id, "type must be \"infra-red\" or \"ultra-sonic\"");
        break;
      }
      case NodeType::LightSensor:
        check_lookup_table(id, n);
        break;
      case NodeType::TouchSensor:
        check_shape(id, n.get_node("boundingObject"));
        break;
      case NodeType::Camera1D:
        if (n.get_int("width") < 1) report(id, "width must be >= 1");
        if (!(n.get_float("fieldOfView") > 0.0 && n.get_float("fieldOfView") < 3.14159)) {
          report(id, "fieldOfView must lie in (0, pi)");
        }
        break;
      case NodeType::Emitter:
      case NodeType::Receiver: {
        const std::string& type = n.get_string("type");
        if (type != "radio" && type != "infra-red") report(id, "type must be \"radio\" or \"infra-red\"");
        if (n.get_int("channel") < 0) report(id, "channel must be >= 0");
        break;
      }
      default:
        break;
    }
  }

  void visit(NodeId id, NodeId parent, RobotScope* scope, bool at_root) {
    const NodeId target = tree_.resolve(id);
    const Node& n = tree_.node(target);
    const NodeType parent_type = parent == kNoNode ? NodeType::WorldInfo : tree_.node(parent).type;
    check_node(id, n, parent_type, scope, at_root);

    RobotScope own;
    RobotScope* inner = scope;
    if (is_robot(n.type) && !scope) {
      own.robot = target;
      if (n.type == NodeType::DifferentialWheels) own.device_names = {"left_encoder", "right_encoder"};
      inner = &own;
    }
    // Transforms are transparent for the Servo-parent rule.
    const NodeId structural_parent = n.type == NodeType::Transform ? parent : target;
    for (NodeId child : n.children()) visit(child, structural_parent, inner, false);
  }

  const SceneTree& tree_;
  std::vector<Diagnostic> out_;
  int world_infos_ = 0;
  std::set<std::string> robot_names_;
};

}  // namespace

std::vector<Diagnostic> validate(const SceneTree& tree) { return Validator(tree).run(); }

}  // namespace microsim::scene
