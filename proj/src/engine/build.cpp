#include <algorithm>
#include <string>

#include "world.hpp"

namespace microsim::engine::detail {

using scene::Node;
using scene::NodeType;

namespace {

std::optional<physics::Shape> bounding_shape(const scene::SceneTree& tree, const Node& n) {
  if (scene::node_spec(n.type).field_index("boundingObject") < 0) return std::nullopt;
  const NodeId b = n.get_node("boundingObject");
  if (b == scene::kNoNode) return std::nullopt;
  const Node& shape = tree.node(tree.resolve(b));
  if (shape.type == NodeType::Box) {
    const Vec2 size = shape.get_vec2("size");
    return physics::Rectangle{size.x, size.y};
  }
  if (shape.type == NodeType::Cylinder) return physics::Circle{shape.get_float("radius")};
  return std::nullopt;
}

void apply_physics(const scene::SceneTree& tree, const Node& n, physics::Body& body) {
  const NodeId p = n.get_node("physics");
  if (p == scene::kNoNode) return;
  const Node& ph = tree.node(tree.resolve(p));
  body.mass = ph.get_float("mass");
  body.inertia = ph.get_float("inertia");
  body.material.static_friction = ph.get_float("staticFriction");
  body.material.kinetic_friction = ph.get_float("kineticFriction");
  body.material.bounce = ph.get_float("bounce");
}

bool has_physics(const Node& n) {
  return scene::node_spec(n.type).field_index("physics") >= 0 && n.get_node("physics") != scene::kNoNode;
}

class Builder {
 public:
  Builder(Simulation* sim, World& w) : sim_(sim), w_(w), tree_(w.tree) {}

  void outside(NodeId id, const Pose& parent) {
    const NodeId rid = tree_.resolve(id);
    const Node& n = tree_.node(rid);
    switch (n.type) {
      case NodeType::Transform: {
        const Pose here = compose(parent, scene::local_pose(n));
        for (NodeId c : n.children()) outside(c, here);
        break;
      }
      case NodeType::PointLight:
        w_.lights.push_back({to_world(parent, n.get_vec2("location")), n.get_float("intensity")});
        break;
      case NodeType::Solid:
      case NodeType::DifferentialWheels:
      case NodeType::Robot:
        make_unit(id, compose(parent, scene::local_pose(n)));
        break;
      default:
        break;
    }
  }

 private:
  void make_unit(NodeId id, const Pose& pose) {
    const NodeId rid = tree_.resolve(id);
    const Node& n = tree_.node(rid);
    Unit u;
    u.node = id;
    u.label = node_label(tree_, id);
    u.pose = pose;
    u.frames.push_back(Frame{-1, {}, -1, pose});
    u.kind = scene::is_robot(n.type) ? UnitKind::Robot : has_physics(n) ? UnitKind::Dynamic : UnitKind::Static;

    std::optional<physics::Shape> shape = bounding_shape(tree_, n);
    if (!shape && n.type == NodeType::DifferentialWheels) shape = physics::Circle{n.get_float("axleLength") / 2.0};
    if (shape) {
      physics::Body b;
      b.pose = pose;
      b.shape = *shape;
      b.color = n.get_float("color");
      apply_physics(tree_, n, b);
      b.is_static = u.kind == UnitKind::Static || n.type == NodeType::Robot;
      u.bodies.push_back({b, 0, u.label});
      u.has_root_body = true;
    }

    const std::size_t uidx = w_.units.size();
    if (u.kind == UnitKind::Robot) {
      RobotRuntime r;
      r.unit = uidx;
      r.node = id;
      r.name = n.get_string("name");
      r.controller = n.get_string("controller");
      r.supervisor = n.type == NodeType::Robot && n.get_bool("supervisor");
      r.differential = n.type == NodeType::DifferentialWheels;
      if (r.differential) {
        r.drive.wheel_radius = n.get_float("wheelRadius");
        r.drive.axle_length = n.get_float("axleLength");
        r.drive.max_speed = n.get_float("maxSpeed");
      }
      const std::size_t ridx = w_.robots.size();
      r.api = Access::make_controller(sim_, ridx);
      if (r.controller != kExternController) {
        auto it = w_.options.controllers.find(r.controller);
        if (it != w_.options.controllers.end()) {
          r.program = it->second;
        } else {
          const auto& builtins = builtin_controllers();
          auto b = builtins.find(r.controller);
          if (b != builtins.end()) r.program = b->second;
        }
      }
      u.robot = static_cast<int>(ridx);
      for (auto& body : u.bodies) body.body.group = static_cast<std::uint32_t>(ridx + 1);
      w_.robots.push_back(std::move(r));
    }
    w_.units.push_back(std::move(u));
    inside(uidx, 0, rid);

    if (w_.units[uidx].robot >= 0) {
      RobotRuntime& r = w_.robots[static_cast<std::size_t>(w_.units[uidx].robot)];
      r.declared_devices = r.devices.size();
      if (r.differential) {
        for (int side = 0; side < 2; ++side) {
          DeviceRuntime d;
          d.name = side == 0 ? "left_encoder" : "right_encoder";
          d.kind = DeviceKind::Encoder;
          d.encoder_side = side;
          d.encoder_resolution = n.get_float("encoderResolution");
          d.value = {0.0};
          r.devices.push_back(std::move(d));
        }
      }
    }
    update_frames(w_, w_.units[uidx]);
  }

  int add_frame(std::size_t uidx, int parent, const Pose& local, int servo) {
    Unit& u = w_.units[uidx];
    Frame f{parent, local, servo, compose(u.frames[static_cast<std::size_t>(parent)].world, local)};
    if (servo >= 0) {
      const double angle = w_.robots[static_cast<std::size_t>(u.robot)].servos[static_cast<std::size_t>(servo)].joint.angle;
      f.world = compose(f.world, Pose{0.0, 0.0, angle});
    }
    u.frames.push_back(f);
    return static_cast<int>(u.frames.size() - 1);
  }

  RobotRuntime* robot_of(std::size_t uidx) {
    const int r = w_.units[uidx].robot;
    return r < 0 ? nullptr : &w_.robots[static_cast<std::size_t>(r)];
  }

  void inside(std::size_t uidx, int frame, NodeId parent) {
    // Copy: recursion may append to the arena-backed vectors we would otherwise reference.
    const std::vector<NodeId> kids(tree_.node(parent).children().begin(), tree_.node(parent).children().end());
    for (NodeId c : kids) {
      const NodeId rc = tree_.resolve(c);
      const Node& cn = tree_.node(rc);
      const Pose local = scene::local_pose(cn);
      switch (cn.type) {
        case NodeType::Transform:
          inside(uidx, add_frame(uidx, frame, local, -1), rc);
          break;
        case NodeType::Solid: {
          if (w_.units[uidx].kind == UnitKind::Static && has_physics(cn)) {
            make_unit(c, compose(w_.units[uidx].frames[static_cast<std::size_t>(frame)].world, local));
            break;
          }
          const int f = add_frame(uidx, frame, local, -1);
          if (auto shape = bounding_shape(tree_, cn)) {
            Unit& u = w_.units[uidx];
            physics::Body b;
            b.pose = u.frames[static_cast<std::size_t>(f)].world;
            b.shape = *shape;
            b.color = cn.get_float("color");
            b.is_static = true;
            b.collidable = u.kind == UnitKind::Static;
            b.group = u.robot >= 0 ? static_cast<std::uint32_t>(u.robot + 1) : 0;
            std::string label = cn.def_name.empty() || tree_.node(c).is_use() ? u.label : cn.def_name;
            u.bodies.push_back({b, f, std::move(label)});
          }
          inside(uidx, f, rc);
          break;
        }
        case NodeType::Servo: {
          RobotRuntime* r = robot_of(uidx);
          if (!r) break;
          ServoRuntime s;
          s.name = cn.get_string("name");
          s.joint.limits = {cn.get_float("minPosition"), cn.get_float("maxPosition"), cn.get_float("maxVelocity"),
                            cn.get_float("maxTorque")};
          s.joint.kp = cn.get_float("kP");
          s.joint.inertia = cn.get_float("inertia");
          s.joint.angle = std::clamp(0.0, s.joint.limits.min_position, s.joint.limits.max_position);
          s.joint.target = s.joint.angle;
          s.pending_target = s.joint.angle;
          const int sidx = static_cast<int>(r->servos.size());
          r->servos.push_back(s);
          const int f = add_frame(uidx, frame, local, sidx);
          DeviceRuntime d;
          d.name = s.name;
          d.kind = DeviceKind::Servo;
          d.frame = f;
          d.servo = sidx;
          d.value = {s.joint.angle};
          robot_of(uidx)->devices.push_back(std::move(d));
          inside(uidx, f, rc);
          break;
        }
        case NodeType::PointLight: {
          const Pose at = w_.units[uidx].frames[static_cast<std::size_t>(frame)].world;
          w_.lights.push_back({to_world(at, cn.get_vec2("location")), cn.get_float("intensity")});
          break;
        }
        default:
          if (scene::is_device(cn.type)) {
            RobotRuntime* r = robot_of(uidx);
            if (!r) break;
            const int f = add_frame(uidx, frame, local, -1);
            r->devices.push_back(make_device(cn, f));
          }
          break;
      }
    }
  }

  DeviceRuntime make_device(const Node& n, int frame) {
    DeviceRuntime d;
    d.name = n.get_string("name");
    d.frame = frame;
    d.value = {0.0};
    switch (n.type) {
      case NodeType::DistanceSensor:
        d.kind = DeviceKind::DistanceSensor;
        d.distance.table = devices::LookupTable::from_flat(n.get_list("lookupTable"));
        d.distance.aperture = n.get_float("aperture");
        d.distance.ray_count = static_cast<int>(n.get_int("rayCount"));
        break;
      case NodeType::LightSensor:
        d.kind = DeviceKind::LightSensor;
        d.light_table = devices::LookupTable::from_flat(n.get_list("lookupTable"));
        break;
      case NodeType::TouchSensor:
        d.kind = DeviceKind::TouchSensor;
        if (auto s = bounding_shape(tree_, n)) d.footprint = *s;
        break;
      case NodeType::GPS:
        d.kind = DeviceKind::GPS;
        d.value = {0.0, 0.0};
        break;
      case NodeType::Compass:
        d.kind = DeviceKind::Compass;
        d.value = {0.0, 0.0};
        break;
      case NodeType::Camera1D:
        d.kind = DeviceKind::Camera1D;
        d.camera.field_of_view = n.get_float("fieldOfView");
        d.camera.width = static_cast<int>(n.get_int("width"));
        d.value.assign(static_cast<std::size_t>(d.camera.width), 0.0);
        break;
      case NodeType::Emitter:
        d.kind = DeviceKind::Emitter;
        d.emitter.infra_red = n.get_string("type") == "infra-red";
        d.emitter.channel = n.get_int("channel");
        d.emitter.range = n.get_float("range");
        d.emitter.aperture = n.get_float("aperture");
        d.value.clear();
        break;
      case NodeType::Receiver:
        d.kind = DeviceKind::Receiver;
        d.receiver.infra_red = n.get_string("type") == "infra-red";
        d.receiver.channel = n.get_int("channel");
        d.value.clear();
        break;
      case NodeType::LED:
        d.kind = DeviceKind::LED;
        break;
      default:
        break;
    }
    return d;
  }

  Simulation* sim_;
  World& w_;
  const scene::SceneTree& tree_;
};

void check_node(const World& w, const scene::SceneTree& tree, NodeId id, std::vector<std::string>& bad) {
  const Node& n = tree.node(tree.resolve(id));
  if (scene::is_robot(n.type)) {
    const std::string& c = n.get_string("controller");
    if (c != kExternController && !w.options.controllers.contains(c) && !builtin_controllers().contains(c)) {
      bad.push_back("robot '" + n.get_string("name") + "': unknown controller '" + c + "'");
    }
  }
  for (NodeId c : n.children()) check_node(w, tree, c, bad);
}

}  // namespace

std::string node_label(const scene::SceneTree& tree, NodeId occurrence) {
  const Node& occ = tree.node(occurrence);
  const Node& n = tree.node(tree.resolve(occurrence));
  if (!occ.is_use() && !n.def_name.empty()) return n.def_name;
  if (scene::is_robot(n.type)) return n.get_string("name");
  return "#" + std::to_string(occurrence);
}

void check_controllers(const World& w, const scene::SceneTree& tree, NodeId from_root) {
  std::vector<std::string> bad;
  if (from_root == scene::kNoNode) {
    for (NodeId r : tree.roots()) check_node(w, tree, r, bad);
  } else {
    check_node(w, tree, from_root, bad);
  }
  if (!bad.empty()) throw LoadError(bad.front(), bad);
}

void build_world(Simulation* sim, World& w) {
  w.units.clear();
  w.robots.clear();
  w.lights.clear();
  Builder b(sim, w);
  for (NodeId r : w.tree.roots()) b.outside(r, {});
  flatten(w);
}

void activate_root(Simulation* sim, World& w, NodeId root) {
  Builder b(sim, w);
  b.outside(root, {});
  flatten(w);
}

}  // namespace microsim::engine::detail
