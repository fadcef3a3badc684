#include <algorithm>
#include <cmath>

#include "world.hpp"

namespace microsim::engine::detail {

void update_frames(World& w, Unit& unit) {
  unit.frames[0].world = unit.pose;
  for (std::size_t k = 1; k < unit.frames.size(); ++k) {
    Frame& f = unit.frames[k];
    f.world = compose(unit.frames[static_cast<std::size_t>(f.parent)].world, f.local);
    if (f.servo >= 0) {
      const double angle = w.robots[static_cast<std::size_t>(unit.robot)].servos[static_cast<std::size_t>(f.servo)].joint.angle;
      f.world = compose(f.world, Pose{0.0, 0.0, angle});
    }
  }
  for (UnitBody& b : unit.bodies) b.body.pose = unit.frames[static_cast<std::size_t>(b.frame)].world;
}

void flatten(World& w) {
  w.flat.clear();
  w.flat_labels.clear();
  for (RobotRuntime& r : w.robots) r.flat_bodies.clear();
  for (Unit& u : w.units) {
    u.flat_begin = w.flat.size();
    if (!u.alive) continue;
    for (const UnitBody& b : u.bodies) {
      if (u.robot >= 0) w.robots[static_cast<std::size_t>(u.robot)].flat_bodies.push_back(w.flat.size());
      w.flat.push_back(b.body);
      w.flat_labels.push_back(b.label);
    }
  }
}

Pose device_pose(const World& w, const RobotRuntime& robot, const DeviceRuntime& dev) {
  return w.units[robot.unit].frames[static_cast<std::size_t>(dev.frame)].world;
}

void refresh_snapshot(World& w, std::size_t ridx) {
  RobotRuntime& r = w.robots[ridx];
  const devices::WorldView view{w.flat, w.lights, w.contacts};
  const std::span<const std::size_t> own = r.flat_bodies;
  const Unit& unit = w.units[r.unit];
  const std::size_t owner = unit.has_root_body ? unit.flat_begin : static_cast<std::size_t>(-1);
  for (std::size_t k = 0; k < r.devices.size(); ++k) {
    DeviceRuntime& d = r.devices[k];
    const Pose p = device_pose(w, r, d);
    switch (d.kind) {
      case DeviceKind::DistanceSensor: {
        auto rng = devices::noise_stream(w.seed, w.ticks, static_cast<std::uint32_t>(ridx), static_cast<std::uint32_t>(k));
        d.value = {devices::distance_sensor_read(d.distance, p, view, own, rng)};
        break;
      }
      case DeviceKind::LightSensor: {
        auto rng = devices::noise_stream(w.seed, w.ticks, static_cast<std::uint32_t>(ridx), static_cast<std::uint32_t>(k));
        d.value = {devices::light_sensor_read(*d.light_table, p, view, own, rng)};
        break;
      }
      case DeviceKind::TouchSensor:
        d.value = {static_cast<double>(devices::touch_sensor_read(d.footprint, p, owner, w.contacts))};
        break;
      case DeviceKind::GPS: {
        const Vec2 g = devices::gps_read(p);
        d.value = {g.x, g.y};
        break;
      }
      case DeviceKind::Compass: {
        const Vec2 c = devices::compass_read(p);
        d.value = {c.x, c.y};
        break;
      }
      case DeviceKind::Camera1D:
        d.value = devices::camera1d_read(d.camera, p, view, own);
        break;
      case DeviceKind::Encoder:
        d.value = {d.encoder_side == 0 ? r.drive.wheel_angle_left : r.drive.wheel_angle_right};
        break;
      case DeviceKind::Servo:
        d.value = {r.servos[static_cast<std::size_t>(d.servo)].joint.angle};
        break;
      case DeviceKind::LED:
        d.value = {static_cast<double>(d.led_state)};
        break;
      default:
        break;
    }
  }
}

void zero_actuators(RobotRuntime& r) {
  r.pending_left = 0.0;
  r.pending_right = 0.0;
  for (ServoRuntime& s : r.servos) {
    s.pending_mode = physics::ServoMode::Velocity;
    s.pending_target = 0.0;
  }
}

namespace {

void latch(World& w) {
  for (RobotRuntime& r : w.robots) {
    if (!r.alive) continue;
    if (r.differential) physics::set_wheel_speeds(r.drive, r.pending_left, r.pending_right);
    for (ServoRuntime& s : r.servos) {
      s.joint.mode = s.pending_mode;
      s.joint.target = s.pending_target;
    }
    for (DeviceRuntime& d : r.devices) d.led_state = d.led_pending;
  }
}

}  // namespace

void physics_step(World& w) {
  latch(w);
  const double dt = static_cast<double>(w.step_ms) / 1000.0;
  for (Unit& u : w.units) {
    if (!u.alive) continue;
    if (u.kind == UnitKind::Robot) {
      RobotRuntime& r = w.robots[static_cast<std::size_t>(u.robot)];
      if (r.differential) {
        u.pose = physics::integrate_drive(u.pose, r.drive, dt);
        if (u.has_root_body) u.bodies[0].body.velocity = physics::drive_twist(u.pose, r.drive);
      }
      for (ServoRuntime& s : r.servos) s.joint = physics::step_servo(s.joint, dt);
      update_frames(w, u);
    } else if (u.kind == UnitKind::Dynamic && u.has_root_body) {
      physics::Body& b = u.bodies[0].body;
      b.pose = u.pose;
      physics::integrate_free_body(b, dt);
      u.pose = b.pose;
      update_frames(w, u);
    }
  }
  flatten(w);
  w.contacts = physics::resolve_contacts(w.flat);
  for (Unit& u : w.units) {
    if (!u.alive || u.kind == UnitKind::Static || !u.has_root_body) continue;
    const physics::Body& solved = w.flat[u.flat_begin];
    if (solved.is_static) continue;
    u.pose = solved.pose;
    u.bodies[0].body.velocity = solved.velocity;
    update_frames(w, u);
  }
  flatten(w);
}

void deliver_messages(World& w) {
  if (w.outbox.empty()) return;
  devices::sort_for_delivery(w.outbox);
  for (const devices::Message& m : w.outbox) {
    for (std::size_t ridx = 0; ridx < w.robots.size(); ++ridx) {
      RobotRuntime& r = w.robots[ridx];
      if (!r.alive || m.sender_order == ridx) continue;
      for (DeviceRuntime& d : r.devices) {
        if (d.kind != DeviceKind::Receiver) continue;
        if (devices::can_receive(m, d.receiver, device_pose(w, r, d), w.flat, r.flat_bodies)) d.inbox.push_back(m);
      }
    }
  }
  w.outbox.clear();
}

std::optional<std::size_t> find_unit(const World& w, std::string_view label) {
  for (std::size_t k = 0; k < w.units.size(); ++k) {
    const Unit& u = w.units[k];
    if (!u.alive) continue;
    if (u.label == label) return k;
    if (u.robot >= 0 && w.robots[static_cast<std::size_t>(u.robot)].name == label) return k;
  }
  return std::nullopt;
}

void record_trajectories(World& w) {
  for (auto& [label, traj] : w.trajectories) {
    const auto u = find_unit(w, label);
    if (!u) continue;
    const Pose& p = w.units[*u].pose;
    traj.samples.push_back({w.now_ms + w.step_ms, p.x, p.y, p.theta});
  }
}

void terminate_controller(RobotRuntime& r, std::string_view reason) {
  if (r.remote) {
    r.remote->detached(reason);
    r.remote.reset();
  }
  if (!r.api) return;
  auto& task = Access::task_ptr(*r.api);
  if (!task) return;
  {
    std::lock_guard lk(task->m);
    task->terminate = true;
  }
  task->cv.notify_all();
  if (task->thread.joinable()) {
    if (task->hung) {
      task->thread.detach();
    } else {
      task->thread.join();
    }
  }
  r.done = true;
}

}  // namespace microsim::engine::detail
