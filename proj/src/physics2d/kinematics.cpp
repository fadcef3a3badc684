#include <algorithm>
#include <cmath>

#include "microsim/physics2d.hpp"

namespace microsim::physics {

double kinetic_energy(const Body& body) {
  if (body.is_static) return 0.0;
  const Twist& v = body.velocity;
  return 0.5 * body.mass * (v.vx * v.vx + v.vy * v.vy) + 0.5 * body.inertia * v.omega * v.omega;
}

void set_wheel_speeds(DriveState& drive, double left, double right) {
  drive.wheel_speed_left = std::clamp(left, -drive.max_speed, drive.max_speed);
  drive.wheel_speed_right = std::clamp(right, -drive.max_speed, drive.max_speed);
}

UnicycleRates unicycle_rates(const DriveState& drive) {
  const double r = drive.wheel_radius;
  return {r * (drive.wheel_speed_left + drive.wheel_speed_right) / 2.0,
          r * (drive.wheel_speed_right - drive.wheel_speed_left) / drive.axle_length};
}

Pose integrate_drive(const Pose& pose, DriveState& drive, double dt) {
  const auto [v, w] = unicycle_rates(drive);
  drive.wheel_angle_left += drive.wheel_speed_left * dt;
  drive.wheel_angle_right += drive.wheel_speed_right * dt;

  if (std::abs(w) < 1e-12) {
    return {pose.x + v * dt * std::cos(pose.theta), pose.y + v * dt * std::sin(pose.theta), pose.theta};
  }
  // Chord of the arc of radius v/w: length 2 (v/w) sin(w dt / 2) along the mid heading.
  // Same point as the textbook (v/w)(sin(th + w dt) - sin th) form, without its
  // cancellation for small w dt.
  const double half = 0.5 * w * dt;
  const double chord = 2.0 * v * std::sin(half) / w;
  const double mid = pose.theta + half;
  return {pose.x + chord * std::cos(mid), pose.y + chord * std::sin(mid), pose.theta + w * dt};
}

Twist drive_twist(const Pose& pose, const DriveState& drive) {
  const auto [v, w] = unicycle_rates(drive);
  return {v * std::cos(pose.theta), v * std::sin(pose.theta), w};
}

ServoJoint step_servo(ServoJoint joint, double dt) {
  const ServoLimits& lim = joint.limits;
  switch (joint.mode) {
    case ServoMode::Position: {
      const double target = std::clamp(joint.target, lim.min_position, lim.max_position);
      joint.angular_velocity = std::clamp(joint.kp * (target - joint.angle), -lim.max_velocity, lim.max_velocity);
      break;
    }
    case ServoMode::Velocity:
      joint.angular_velocity = std::clamp(joint.target, -lim.max_velocity, lim.max_velocity);
      break;
    case ServoMode::Torque:
      joint.angular_velocity += std::clamp(joint.target, -lim.max_torque, lim.max_torque) / joint.inertia * dt;
      break;
  }
  const double next = joint.angle + joint.angular_velocity * dt;
  if (next <= lim.min_position || next >= lim.max_position) {
    joint.angle = std::clamp(next, lim.min_position, lim.max_position);
    joint.angular_velocity = 0.0;
  } else {
    joint.angle = next;
  }
  return joint;
}

void integrate_free_body(Body& body, double dt) {
  if (body.is_static) return;
  Twist& v = body.velocity;
  const double decel = body.material.kinetic_friction * kGravity * dt;
  const double speed = std::hypot(v.vx, v.vy);
  if (speed <= decel) {
    v.vx = 0.0;
    v.vy = 0.0;
  } else {
    const double scale = (speed - decel) / speed;
    v.vx *= scale;
    v.vy *= scale;
  }
  // Angular deceleration uses the radius of gyration as the friction lever arm.
  const double gyration = std::sqrt(body.inertia / body.mass);
  const double ang_decel = gyration > 0.0 ? decel / gyration : 0.0;
  if (std::abs(v.omega) <= ang_decel) {
    v.omega = 0.0;
  } else {
    v.omega -= std::copysign(ang_decel, v.omega);
  }
  body.pose.x += v.vx * dt;
  body.pose.y += v.vy * dt;
  body.pose.theta += v.omega * dt;
}

}  // namespace microsim::physics
