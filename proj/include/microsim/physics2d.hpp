#pragma once

// Planar rigid bodies, differential-drive kinematics, servo joints, ray casts
// and impulse-based contact resolution.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "microsim/geometry.hpp"

namespace microsim::physics {

inline constexpr double kGravity = 9.81;

struct Twist {
  double vx = 0.0;
  double vy = 0.0;
  double omega = 0.0;
  constexpr bool operator==(const Twist&) const = default;
};

struct Circle {
  double radius = 0.05;
};
/// Centered on the body origin, sides aligned with the body heading.
struct Rectangle {
  double width = 0.1;
  double height = 0.1;
};
/// Endpoints in the body frame.
struct Segment {
  Vec2 a;
  Vec2 b;
};
using Shape = std::variant<Circle, Rectangle, Segment>;

struct Material {
  double static_friction = 0.5;
  double kinetic_friction = 0.4;
  double bounce = 0.0;
};

struct Body {
  Pose pose;
  Twist velocity;
  double mass = 1.0;
  double inertia = 0.01;
  bool is_static = false;
  Shape shape = Circle{};
  Material material;
  /// Grayscale reflectance seen by cameras.
  double color = 0.5;
  /// Takes part in contact resolution; ray casts see every body.
  bool collidable = true;
  /// Bodies sharing a non-zero group never collide with each other.
  std::uint32_t group = 0;

  double inv_mass() const { return is_static ? 0.0 : 1.0 / mass; }
  double inv_inertia() const { return is_static ? 0.0 : 1.0 / inertia; }
};

double kinetic_energy(const Body& body);

// ---------------------------------------------------------------------------
// Differential drive

struct DriveState {
  double wheel_speed_left = 0.0;   // rad/s, commanded
  double wheel_speed_right = 0.0;  // rad/s, commanded
  double wheel_radius = 0.05;
  double axle_length = 0.1;
  double max_speed = 100.0;
  double wheel_angle_left = 0.0;   // rad, accumulated
  double wheel_angle_right = 0.0;  // rad, accumulated
};

/// Stores the commands clamped to +-max_speed.
void set_wheel_speeds(DriveState& drive, double left, double right);

/// Body-frame forward speed and yaw rate of the unicycle model.
struct UnicycleRates {
  double linear = 0.0;
  double angular = 0.0;
};
UnicycleRates unicycle_rates(const DriveState& drive);

/// Exact constant-twist arc update over `dt`; also advances the wheel angles.
Pose integrate_drive(const Pose& pose, DriveState& drive, double dt);

/// World-frame velocity of the base under the current commands.
Twist drive_twist(const Pose& pose, const DriveState& drive);

// ---------------------------------------------------------------------------
// Servo joints

enum class ServoMode : std::uint8_t { Position, Velocity, Torque };

struct ServoLimits {
  double min_position = -3.141592653589793;
  double max_position = 3.141592653589793;
  double max_velocity = 10.0;
  double max_torque = 10.0;
};

struct ServoJoint {
  double angle = 0.0;
  double angular_velocity = 0.0;
  ServoMode mode = ServoMode::Position;
  /// rad, rad/s or N*m depending on `mode`.
  double target = 0.0;
  ServoLimits limits;
  double kp = 10.0;
  double inertia = 0.01;
};

ServoJoint step_servo(ServoJoint joint, double dt);

// ---------------------------------------------------------------------------
// Ray casting

struct RayHit {
  bool hit = false;
  double distance = 0.0;
  std::size_t body = std::numeric_limits<std::size_t>::max();
  Vec2 point;
};

/// Distance along the ray to `body`'s shape, if it is hit within `max_range`.
/// A ray that starts inside a shape hits it at distance 0.
std::optional<double> intersect_ray(const Body& body, Vec2 origin, Vec2 direction, double max_range);

/// Nearest hit over all bodies not listed in `ignore`. No hit reports
/// `hit == false` and `distance == max_range`.
RayHit ray_cast(std::span<const Body> bodies, Vec2 origin, Vec2 direction, double max_range,
                std::span<const std::size_t> ignore = {});

/// Axis-aligned bounds of a body's shape in world coordinates.
struct Aabb {
  Vec2 min;
  Vec2 max;
};
Aabb bounds(const Body& body);

/// True if the world point lies inside (or within `tolerance` of) the shape placed at `pose`.
bool shape_contains(const Shape& shape, const Pose& pose, Vec2 point, double tolerance = 0.0);

// ---------------------------------------------------------------------------
// Contacts

struct Contact {
  std::size_t a = 0;
  std::size_t b = 0;
  /// Unit normal pointing from a to b.
  Vec2 normal;
  Vec2 point;
  double penetration = 0.0;
  double normal_impulse = 0.0;
  double tangent_impulse = 0.0;
};

/// Narrow phase for one pair; `a`/`b` indices are left at 0.
std::optional<Contact> collide(const Body& a, const Body& b);

/// All overlapping collidable pairs (at least one dynamic, groups respected).
std::vector<Contact> find_contacts(std::span<const Body> bodies);

inline constexpr double kMaxPenetration = 1e-6;

/// Applies one normal impulse (restitution min(e_a, e_b)) and one Coulomb-bounded
/// friction impulse per overlapping pair, then separates the pairs until every
/// penetration is at most kMaxPenetration. Returns the contacts with the
/// impulses that were applied.
std::vector<Contact> resolve_contacts(std::span<Body> bodies);

/// Free motion of a dynamic body over dt with Coulomb floor friction (mu_k * g)
/// decelerating its translation and rotation.
void integrate_free_body(Body& body, double dt);

}  // namespace microsim::physics
