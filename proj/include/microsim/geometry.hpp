#pragma once

#include <cmath>
#include <numbers>

namespace microsim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator-() const { return {-x, -y}; }
  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2& operator-=(Vec2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr bool operator==(const Vec2&) const = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
/// z-component of the 3-D cross product.
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
/// cross(w ez, r): velocity contribution of angular rate w at lever arm r.
constexpr Vec2 cross(double w, Vec2 r) { return {-w * r.y, w * r.x}; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
constexpr Vec2 perp(Vec2 v) { return {-v.y, v.x}; }

inline Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

inline Vec2 heading(double angle) { return {std::cos(angle), std::sin(angle)}; }

/// Wraps to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

/// Planar pose: position in meters, heading in radians (counter-clockwise from +x).
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Vec2 position() const { return {x, y}; }
  constexpr bool operator==(const Pose&) const = default;
};

/// Returns parent * local: `local` expressed in the frame of `parent`.
inline Pose compose(const Pose& parent, const Pose& local) {
  const Vec2 p = rotate({local.x, local.y}, parent.theta);
  return {parent.x + p.x, parent.y + p.y, parent.theta + local.theta};
}

inline Vec2 to_world(const Pose& frame, Vec2 local) { return frame.position() + rotate(local, frame.theta); }
inline Vec2 to_local(const Pose& frame, Vec2 world) { return rotate(world - frame.position(), -frame.theta); }

}  // namespace microsim
