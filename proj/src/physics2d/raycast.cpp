#include <algorithm>
#include <cmath>

#include "microsim/physics2d.hpp"

namespace microsim::physics {

namespace {

std::optional<double> ray_circle(Vec2 center, double radius, Vec2 origin, Vec2 dir) {
  const Vec2 oc = origin - center;
  const double c = dot(oc, oc) - radius * radius;
  if (c <= 0.0) return 0.0;
  const double b = dot(oc, dir);
  if (b >= 0.0) return std::nullopt;  // outside and pointing away
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  // c / (-b + sqrt(disc)) equals -b - sqrt(disc) without cancellation on grazing rays.
  return c / (-b + std::sqrt(disc));
}

std::optional<double> ray_box(double half_w, double half_h, Vec2 origin, Vec2 dir) {
  if (std::abs(origin.x) <= half_w && std::abs(origin.y) <= half_h) return 0.0;
  double t_enter = 0.0;
  double t_exit = std::numeric_limits<double>::infinity();
  const double o[2] = {origin.x, origin.y};
  const double d[2] = {dir.x, dir.y};
  const double h[2] = {half_w, half_h};
  for (int axis = 0; axis < 2; ++axis) {
    if (d[axis] == 0.0) {
      if (std::abs(o[axis]) > h[axis]) return std::nullopt;
      continue;
    }
    double t0 = (-h[axis] - o[axis]) / d[axis];
    double t1 = (h[axis] - o[axis]) / d[axis];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
    if (t_enter > t_exit) return std::nullopt;
  }
  return t_enter;
}

std::optional<double> ray_segment(Vec2 a, Vec2 b, Vec2 origin, Vec2 dir) {
  const Vec2 e = b - a;
  const Vec2 ao = a - origin;
  const double denom = cross(dir, e);
  if (denom == 0.0) {
    // Parallel: only a collinear segment can be hit, at its nearest endpoint ahead.
    if (cross(ao, dir) != 0.0) return std::nullopt;
    const double ta = dot(a - origin, dir);
    const double tb = dot(b - origin, dir);
    if (ta < 0.0 && tb < 0.0) return std::nullopt;
    if ((ta <= 0.0) != (tb <= 0.0)) return 0.0;
    return std::min(ta, tb);
  }
  const double t = cross(ao, e) / denom;
  const double s = cross(ao, dir) / denom;
  if (t < 0.0 || s < 0.0 || s > 1.0) return std::nullopt;
  return t;
}

bool ray_hits_box(const Aabb& box, Vec2 origin, Vec2 dir, double max_t) {
  double t_enter = 0.0;
  double t_exit = max_t;
  const double o[2] = {origin.x, origin.y};
  const double d[2] = {dir.x, dir.y};
  const double lo[2] = {box.min.x, box.min.y};
  const double hi[2] = {box.max.x, box.max.y};
  for (int axis = 0; axis < 2; ++axis) {
    if (d[axis] == 0.0) {
      if (o[axis] < lo[axis] || o[axis] > hi[axis]) return false;
      continue;
    }
    double t0 = (lo[axis] - o[axis]) / d[axis];
    double t1 = (hi[axis] - o[axis]) / d[axis];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
    if (t_enter > t_exit) return false;
  }
  return true;
}

}  // namespace

std::optional<double> intersect_ray(const Body& body, Vec2 origin, Vec2 direction, double max_range) {
  std::optional<double> t = std::visit(
      [&](const auto& s) -> std::optional<double> {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, Circle>) {
          return ray_circle(body.pose.position(), s.radius, origin, direction);
        } else if constexpr (std::is_same_v<S, Rectangle>) {
          return ray_box(s.width / 2.0, s.height / 2.0, to_local(body.pose, origin),
                         rotate(direction, -body.pose.theta));
        } else {
          return ray_segment(to_world(body.pose, s.a), to_world(body.pose, s.b), origin, direction);
        }
      },
      body.shape);
  if (t && *t > max_range) return std::nullopt;
  return t;
}

RayHit ray_cast(std::span<const Body> bodies, Vec2 origin, Vec2 direction, double max_range,
                std::span<const std::size_t> ignore) {
  RayHit best;
  best.distance = max_range;
  for (std::size_t k = 0; k < bodies.size(); ++k) {
    if (std::find(ignore.begin(), ignore.end(), k) != ignore.end()) continue;
    if (!ray_hits_box(bounds(bodies[k]), origin, direction, best.distance)) continue;
    const auto t = intersect_ray(bodies[k], origin, direction, best.distance);
    if (t && (!best.hit || *t < best.distance)) {
      best.hit = true;
      best.distance = *t;
      best.body = k;
    }
  }
  if (best.hit) best.point = origin + direction * best.distance;
  return best;
}

Aabb bounds(const Body& body) {
  // Padded so the broad phase never culls a shape the exact test would touch.
  constexpr double pad = 1e-9;
  return std::visit(
      [&](const auto& s) -> Aabb {
        using S = std::decay_t<decltype(s)>;
        const Vec2 c = body.pose.position();
        if constexpr (std::is_same_v<S, Circle>) {
          const double r = s.radius + pad;
          return {{c.x - r, c.y - r}, {c.x + r, c.y + r}};
        } else if constexpr (std::is_same_v<S, Rectangle>) {
          const double cs = std::abs(std::cos(body.pose.theta));
          const double sn = std::abs(std::sin(body.pose.theta));
          const double ex = 0.5 * (s.width * cs + s.height * sn) + pad;
          const double ey = 0.5 * (s.width * sn + s.height * cs) + pad;
          return {{c.x - ex, c.y - ey}, {c.x + ex, c.y + ey}};
        } else {
          const Vec2 a = to_world(body.pose, s.a);
          const Vec2 b = to_world(body.pose, s.b);
          return {{std::min(a.x, b.x) - pad, std::min(a.y, b.y) - pad},
                  {std::max(a.x, b.x) + pad, std::max(a.y, b.y) + pad}};
        }
      },
      body.shape);
}

bool shape_contains(const Shape& shape, const Pose& pose, Vec2 point, double tolerance) {
  const Vec2 p = to_local(pose, point);
  return std::visit(
      [&](const auto& s) -> bool {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, Circle>) {
          return norm(p) <= s.radius + tolerance;
        } else if constexpr (std::is_same_v<S, Rectangle>) {
          return std::abs(p.x) <= s.width / 2.0 + tolerance && std::abs(p.y) <= s.height / 2.0 + tolerance;
        } else {
          const Vec2 e = s.b - s.a;
          const double len2 = dot(e, e);
          const double u = len2 > 0.0 ? std::clamp(dot(p - s.a, e) / len2, 0.0, 1.0) : 0.0;
          return norm(p - (s.a + e * u)) <= tolerance;
        }
      },
      shape);
}

}  // namespace microsim::physics
