#include <algorithm>
#include <array>
#include <cmath>

#include "microsim/physics2d.hpp"

namespace microsim::physics {

namespace {

struct Polygon {
  std::array<Vec2, 4> vertices{};
  std::size_t count = 0;
  std::array<Vec2, 2> axes{};
  std::size_t axis_count = 0;
};

Polygon polygon_of(const Body& body) {
  Polygon p;
  if (const auto* r = std::get_if<Rectangle>(&body.shape)) {
    const double hw = r->width / 2.0;
    const double hh = r->height / 2.0;
    p.vertices = {to_world(body.pose, {-hw, -hh}), to_world(body.pose, {hw, -hh}), to_world(body.pose, {hw, hh}),
                  to_world(body.pose, {-hw, hh})};
    p.count = 4;
    p.axes = {heading(body.pose.theta), perp(heading(body.pose.theta))};
    p.axis_count = 2;
  } else if (const auto* s = std::get_if<Segment>(&body.shape)) {
    p.vertices[0] = to_world(body.pose, s->a);
    p.vertices[1] = to_world(body.pose, s->b);
    p.count = 2;
    const Vec2 e = p.vertices[1] - p.vertices[0];
    const double len = norm(e);
    if (len > 0.0) {
      p.axes = {perp(e) * (1.0 / len), e * (1.0 / len)};
      p.axis_count = 2;
    }
  }
  return p;
}

std::pair<double, double> project(const Polygon& p, Vec2 axis) {
  double lo = dot(p.vertices[0], axis);
  double hi = lo;
  for (std::size_t k = 1; k < p.count; ++k) {
    const double d = dot(p.vertices[k], axis);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  return {lo, hi};
}

Vec2 centroid(const Polygon& p) {
  Vec2 c;
  for (std::size_t k = 0; k < p.count; ++k) c += p.vertices[k];
  return c * (1.0 / static_cast<double>(p.count));
}

// Average of the vertices extremal along `dir`.
Vec2 support_feature(const Polygon& p, Vec2 dir) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < p.count; ++k) best = std::max(best, dot(p.vertices[k], dir));
  Vec2 sum;
  int n = 0;
  for (std::size_t k = 0; k < p.count; ++k) {
    if (dot(p.vertices[k], dir) >= best - 1e-9) {
      sum += p.vertices[k];
      ++n;
    }
  }
  return sum * (1.0 / n);
}

std::optional<Contact> polygon_polygon(const Polygon& a, const Polygon& b) {
  double best_overlap = std::numeric_limits<double>::infinity();
  Vec2 best_axis;
  auto test_axes = [&](const Polygon& src) {
    for (std::size_t k = 0; k < src.axis_count; ++k) {
      const Vec2 axis = src.axes[k];
      const auto [a_lo, a_hi] = project(a, axis);
      const auto [b_lo, b_hi] = project(b, axis);
      const double overlap = std::min(a_hi, b_hi) - std::max(a_lo, b_lo);
      if (overlap <= 0.0) return false;
      if (overlap < best_overlap) {
        best_overlap = overlap;
        best_axis = axis;
      }
    }
    return true;
  };
  if (!test_axes(a) || !test_axes(b)) return std::nullopt;
  if (a.axis_count == 0 && b.axis_count == 0) return std::nullopt;
  Vec2 n = best_axis;
  // Orient from a to b; for a centered pair fall back to the projection ranges.
  const double sep = dot(centroid(b) - centroid(a), n);
  if (sep < 0.0) {
    n = -n;
  } else if (sep == 0.0) {
    const auto [a_lo, a_hi] = project(a, n);
    const auto [b_lo, b_hi] = project(b, n);
    if (b_lo + b_hi < a_lo + a_hi) n = -n;
  }
  // Shortest separation along +-axis: recompute overlap for the chosen orientation.
  const auto [a_lo, a_hi] = project(a, n);
  const auto [b_lo, b_hi] = project(b, n);
  Contact c;
  c.normal = n;
  c.penetration = a_hi - b_lo;
  if (c.penetration <= 0.0) return std::nullopt;
  c.point = (support_feature(a, n) + support_feature(b, -n)) * 0.5;
  return c;
}

// Normal from the circle's perspective is computed as polygon -> circle.
std::optional<Contact> polygon_circle(const Body& poly_body, const Polygon& poly, Vec2 center, double radius) {
  Contact c;
  if (const auto* r = std::get_if<Rectangle>(&poly_body.shape)) {
    const double hw = r->width / 2.0;
    const double hh = r->height / 2.0;
    const Vec2 local = to_local(poly_body.pose, center);
    const Vec2 closest{std::clamp(local.x, -hw, hw), std::clamp(local.y, -hh, hh)};
    const bool inside = closest == local;
    if (inside) {
      // Push out through the nearest face.
      const double dx = hw - std::abs(local.x);
      const double dy = hh - std::abs(local.y);
      Vec2 n_local;
      double depth;
      if (dx <= dy) {
        n_local = {local.x >= 0.0 ? 1.0 : -1.0, 0.0};
        depth = dx;
      } else {
        n_local = {0.0, local.y >= 0.0 ? 1.0 : -1.0};
        depth = dy;
      }
      c.normal = rotate(n_local, poly_body.pose.theta);
      c.penetration = radius + depth;
      c.point = to_world(poly_body.pose, {local.x + n_local.x * depth, local.y + n_local.y * depth});
      return c;
    }
    const Vec2 d = local - closest;
    const double dist = norm(d);
    if (dist >= radius) return std::nullopt;
    c.normal = rotate(d * (1.0 / dist), poly_body.pose.theta);
    c.penetration = radius - dist;
    c.point = to_world(poly_body.pose, closest);
    return c;
  }
  if (poly.count != 2) return std::nullopt;
  const Vec2 a = poly.vertices[0];
  const Vec2 e = poly.vertices[1] - a;
  const double len2 = dot(e, e);
  const double u = len2 > 0.0 ? std::clamp(dot(center - a, e) / len2, 0.0, 1.0) : 0.0;
  const Vec2 q = a + e * u;
  const Vec2 d = center - q;
  const double dist = norm(d);
  if (dist >= radius) return std::nullopt;
  if (dist > 0.0) {
    c.normal = d * (1.0 / dist);
  } else {
    c.normal = len2 > 0.0 ? perp(e) * (1.0 / std::sqrt(len2)) : Vec2{1.0, 0.0};
  }
  c.penetration = radius - dist;
  c.point = q;
  return c;
}

bool aabb_overlap(const Aabb& a, const Aabb& b) {
  return a.min.x <= b.max.x && b.min.x <= a.max.x && a.min.y <= b.max.y && b.min.y <= a.max.y;
}

void apply_impulse(Body& body, Vec2 r, Vec2 impulse, double sign) {
  if (body.is_static) return;
  body.velocity.vx += sign * impulse.x * body.inv_mass();
  body.velocity.vy += sign * impulse.y * body.inv_mass();
  body.velocity.omega += sign * cross(r, impulse) * body.inv_inertia();
}

Vec2 point_velocity(const Body& body, Vec2 r) {
  return Vec2{body.velocity.vx, body.velocity.vy} + cross(body.velocity.omega, r);
}

void solve_velocity(Body& a, Body& b, Contact& c) {
  const Vec2 ra = c.point - a.pose.position();
  const Vec2 rb = c.point - b.pose.position();
  const Vec2 n = c.normal;
  Vec2 rel = point_velocity(b, rb) - point_velocity(a, ra);
  const double vn = dot(rel, n);
  if (vn >= 0.0) return;

  const double e = std::min(a.material.bounce, b.material.bounce);
  const double ran = cross(ra, n);
  const double rbn = cross(rb, n);
  const double kn = a.inv_mass() + b.inv_mass() + ran * ran * a.inv_inertia() + rbn * rbn * b.inv_inertia();
  if (kn <= 0.0) return;
  const double jn = -(1.0 + e) * vn / kn;
  apply_impulse(a, ra, n * jn, -1.0);
  apply_impulse(b, rb, n * jn, 1.0);
  c.normal_impulse = jn;

  rel = point_velocity(b, rb) - point_velocity(a, ra);
  const Vec2 tangential = rel - n * dot(rel, n);
  const double vt = norm(tangential);
  if (vt <= 1e-15) return;
  const Vec2 t = tangential * (1.0 / vt);
  const double rat = cross(ra, t);
  const double rbt = cross(rb, t);
  const double kt = a.inv_mass() + b.inv_mass() + rat * rat * a.inv_inertia() + rbt * rbt * b.inv_inertia();
  if (kt <= 0.0) return;
  const double mu_s = std::sqrt(a.material.static_friction * b.material.static_friction);
  const double mu_k = std::sqrt(a.material.kinetic_friction * b.material.kinetic_friction);
  double jt = -vt / kt;  // impulse that stops the sliding
  if (-jt > mu_s * jn) jt = -mu_k * jn;
  apply_impulse(a, ra, t * jt, -1.0);
  apply_impulse(b, rb, t * jt, 1.0);
  c.tangent_impulse = jt;
}

void separate(Body& a, Body& b, const Contact& c) {
  constexpr double slop = 1e-9;
  const double wa = a.inv_mass();
  const double wb = b.inv_mass();
  const double total = wa + wb;
  if (total <= 0.0) return;
  const double push = c.penetration + slop;
  a.pose.x -= c.normal.x * push * wa / total;
  a.pose.y -= c.normal.y * push * wa / total;
  b.pose.x += c.normal.x * push * wb / total;
  b.pose.y += c.normal.y * push * wb / total;
}

}  // namespace

std::optional<Contact> collide(const Body& a, const Body& b) {
  const auto* ca = std::get_if<Circle>(&a.shape);
  const auto* cb = std::get_if<Circle>(&b.shape);
  if (ca && cb) {
    const Vec2 d = b.pose.position() - a.pose.position();
    const double dist = norm(d);
    const double reach = ca->radius + cb->radius;
    if (dist >= reach) return std::nullopt;
    Contact c;
    c.normal = dist > 0.0 ? d * (1.0 / dist) : Vec2{1.0, 0.0};
    c.penetration = reach - dist;
    c.point = a.pose.position() + c.normal * (ca->radius - c.penetration / 2.0);
    return c;
  }
  if (cb) return polygon_circle(a, polygon_of(a), b.pose.position(), cb->radius);
  if (ca) {
    auto c = polygon_circle(b, polygon_of(b), a.pose.position(), ca->radius);
    if (c) c->normal = -c->normal;
    return c;
  }
  return polygon_polygon(polygon_of(a), polygon_of(b));
}

std::vector<Contact> find_contacts(std::span<const Body> bodies) {
  std::vector<Aabb> boxes;
  boxes.reserve(bodies.size());
  for (const Body& b : bodies) boxes.push_back(bounds(b));
  std::vector<Contact> out;
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    if (!bodies[i].collidable) continue;
    for (std::size_t j = i + 1; j < bodies.size(); ++j) {
      const Body& a = bodies[i];
      const Body& b = bodies[j];
      if (!b.collidable || (a.is_static && b.is_static)) continue;
      if (a.group != 0 && a.group == b.group) continue;
      if (!aabb_overlap(boxes[i], boxes[j])) continue;
      if (auto c = collide(a, b)) {
        c->a = i;
        c->b = j;
        out.push_back(*c);
      }
    }
  }
  return out;
}

std::vector<Contact> resolve_contacts(std::span<Body> bodies) {
  std::vector<Contact> contacts = find_contacts(bodies);
  for (Contact& c : contacts) solve_velocity(bodies[c.a], bodies[c.b], c);

  constexpr int kMaxIterations = 64;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    const std::vector<Contact> overlaps = iter == 0 ? contacts : find_contacts(bodies);
    double worst = 0.0;
    for (const Contact& c : overlaps) worst = std::max(worst, c.penetration);
    if (worst <= kMaxPenetration / 2.0) break;
    for (const Contact& c : overlaps) {
      // Earlier corrections in this sweep may already have separated the pair.
      if (auto fresh = collide(bodies[c.a], bodies[c.b])) {
        fresh->a = c.a;
        fresh->b = c.b;
        separate(bodies[c.a], bodies[c.b], *fresh);
      }
    }
  }
  return contacts;
}

}  // namespace microsim::physics
