#pragma once

// Test-only reference computations. Each one follows a different route from the
// library code it checks: long-double textbook formulas, edge-by-edge brute force,
// closest-approach geometry.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "microsim/physics2d.hpp"

namespace oracle {

using microsim::Pose;
using microsim::Vec2;

/// Textbook arc solution of the differential drive, evaluated in long double:
/// x' = x + (v/w)(sin(th + w dt) - sin th), y' = y - (v/w)(cos(th + w dt) - cos th).
inline Pose arc_motion(const Pose& p, double wl, double wr, double r, double axle, double dt) {
  const long double v = static_cast<long double>(r) * (static_cast<long double>(wl) + wr) / 2.0L;
  const long double w = static_cast<long double>(r) * (static_cast<long double>(wr) - wl) / axle;
  const long double th = p.theta;
  if (std::fabs(static_cast<double>(w)) < 1e-12) {
    return {static_cast<double>(p.x + v * dt * std::cos(th)), static_cast<double>(p.y + v * dt * std::sin(th)),
            p.theta};
  }
  const long double th2 = th + w * dt;
  return {static_cast<double>(p.x + (v / w) * (std::sin(th2) - std::sin(th))),
          static_cast<double>(p.y - (v / w) * (std::cos(th2) - std::cos(th))), static_cast<double>(th2)};
}

/// Ray vs circle by closest approach: foot of the perpendicular from the center,
/// then back off by the half-chord.
inline std::optional<double> circle_hit(Vec2 c, double radius, Vec2 o, Vec2 d) {
  const double dx = o.x - c.x, dy = o.y - c.y;
  if (dx * dx + dy * dy <= radius * radius) return 0.0;
  const double along = (c.x - o.x) * d.x + (c.y - o.y) * d.y;
  const double fx = o.x + along * d.x - c.x, fy = o.y + along * d.y - c.y;
  const double miss2 = fx * fx + fy * fy;
  if (along < 0.0 || miss2 > radius * radius) return std::nullopt;
  return along - std::sqrt(radius * radius - miss2);
}

/// Ray vs segment via Cramer's rule on o + t d = p + s (q - p).
inline std::optional<double> segment_hit(Vec2 p, Vec2 q, Vec2 o, Vec2 d) {
  const double a11 = d.x, a12 = p.x - q.x, a21 = d.y, a22 = p.y - q.y;
  const double det = a11 * a22 - a12 * a21;
  if (std::fabs(det) < 1e-300) return std::nullopt;
  const double bx = p.x - o.x, by = p.y - o.y;
  const double t = (bx * a22 - a12 * by) / det;
  const double s = (a11 * by - bx * a21) / det;
  if (t < 0.0 || s < 0.0 || s > 1.0) return std::nullopt;
  return t;
}

inline bool inside_rect(const microsim::physics::Body& b, const microsim::physics::Rectangle& r, Vec2 o) {
  const double c = std::cos(b.pose.theta), s = std::sin(b.pose.theta);
  const double lx = c * (o.x - b.pose.x) + s * (o.y - b.pose.y);
  const double ly = -s * (o.x - b.pose.x) + c * (o.y - b.pose.y);
  return std::fabs(lx) <= r.width / 2 && std::fabs(ly) <= r.height / 2;
}

/// Brute-force nearest hit over every body, testing rectangles edge by edge.
inline double nearest_hit(std::span<const microsim::physics::Body> bodies, Vec2 o, Vec2 d, double max_range,
                          std::span<const std::size_t> ignore = {}) {
  using namespace microsim::physics;
  double best = max_range;
  for (std::size_t k = 0; k < bodies.size(); ++k) {
    if (std::find(ignore.begin(), ignore.end(), k) != ignore.end()) continue;
    const Body& b = bodies[k];
    std::vector<double> hits;
    if (const auto* c = std::get_if<Circle>(&b.shape)) {
      if (auto t = circle_hit(b.pose.position(), c->radius, o, d)) hits.push_back(*t);
    } else if (const auto* r = std::get_if<Rectangle>(&b.shape)) {
      if (inside_rect(b, *r, o)) {
        hits.push_back(0.0);
      } else {
        const double cs = std::cos(b.pose.theta), sn = std::sin(b.pose.theta);
        auto corner = [&](double lx, double ly) {
          return Vec2{b.pose.x + cs * lx - sn * ly, b.pose.y + sn * lx + cs * ly};
        };
        const double hw = r->width / 2, hh = r->height / 2;
        const Vec2 v[4] = {corner(-hw, -hh), corner(hw, -hh), corner(hw, hh), corner(-hw, hh)};
        for (int e = 0; e < 4; ++e) {
          if (auto t = segment_hit(v[e], v[(e + 1) % 4], o, d)) hits.push_back(*t);
        }
      }
    } else if (const auto* s = std::get_if<Segment>(&b.shape)) {
      const double cs = std::cos(b.pose.theta), sn = std::sin(b.pose.theta);
      const Vec2 p{b.pose.x + cs * s->a.x - sn * s->a.y, b.pose.y + sn * s->a.x + cs * s->a.y};
      const Vec2 q{b.pose.x + cs * s->b.x - sn * s->b.y, b.pose.y + sn * s->b.x + cs * s->b.y};
      if (auto t = segment_hit(p, q, o, d)) hits.push_back(*t);
    }
    for (double t : hits) best = std::min(best, t);
  }
  return best;
}

/// Piecewise-linear interpolation over [input, output, noise] rows, clamped at the ends.
inline double interpolate(const std::vector<double>& rows, double x) {
  const std::size_t n = rows.size() / 3;
  if (x <= rows[0]) return rows[1];
  if (x >= rows[3 * (n - 1)]) return rows[3 * (n - 1) + 1];
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double x0 = rows[3 * k], y0 = rows[3 * k + 1], x1 = rows[3 * k + 3], y1 = rows[3 * k + 4];
    if (x >= x0 && x <= x1) return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
  }
  return rows[3 * (n - 1) + 1];
}

}  // namespace oracle
