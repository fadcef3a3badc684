#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "microsim/cli.hpp"

namespace microsim::cli {

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const scene::SceneTree& tree, const char* env) {
  if (flag) return *flag;
  for (scene::NodeId id : tree.roots()) {
    const scene::Node& n = tree.node(tree.resolve(id));
    if (n.type == scene::NodeType::WorldInfo && n.find("randomSeed")) {
      return static_cast<std::uint64_t>(n.get_int("randomSeed"));
    }
  }
  if (env && *env) {
    const std::string_view s(env);
    std::uint64_t value = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || end != s.data() + s.size()) {
      throw std::invalid_argument("MICROSIM_SEED is not an unsigned integer: '" + std::string(s) + "'");
    }
    return value;
  }
  return 0;
}

namespace {

std::string g9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void write_trajectories(const std::map<std::string, engine::Trajectory, std::less<>>& tracks, std::ostream& out) {
  struct Row {
    std::int64_t t;
    const std::string* node;
    const engine::TrajectorySample* s;
  };
  std::vector<Row> rows;
  for (const auto& [label, traj] : tracks) {
    for (const auto& s : traj.samples) rows.push_back({s.t_ms, &label, &s});
  }
  // Map order already sorts nodes; a stable sort on time keeps it within a tick.
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
  out << "t_ms,node,x,y,theta\n";
  for (const Row& r : rows) {
    out << r.t << ',' << *r.node << ',' << g9(r.s->x) << ',' << g9(r.s->y) << ',' << g9(r.s->theta) << '\n';
  }
}

FrameGeometry frame_geometry(std::span<const physics::Body> bodies, double scale) {
  double x0 = -0.5, y0 = -0.5, x1 = 0.5, y1 = 0.5;
  if (!bodies.empty()) {
    x0 = y0 = INFINITY;
    x1 = y1 = -INFINITY;
    for (const auto& b : bodies) {
      const physics::Aabb box = physics::bounds(b);
      x0 = std::min(x0, box.min.x);
      y0 = std::min(y0, box.min.y);
      x1 = std::max(x1, box.max.x);
      y1 = std::max(y1, box.max.y);
    }
  }
  const double mx = std::max(0.1 * (x1 - x0), 0.05);
  const double my = std::max(0.1 * (y1 - y0), 0.05);
  FrameGeometry g;
  g.scale = scale;
  g.min_x = x0 - mx;
  g.max_y = y1 + my;
  g.width = std::max(1, static_cast<int>(std::ceil((x1 - x0 + 2 * mx) * scale - 1e-6)));
  g.height = std::max(1, static_cast<int>(std::ceil((y1 - y0 + 2 * my) * scale - 1e-6)));
  return g;
}

std::string render_ppm(const engine::StateSnapshot& state, const FrameGeometry& g) {
  const std::string header = "P6\n" + std::to_string(g.width) + " " + std::to_string(g.height) + "\n255\n";
  std::string img(header.size() + static_cast<std::size_t>(g.width) * static_cast<std::size_t>(g.height) * 3, '\0');
  std::copy(header.begin(), header.end(), img.begin());
  unsigned char* px = reinterpret_cast<unsigned char*>(img.data() + header.size());
  const double half_pixel = 0.5 / g.scale;
  for (const auto& b : state.bodies) {
    physics::Body body;
    body.pose = {b.x, b.y, b.theta};
    body.shape = b.shape;
    const physics::Aabb box = physics::bounds(body);
    const int i0 = std::max(0, static_cast<int>(std::floor((box.min.x - g.min_x) * g.scale)) - 1);
    const int i1 = std::min(g.width - 1, static_cast<int>(std::ceil((box.max.x - g.min_x) * g.scale)) + 1);
    const int j0 = std::max(0, static_cast<int>(std::floor((g.max_y - box.max.y) * g.scale)) - 1);
    const int j1 = std::min(g.height - 1, static_cast<int>(std::ceil((g.max_y - box.min.y) * g.scale)) + 1);
    const double tol = std::holds_alternative<physics::Segment>(b.shape) ? half_pixel : 0.0;
    const auto grey = static_cast<unsigned char>(std::lround(std::clamp(b.color, 0.0, 1.0) * 255.0));
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) {
        const Vec2 p{g.min_x + (i + 0.5) / g.scale, g.max_y - (j + 0.5) / g.scale};
        if (!physics::shape_contains(b.shape, body.pose, p, tol)) continue;
        unsigned char* dst = px + (static_cast<std::size_t>(j) * static_cast<std::size_t>(g.width) + static_cast<std::size_t>(i)) * 3;
        dst[0] = dst[1] = dst[2] = grey;
      }
    }
  }
  return img;
}

std::string frame_name(std::int64_t tick) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%08lld.ppm", static_cast<long long>(tick));
  return buf;
}

}  // namespace microsim::cli
