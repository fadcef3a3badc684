#include <algorithm>
#include <cmath>
#include <string>

#include "microsim/devices.hpp"

namespace microsim::devices {

std::string_view to_string(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::DistanceSensor: return "DistanceSensor";
    case DeviceKind::LightSensor: return "LightSensor";
    case DeviceKind::TouchSensor: return "TouchSensor";
    case DeviceKind::GPS: return "GPS";
    case DeviceKind::Compass: return "Compass";
    case DeviceKind::Camera1D: return "Camera1D";
    case DeviceKind::Emitter: return "Emitter";
    case DeviceKind::Receiver: return "Receiver";
    case DeviceKind::LED: return "LED";
    case DeviceKind::Encoder: return "Encoder";
    case DeviceKind::Servo: return "Servo";
  }
  return "?";
}

WrongDeviceKind::WrongDeviceKind(const std::string& device, DeviceKind actual, DeviceKind expected)
    : std::runtime_error("device '" + device + "' is a " + std::string(to_string(actual)) + ", not a " +
                         std::string(to_string(expected))) {}

PayloadTooLarge::PayloadTooLarge(std::size_t size)
    : std::length_error("payload of " + std::to_string(size) + " bytes exceeds " + std::to_string(kMaxPayload)) {}

LookupTable LookupTable::from_flat(std::span<const double> flat) {
  if (flat.size() % 3 != 0) throw std::invalid_argument("lookupTable needs [input output noise] triples");
  if (flat.size() < 6) throw std::invalid_argument("lookupTable needs at least 2 rows");
  LookupTable t;
  for (std::size_t k = 0; k < flat.size(); k += 3) {
    if (!t.rows_.empty() && !(flat[k] > t.rows_.back().input))
      throw std::invalid_argument("lookupTable inputs must be strictly increasing");
    if (flat[k + 2] < 0.0) throw std::invalid_argument("lookupTable noise must be >= 0");
    t.rows_.push_back({flat[k], flat[k + 1], flat[k + 2]});
  }
  const auto [lo, hi] = std::minmax_element(t.rows_.begin(), t.rows_.end(),
                                            [](const Row& a, const Row& b) { return a.output < b.output; });
  t.min_output_ = lo->output;
  t.max_output_ = hi->output;
  return t;
}

template <typename Get>
double LookupTable::interpolate(double input, Get get) const {
  if (input <= rows_.front().input) return get(rows_.front());
  if (input >= rows_.back().input) return get(rows_.back());
  auto hi = std::upper_bound(rows_.begin(), rows_.end(), input,
                             [](double v, const Row& r) { return v < r.input; });
  auto lo = hi - 1;
  const double u = (input - lo->input) / (hi->input - lo->input);
  return get(*lo) + u * (get(*hi) - get(*lo));
}

double LookupTable::output(double input) const {
  return interpolate(input, [](const Row& r) { return r.output; });
}

double LookupTable::noise_ratio(double input) const {
  return interpolate(input, [](const Row& r) { return r.noise_ratio; });
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::mt19937_64 noise_stream(std::uint64_t seed, std::int64_t tick, std::uint32_t robot, std::uint32_t device) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ static_cast<std::uint64_t>(tick));
  h = splitmix(h ^ (static_cast<std::uint64_t>(robot) << 32 | device));
  return std::mt19937_64(h);
}

double add_noise(const LookupTable& table, double value, double ratio, std::mt19937_64& rng) {
  if (ratio > 0.0 && value != 0.0) {
    std::normal_distribution<double> gauss(0.0, std::abs(ratio * value));
    value += gauss(rng);
  }
  return std::clamp(value, table.min_output(), table.max_output());
}

double distance_sensor_distance(const DistanceSensorSpec& spec, const Pose& device, const WorldView& world,
                                std::span<const std::size_t> ignore) {
  const double range = spec.table.max_input();
  const int n = std::max(1, spec.ray_count);
  double best = range;
  for (int k = 0; k < n; ++k) {
    const double offset = n == 1 ? 0.0 : spec.aperture * (static_cast<double>(k) / (n - 1) - 0.5);
    const double a = device.theta + offset;
    const auto hit = physics::ray_cast(world.bodies, device.position(), heading(a), range, ignore);
    if (hit.hit) best = std::min(best, hit.distance);
  }
  return best;
}

double distance_sensor_read(const DistanceSensorSpec& spec, const Pose& device, const WorldView& world,
                            std::span<const std::size_t> ignore, std::mt19937_64& rng) {
  const double d = distance_sensor_distance(spec, device, world, ignore);
  return add_noise(spec.table, spec.table.output(d), spec.table.noise_ratio(d), rng);
}

double irradiance(Vec2 at, const WorldView& world, std::span<const std::size_t> ignore) {
  double e = 0.0;
  for (const LightSource& light : world.lights) {
    const Vec2 to = light.position - at;
    const double d = norm(to);
    if (d > 0.0) {
      const auto hit = physics::ray_cast(world.bodies, at, to * (1.0 / d), d, ignore);
      if (hit.hit && hit.distance < d - 1e-9) continue;
    }
    e += light.intensity / std::max(d * d, kMinLightDistanceSq);
  }
  return e;
}

double light_sensor_read(const LookupTable& table, const Pose& device, const WorldView& world,
                         std::span<const std::size_t> ignore, std::mt19937_64& rng) {
  const double e = irradiance(device.position(), world, ignore);
  return add_noise(table, table.output(e), table.noise_ratio(e), rng);
}

int touch_sensor_read(const physics::Shape& footprint, const Pose& device, std::size_t owner,
                      std::span<const physics::Contact> contacts) {
  constexpr double tol = 1e-6;
  for (const auto& c : contacts) {
    if (c.a != owner && c.b != owner) continue;
    if (physics::shape_contains(footprint, device, c.point, tol)) return 1;
  }
  return 0;
}

Vec2 gps_read(const Pose& device) { return device.position(); }

Vec2 compass_read(const Pose& device) { return rotate({0.0, 1.0}, -device.theta); }

double encoder_read(double wheel_angle, double resolution, double offset_counts) {
  return wheel_angle * resolution - offset_counts;
}

double camera_ray_angle(const CameraSpec& spec, const Pose& device, int k) {
  const double u = (k + 0.5) / spec.width;
  return device.theta + spec.field_of_view * (0.5 - u);
}

std::vector<double> camera1d_read(const CameraSpec& spec, const Pose& device, const WorldView& world,
                                  std::span<const std::size_t> ignore) {
  std::vector<double> pixels(static_cast<std::size_t>(std::max(0, spec.width)), 0.0);
  for (int k = 0; k < spec.width; ++k) {
    const double a = camera_ray_angle(spec, device, k);
    const auto hit =
        physics::ray_cast(world.bodies, device.position(), heading(a), spec.max_range, ignore);
    if (hit.hit) pixels[k] = std::clamp(world.bodies[hit.body].color, 0.0, 1.0);
  }
  return pixels;
}

}  // namespace microsim::devices
