#pragma once

// Sensor and actuator models evaluated against a snapshot of the physical world.
// Everything here is a pure function of its arguments; the engine owns device
// state and decides when reads happen.

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "microsim/geometry.hpp"
#include "microsim/physics2d.hpp"

namespace microsim::devices {

enum class DeviceKind : std::uint8_t {
  DistanceSensor,
  LightSensor,
  TouchSensor,
  GPS,
  Compass,
  Camera1D,
  Emitter,
  Receiver,
  LED,
  Encoder,
  Servo,
};

std::string_view to_string(DeviceKind kind);

/// Handle to one device of one robot, as returned by get_device.
struct DeviceTag {
  std::uint32_t robot = 0;
  std::uint32_t index = 0;
  std::string name;

  bool operator==(const DeviceTag& o) const { return robot == o.robot && index == o.index; }
};

class WrongDeviceKind : public std::runtime_error {
 public:
  WrongDeviceKind(const std::string& device, DeviceKind actual, DeviceKind expected);
  explicit WrongDeviceKind(const std::string& what) : std::runtime_error(what) {}
};

class PayloadTooLarge : public std::length_error {
 public:
  explicit PayloadTooLarge(std::size_t size);
};

inline constexpr std::size_t kMaxPayload = 1024;

/// Piecewise-linear response curve with a per-row noise ratio.
class LookupTable {
 public:
  struct Row {
    double input;
    double output;
    double noise_ratio;
  };

  /// Rows flattened as [input, output, noise, input, output, noise, ...].
  /// Throws std::invalid_argument unless there are >= 2 rows with strictly increasing inputs.
  static LookupTable from_flat(std::span<const double> flat);

  /// Output at `input`, clamped to the first/last row outside the table domain.
  double output(double input) const;
  double noise_ratio(double input) const;
  double min_input() const { return rows_.front().input; }
  double max_input() const { return rows_.back().input; }
  double min_output() const { return min_output_; }
  double max_output() const { return max_output_; }
  const std::vector<Row>& rows() const { return rows_; }

 private:
  template <typename Get>
  double interpolate(double input, Get get) const;

  std::vector<Row> rows_;
  double min_output_ = 0.0;
  double max_output_ = 0.0;
};

/// Deterministic noise stream for one (tick, robot, device) triple, so evaluation
/// order never changes the numbers drawn.
std::mt19937_64 noise_stream(std::uint64_t seed, std::int64_t tick, std::uint32_t robot, std::uint32_t device);

/// value + N(0, (ratio * value)^2), clamped to the table's output range.
double add_noise(const LookupTable& table, double value, double ratio, std::mt19937_64& rng);

struct LightSource {
  Vec2 position;
  double intensity = 1.0;
};

/// What sensors can see: bodies for rays, lights, and this tick's contacts.
struct WorldView {
  std::span<const physics::Body> bodies;
  std::span<const LightSource> lights;
  std::span<const physics::Contact> contacts;
};

struct DistanceSensorSpec {
  LookupTable table;
  double aperture = 0.0;
  int ray_count = 1;
};

/// Shortest hit over ray_count rays spread evenly across the aperture; the
/// table's last input (its range) when nothing is hit.
double distance_sensor_distance(const DistanceSensorSpec& spec, const Pose& device, const WorldView& world,
                                std::span<const std::size_t> ignore);

double distance_sensor_read(const DistanceSensorSpec& spec, const Pose& device, const WorldView& world,
                            std::span<const std::size_t> ignore, std::mt19937_64& rng);

inline constexpr double kMinLightDistanceSq = 1e-4;

/// Sum of intensity / max(d^2, eps) over lights with a clear line of sight.
double irradiance(Vec2 at, const WorldView& world, std::span<const std::size_t> ignore);

double light_sensor_read(const LookupTable& table, const Pose& device, const WorldView& world,
                         std::span<const std::size_t> ignore, std::mt19937_64& rng);

/// 1 if any contact involving `owner` has its point inside the footprint placed at `device`.
int touch_sensor_read(const physics::Shape& footprint, const Pose& device, std::size_t owner,
                      std::span<const physics::Contact> contacts);

Vec2 gps_read(const Pose& device);
/// World +y (north) expressed in the device frame.
Vec2 compass_read(const Pose& device);

double encoder_read(double wheel_angle, double resolution, double offset_counts);

struct CameraSpec {
  double field_of_view = 0.785398;
  int width = 64;
  double max_range = 100.0;
};

/// Ray direction of pixel `k`; pixel 0 is the leftmost (counter-clockwise) edge.
double camera_ray_angle(const CameraSpec& spec, const Pose& device, int k);

/// One grayscale sample per pixel: the color of the body each ray hits, 0 for no hit.
std::vector<double> camera1d_read(const CameraSpec& spec, const Pose& device, const WorldView& world,
                                  std::span<const std::size_t> ignore);

// ---------------------------------------------------------------------------
// Communication

struct EmitterSpec {
  bool infra_red = false;
  std::int64_t channel = 1;
  /// Negative means unlimited.
  double range = -1.0;
  /// Full cone angle; negative means omnidirectional.
  double aperture = -1.0;
};

struct ReceiverSpec {
  bool infra_red = false;
  std::int64_t channel = 1;
};

/// Channel 0 reaches every receiver regardless of channel and type.
inline constexpr std::int64_t kBroadcastChannel = 0;

struct Message {
  std::int64_t channel = 1;
  std::vector<std::uint8_t> payload;
  Pose emitter_pose;
  EmitterSpec emitter;
  std::int64_t send_tick = 0;
  /// Scene order of the sender; ties within a tick are delivered in this order.
  std::uint64_t sender_order = 0;
  std::uint64_t sequence = 0;
  /// Bodies of the sending robot, excluded from the occlusion test.
  std::vector<std::size_t> sender_bodies;
};

void check_payload(std::span<const std::uint8_t> payload);

/// Reception rules: channel/type match, then range; infra-red additionally needs
/// the receiver inside the emitter cone and a clear segment between them.
bool can_receive(const Message& message, const ReceiverSpec& receiver, const Pose& receiver_pose,
                 std::span<const physics::Body> bodies, std::span<const std::size_t> receiver_bodies);

/// FIFO order by (send_tick, sender_order, sequence).
void sort_for_delivery(std::vector<Message>& messages);

}  // namespace microsim::devices
