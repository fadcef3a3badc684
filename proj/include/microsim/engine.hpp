#pragma once

// Virtual-time lockstep scheduler, controller API and supervisor API.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "microsim/devices.hpp"
#include "microsim/physics2d.hpp"
#include "microsim/scene.hpp"

namespace microsim::engine {

using devices::DeviceKind;
using devices::DeviceTag;

enum class RunMode : std::uint8_t { Realtime, Fast, Step };
std::optional<RunMode> parse_run_mode(std::string_view text);
std::string_view to_string(RunMode mode);

/// World could not be turned into a simulation.
class LoadError : public std::runtime_error {
 public:
  explicit LoadError(const std::string& what, std::vector<std::string> details = {});
  const std::vector<std::string>& details() const { return details_; }

 private:
  std::vector<std::string> details_;
};

/// Misuse of the controller API (bad step length, step before live, ...).
class ControllerError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class PermissionError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class UnknownNode : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class UnknownDevice : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown out of controller API calls once the engine has taken the controller
/// down (shutdown, hung budget, robot removed). Deliberately not a std::exception.
struct ControllerTerminated {};

struct TrajectorySample {
  std::int64_t t_ms = 0;
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

struct Trajectory {
  std::string node;
  std::vector<TrajectorySample> samples;
};

class Controller;
class Simulation;

namespace detail {
struct World;
struct Access;
}  // namespace detail

using ControllerFn = std::function<void(Controller&)>;
using ControllerRegistry = std::map<std::string, ControllerFn, std::less<>>;

/// Built-in controller programs, keyed by the world file's controller string.
const ControllerRegistry& builtin_controllers();

/// Controller string of robots driven over the wire.
inline constexpr std::string_view kExternController = "<extern>";

struct LoadOptions {
  /// Overrides WorldInfo.randomSeed when set.
  std::optional<std::uint64_t> seed;
  /// Looked up before the built-ins.
  ControllerRegistry controllers;
  /// Wall-clock time a controller may compute without calling step.
  std::chrono::milliseconds hung_budget{5000};
};

/// A controller living outside the process (wire session).
class RemoteController {
 public:
  virtual ~RemoteController() = default;
  /// Runs on the engine thread whenever the robot is runnable. Serves requests
  /// through `ctx` until the client calls step (return true) or is gone (false).
  virtual bool run_turn(Controller& ctx) = 0;
  /// The engine dropped this controller (robot removed, simulation destroyed).
  virtual void detached(std::string_view reason) { (void)reason; }
};

/// Privileged world manipulation. Obtained from Simulation::supervisor() (wire,
/// CLI, tests) or Controller::supervisor() on a robot with `supervisor TRUE`.
class Supervisor {
 public:
  /// Queued; applied at the next tick boundary with velocities zeroed.
  void set_pose(std::string_view node, const Pose& pose);
  Pose get_pose(std::string_view node) const;
  /// Parses and validates now; the node joins the simulation at the next tick boundary.
  /// Returns the label used to address it.
  std::string spawn(std::string_view fragment);
  /// Queued; applied at the next tick boundary.
  void remove(std::string_view node);
  /// One sample per tick from now on. Returns the node label.
  std::string track(std::string_view node);
  /// Radio message with unlimited range; channel 0 reaches every receiver.
  void send(std::int64_t channel, std::span<const std::uint8_t> payload);

 private:
  friend class Simulation;
  friend class Controller;
  friend struct detail::Access;
  Supervisor(Simulation* sim, std::uint64_t sender_order) : sim_(sim), sender_order_(sender_order) {}
  Simulation* sim_;
  std::uint64_t sender_order_;
};

/// The per-robot API seen by controller programs. Calls are only valid while the
/// robot's controller holds its turn.
class Controller {
 public:
  /// Registers the reset callback and runs it once. Required before step().
  void live(std::function<void()> on_reset = {});
  DeviceTag get_device(std::string_view name);
  /// Suspends for ms / basic_step_ms ticks; ms must be a positive multiple.
  void step(std::int64_t ms);

  std::int64_t time_ms() const;
  std::int64_t basic_step_ms() const;
  const std::string& robot_name() const;
  bool is_supervisor() const;
  Supervisor supervisor();

  DeviceKind device_kind(const DeviceTag& tag) const;
  /// Name and kind of every device, encoders included.
  std::vector<std::pair<std::string, DeviceKind>> device_list() const;

  double distance_sensor_get_value(const DeviceTag& tag);
  double light_sensor_get_value(const DeviceTag& tag);
  int touch_sensor_get_value(const DeviceTag& tag);
  Vec2 gps_get_position(const DeviceTag& tag);
  Vec2 compass_get_north(const DeviceTag& tag);
  double encoder_get_value(const DeviceTag& tag);
  void encoder_reset(const DeviceTag& tag);
  std::vector<double> camera_get_image(const DeviceTag& tag);
  void emitter_send(const DeviceTag& tag, std::span<const std::uint8_t> payload);
  std::vector<devices::Message> receiver_poll(const DeviceTag& tag);
  void set_wheel_speeds(double left, double right);
  void servo_command(const DeviceTag& tag, physics::ServoMode mode, double target);
  double servo_get_position(const DeviceTag& tag);
  void led_set(const DeviceTag& tag, int state);
  int led_get(const DeviceTag& tag);
  /// Snapshot of any readable device as numbers (not receivers or emitters).
  std::vector<double> read_values(const DeviceTag& tag);

  struct Task;

 private:
  friend class Simulation;
  friend struct detail::Access;
  Controller(Simulation* sim, std::size_t robot) : sim_(sim), robot_(robot) {}

  /// Holds the task lock for the duration of an API call, if threaded.
  std::unique_lock<std::mutex> enter() const;
  void check_turn() const;
  std::size_t device_index(const DeviceTag& tag, DeviceKind expected) const;

  Simulation* sim_;
  std::size_t robot_;
  std::shared_ptr<Task> task_;
  bool in_turn_ = false;
  bool stepped_ = false;
  bool in_reset_callback_ = false;
};

/// Everything a viewer or frame dump needs about one tick.
struct StateSnapshot {
  struct BodyState {
    std::string node;
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;
    physics::Shape shape;
    double color = 0.5;
  };
  struct DeviceState {
    std::string robot;
    std::string name;
    DeviceKind kind{};
    std::vector<double> value;
  };
  struct LedState {
    std::string robot;
    std::string name;
    int state = 0;
  };
  std::int64_t t_ms = 0;
  std::vector<BodyState> bodies;
  std::vector<DeviceState> devices;
  std::vector<LedState> leds;
};

class Simulation {
 public:
  /// Throws LoadError when the tree does not validate or names an unknown controller.
  explicit Simulation(const scene::SceneTree& tree, LoadOptions options = {});
  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  static std::unique_ptr<Simulation> load_file(const std::filesystem::path& path, LoadOptions options = {});

  std::int64_t now_ms() const;
  std::int64_t basic_step_ms() const;
  std::int64_t tick_count() const;
  std::uint64_t seed() const;

  /// One lockstep tick: commands, controllers, latch, physics, messages,
  /// trajectories, clock, listeners.
  void tick();
  /// Fast: unpaced. Realtime: paced to the wall clock. Step: one tick per
  /// step_once(). Returns when until_ms is reached or stop is requested.
  void run(RunMode mode, std::optional<std::int64_t> until_ms = {});
  /// Back to the post-load state; reset callbacks run. From a queued command the
  /// reset takes the place of the tick being started.
  void reset();

  // Thread-safe controls.
  /// Queued; runs on the engine thread at the next tick boundary (or while idle).
  void post(std::function<void(Simulation&)> command);
  void pause();
  void resume();
  void step_once();
  /// run() returns at the next tick boundary, after any step_once() already requested while paused.
  void request_stop();
  bool paused() const;

  std::size_t robot_count() const;
  /// Declared devices of a robot (built-in encoders excluded).
  std::size_t device_count(std::size_t robot) const;
  std::optional<std::size_t> find_robot(std::string_view name) const;
  /// Name and kind of every device of a robot, encoders included.
  std::vector<std::pair<std::string, DeviceKind>> device_list(std::size_t robot) const;
  std::string robot_name(std::size_t robot) const;
  /// Wheel speeds currently driving the robot (after the latch).
  std::pair<double, double> wheel_speeds(std::size_t robot) const;
  Controller& controller(std::size_t robot);

  std::span<const physics::Body> bodies() const;
  /// Label of the node owning each body in bodies().
  std::span<const std::string> body_labels() const;
  StateSnapshot state() const;
  /// FNV-1a over the bit patterns of the dynamic state.
  std::uint64_t digest() const;
  const std::vector<std::string>& errors() const;
  const std::map<std::string, Trajectory, std::less<>>& trajectories() const;
  const scene::SceneTree& world() const;

  Supervisor supervisor();

  /// Attaches a wire controller to a robot whose controller is "<extern>".
  void attach_remote(std::size_t robot, std::shared_ptr<RemoteController> remote);
  void detach_remote(std::size_t robot);

  using Listener = std::function<void(const Simulation&)>;
  /// Called on the engine thread after every tick.
  std::size_t add_tick_listener(Listener fn);
  /// Called on the engine thread after every reset.
  std::size_t add_reset_listener(Listener fn);
  void remove_listener(std::size_t id);

 private:
  friend class Controller;
  friend class Supervisor;
  friend struct detail::Access;

  /// True when a queued command reset the simulation.
  bool drain_commands();
  void apply_pending();

  std::unique_ptr<detail::World> w_;

  mutable std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<std::function<void(Simulation&)>> queue_;
  bool paused_ = false;
  bool stop_ = false;
  std::int64_t step_requests_ = 0;
  bool draining_ = false;
  bool reset_deferred_ = false;
};

}  // namespace microsim::engine
