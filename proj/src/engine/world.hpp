#pragma once

// Engine internals shared by the engine translation units.

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "microsim/devices.hpp"
#include "microsim/engine.hpp"
#include "microsim/physics2d.hpp"
#include "microsim/scene.hpp"

namespace microsim::engine {

struct Controller::Task {
  std::mutex m;
  std::condition_variable cv;
  ControllerFn fn;
  std::thread thread;
  bool controller_turn = false;
  bool started = false;
  bool finished = false;
  bool terminate = false;
  bool hung = false;
  bool reset_pending = false;
  std::string error;
  /// Set when a reset callback threw; reported by the engine.
  std::string reset_error;
};

namespace detail {

using scene::NodeId;

struct Frame {
  int parent = -1;
  Pose local;
  /// Index into the robot's servos when this frame turns with a joint.
  int servo = -1;
  Pose world;
};

enum class UnitKind : std::uint8_t { Static, Dynamic, Robot };

struct UnitBody {
  physics::Body body;
  int frame = 0;
  std::string label;
};

/// A rigid assembly moved as one: a static solid, a free dynamic solid, or a robot
/// with everything attached to it.
struct Unit {
  NodeId node = scene::kNoNode;
  std::string label;
  UnitKind kind = UnitKind::Static;
  bool alive = true;
  Pose pose;
  std::vector<Frame> frames;
  /// bodies[0] is the root body when has_root_body.
  std::vector<UnitBody> bodies;
  bool has_root_body = false;
  int robot = -1;
  std::size_t flat_begin = 0;
};

struct DeviceRuntime {
  std::string name;
  DeviceKind kind{};
  int frame = 0;
  devices::DistanceSensorSpec distance;
  std::optional<devices::LookupTable> light_table;
  physics::Shape footprint = physics::Circle{0.01};
  devices::CameraSpec camera;
  devices::EmitterSpec emitter;
  devices::ReceiverSpec receiver;
  int servo = -1;
  int encoder_side = -1;
  double encoder_resolution = 100.0;
  double encoder_offset = 0.0;

  /// Sensor snapshot taken when the owner's controller last resumed.
  std::vector<double> value;
  std::deque<devices::Message> inbox;
  int led_pending = 0;
  int led_state = 0;
};

struct ServoRuntime {
  std::string name;
  physics::ServoJoint joint;
  physics::ServoMode pending_mode = physics::ServoMode::Position;
  double pending_target = 0.0;
};

struct RobotRuntime {
  std::size_t unit = 0;
  NodeId node = scene::kNoNode;
  std::string name;
  std::string controller;
  bool alive = true;
  bool supervisor = false;
  bool differential = false;
  physics::DriveState drive;
  double pending_left = 0.0;
  double pending_right = 0.0;
  std::vector<DeviceRuntime> devices;
  std::size_t declared_devices = 0;
  std::vector<ServoRuntime> servos;

  std::int64_t blocked_until = 0;
  bool live = false;
  std::function<void()> reset_callback;
  /// No further turns: the program returned, failed, or hung.
  bool done = false;
  ControllerFn program;
  std::shared_ptr<Controller> api;
  std::shared_ptr<RemoteController> remote;
  std::vector<std::size_t> flat_bodies;
};

struct World {
  scene::SceneTree original;
  scene::SceneTree tree;
  LoadOptions options;
  std::uint64_t seed = 0;
  std::int64_t step_ms = 32;
  std::int64_t now_ms = 0;
  std::int64_t ticks = 0;

  std::vector<Unit> units;
  std::vector<RobotRuntime> robots;
  std::vector<devices::LightSource> lights;

  std::vector<physics::Body> flat;
  std::vector<std::string> flat_labels;
  std::vector<physics::Contact> contacts;

  std::vector<devices::Message> outbox;
  std::uint64_t next_sequence = 0;
  std::vector<std::function<void()>> pending;
  std::map<std::string, Trajectory, std::less<>> trajectories;
  std::vector<std::string> errors;

  std::vector<std::pair<std::size_t, Simulation::Listener>> tick_listeners;
  std::vector<std::pair<std::size_t, Simulation::Listener>> reset_listeners;
  std::size_t next_listener = 1;
};

/// Privileged access to the engine classes for the implementation files.
struct Access {
  static World& world(Simulation& sim) { return *sim.w_; }
  static const World& world(const Simulation& sim) { return *sim.w_; }
  static std::shared_ptr<Controller> make_controller(Simulation* sim, std::size_t robot) {
    return std::shared_ptr<Controller>(new Controller(sim, robot));
  }
  static Controller::Task* task(Controller& c) { return c.task_.get(); }
  static std::shared_ptr<Controller::Task>& task_ptr(Controller& c) { return c.task_; }
  static void set_turn(Controller& c, bool in_turn) {
    c.in_turn_ = in_turn;
    c.stepped_ = false;
  }
  static bool stepped(const Controller& c) { return c.stepped_; }
  static Supervisor make_supervisor(Simulation* sim, std::uint64_t order) { return Supervisor(sim, order); }
};

// build.cpp
/// Builds units, robots and lights for every root of w.tree.
void build_world(Simulation* sim, World& w);
/// Builds the simulation objects of one newly attached root.
void activate_root(Simulation* sim, World& w, NodeId root);
/// Throws LoadError for robots whose controller is neither registered nor extern.
void check_controllers(const World& w, const scene::SceneTree& tree, NodeId from_root = scene::kNoNode);
std::string node_label(const scene::SceneTree& tree, NodeId occurrence);

// step.cpp
void update_frames(World& w, Unit& unit);
void flatten(World& w);
void refresh_snapshot(World& w, std::size_t robot);
void zero_actuators(RobotRuntime& robot);
void physics_step(World& w);
void deliver_messages(World& w);
void record_trajectories(World& w);
Pose device_pose(const World& w, const RobotRuntime& robot, const DeviceRuntime& dev);
std::optional<std::size_t> find_unit(const World& w, std::string_view label);
void terminate_controller(RobotRuntime& robot, std::string_view reason);

// controller.cpp
/// Gives the robot's controller its turn; returns when it steps, finishes or hangs.
void run_turn(Simulation* sim, World& w, std::size_t robot);
/// Runs the reset callback on the controller's own thread.
void run_reset_callback(World& w, std::size_t robot);

}  // namespace detail
}  // namespace microsim::engine
