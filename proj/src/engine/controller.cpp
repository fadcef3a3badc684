#include <cmath>
#include <string>

#include "world.hpp"

namespace microsim::engine {

using detail::Access;
using detail::DeviceRuntime;
using detail::RobotRuntime;
using detail::World;

namespace {

void task_main(std::shared_ptr<Controller::Task> task, std::shared_ptr<Controller> api) {
  {
    std::unique_lock lk(task->m);
    task->cv.wait(lk, [&] { return task->controller_turn || task->terminate; });
    if (task->terminate) {
      task->finished = true;
      task->controller_turn = false;
      task->cv.notify_all();
      return;
    }
  }
  std::string error;
  try {
    task->fn(*api);
  } catch (const ControllerTerminated&) {
  } catch (const std::exception& e) {
    error = e.what();
    if (error.empty()) error = "exception";
  } catch (...) {
    error = "unknown exception";
  }
  std::lock_guard lk(task->m);
  task->finished = true;
  task->error = std::move(error);
  task->controller_turn = false;
  task->cv.notify_all();
}

}  // namespace

std::unique_lock<std::mutex> Controller::enter() const {
  if (!task_) {
    if (!in_turn_) throw ControllerError("controller API used outside the controller's turn");
    return {};
  }
  std::unique_lock lk(task_->m);
  if (task_->terminate) throw ControllerTerminated{};
  if (!task_->controller_turn) throw ControllerError("controller API used outside the controller's turn");
  return lk;
}

void Controller::check_turn() const { (void)enter(); }

std::size_t Controller::device_index(const DeviceTag& tag, DeviceKind expected) const {
  const RobotRuntime& r = Access::world(*sim_).robots[robot_];
  if (tag.robot != robot_ || tag.index >= r.devices.size()) {
    throw UnknownDevice("device '" + tag.name + "' does not belong to robot '" + r.name + "'");
  }
  const DeviceRuntime& d = r.devices[tag.index];
  if (d.kind != expected) throw devices::WrongDeviceKind(d.name, d.kind, expected);
  return tag.index;
}

void Controller::live(std::function<void()> on_reset) {
  {
    auto lk = enter();
    RobotRuntime& r = Access::world(*sim_).robots[robot_];
    if (r.live) throw ControllerError("robot_live called twice");
    r.live = true;
    r.reset_callback = on_reset;
  }
  if (!on_reset) return;
  in_reset_callback_ = true;
  try {
    on_reset();
  } catch (...) {
    in_reset_callback_ = false;
    throw;
  }
  in_reset_callback_ = false;
}

DeviceTag Controller::get_device(std::string_view name) {
  auto lk = enter();
  const RobotRuntime& r = Access::world(*sim_).robots[robot_];
  for (std::size_t k = 0; k < r.devices.size(); ++k) {
    if (r.devices[k].name == name) {
      return DeviceTag{static_cast<std::uint32_t>(robot_), static_cast<std::uint32_t>(k), std::string(name)};
    }
  }
  throw UnknownDevice("robot '" + r.name + "' has no device '" + std::string(name) + "'");
}

void Controller::step(std::int64_t ms) {
  auto lk = enter();
  World& w = Access::world(*sim_);
  RobotRuntime& r = w.robots[robot_];
  if (in_reset_callback_) throw ControllerError("robot_step called from the reset callback");
  if (!r.live) throw ControllerError("robot_step called before robot_live");
  if (ms <= 0 || ms % w.step_ms != 0) {
    throw ControllerError("robot_step(" + std::to_string(ms) + "): not a positive multiple of the basic time step " +
                          std::to_string(w.step_ms));
  }
  r.blocked_until = w.now_ms + ms;
  stepped_ = true;
  if (!task_) return;

  Task& t = *task_;
  t.controller_turn = false;
  t.cv.notify_all();
  while (true) {
    t.cv.wait(lk, [&] { return t.controller_turn || t.terminate; });
    if (t.terminate) throw ControllerTerminated{};
    if (!t.reset_pending) break;
    t.reset_pending = false;
    auto callback = Access::world(*sim_).robots[robot_].reset_callback;
    lk.unlock();
    in_reset_callback_ = true;
    std::string failure;
    try {
      if (callback) callback();
    } catch (const ControllerTerminated&) {
      in_reset_callback_ = false;
      throw;
    } catch (const std::exception& e) {
      failure = e.what();
    }
    in_reset_callback_ = false;
    lk.lock();
    t.reset_error = failure;
    t.controller_turn = false;
    t.cv.notify_all();
  }
}

std::int64_t Controller::time_ms() const {
  check_turn();
  return Access::world(*sim_).now_ms;
}

std::int64_t Controller::basic_step_ms() const {
  check_turn();
  return Access::world(*sim_).step_ms;
}

const std::string& Controller::robot_name() const {
  check_turn();
  return Access::world(*sim_).robots[robot_].name;
}

bool Controller::is_supervisor() const {
  check_turn();
  return Access::world(*sim_).robots[robot_].supervisor;
}

Supervisor Controller::supervisor() {
  check_turn();
  if (!is_supervisor()) throw PermissionError("robot '" + robot_name() + "' is not a supervisor");
  return Access::make_supervisor(sim_, robot_);
}

DeviceKind Controller::device_kind(const DeviceTag& tag) const {
  check_turn();
  const RobotRuntime& r = Access::world(*sim_).robots[robot_];
  if (tag.robot != robot_ || tag.index >= r.devices.size()) throw UnknownDevice("unknown device '" + tag.name + "'");
  return r.devices[tag.index].kind;
}

std::vector<std::pair<std::string, DeviceKind>> Controller::device_list() const {
  check_turn();
  std::vector<std::pair<std::string, DeviceKind>> out;
  for (const DeviceRuntime& d : Access::world(*sim_).robots[robot_].devices) out.emplace_back(d.name, d.kind);
  return out;
}

namespace {

DeviceRuntime& device(Simulation* sim, std::size_t robot, std::size_t index) {
  return Access::world(*sim).robots[robot].devices[index];
}

}  // namespace

double Controller::distance_sensor_get_value(const DeviceTag& tag) {
  auto lk = enter();
  return device(sim_, robot_, device_index(tag, DeviceKind::DistanceSensor)).value.at(0);
}

double Controller::light_sensor_get_value(const DeviceTag& tag) {
  auto lk = enter();
  return device(sim_, robot_, device_index(tag, DeviceKind::LightSensor)).value.at(0);
}

int Controller::touch_sensor_get_value(const DeviceTag& tag) {
  auto lk = enter();
  return static_cast<int>(device(sim_, robot_, device_index(tag, DeviceKind::TouchSensor)).value.at(0));
}

Vec2 Controller::gps_get_position(const DeviceTag& tag) {
  auto lk = enter();
  const auto& v = device(sim_, robot_, device_index(tag, DeviceKind::GPS)).value;
  return {v.at(0), v.at(1)};
}

Vec2 Controller::compass_get_north(const DeviceTag& tag) {
  auto lk = enter();
  const auto& v = device(sim_, robot_, device_index(tag, DeviceKind::Compass)).value;
  return {v.at(0), v.at(1)};
}

double Controller::encoder_get_value(const DeviceTag& tag) {
  auto lk = enter();
  const DeviceRuntime& d = device(sim_, robot_, device_index(tag, DeviceKind::Encoder));
  return devices::encoder_read(d.value.at(0), d.encoder_resolution, d.encoder_offset);
}

void Controller::encoder_reset(const DeviceTag& tag) {
  auto lk = enter();
  DeviceRuntime& d = device(sim_, robot_, device_index(tag, DeviceKind::Encoder));
  d.encoder_offset = devices::encoder_read(d.value.at(0), d.encoder_resolution, 0.0);
}

std::vector<double> Controller::camera_get_image(const DeviceTag& tag) {
  auto lk = enter();
  return device(sim_, robot_, device_index(tag, DeviceKind::Camera1D)).value;
}

void Controller::emitter_send(const DeviceTag& tag, std::span<const std::uint8_t> payload) {
  auto lk = enter();
  World& w = Access::world(*sim_);
  RobotRuntime& r = w.robots[robot_];
  const DeviceRuntime& d = r.devices[device_index(tag, DeviceKind::Emitter)];
  devices::check_payload(payload);
  devices::Message m;
  m.channel = d.emitter.channel;
  m.payload.assign(payload.begin(), payload.end());
  m.emitter_pose = detail::device_pose(w, r, d);
  m.emitter = d.emitter;
  m.send_tick = w.ticks;
  m.sender_order = robot_;
  m.sequence = w.next_sequence++;
  m.sender_bodies = r.flat_bodies;
  w.outbox.push_back(std::move(m));
}

std::vector<devices::Message> Controller::receiver_poll(const DeviceTag& tag) {
  auto lk = enter();
  DeviceRuntime& d = device(sim_, robot_, device_index(tag, DeviceKind::Receiver));
  std::vector<devices::Message> out(std::make_move_iterator(d.inbox.begin()), std::make_move_iterator(d.inbox.end()));
  d.inbox.clear();
  return out;
}

void Controller::set_wheel_speeds(double left, double right) {
  auto lk = enter();
  RobotRuntime& r = Access::world(*sim_).robots[robot_];
  if (!r.differential) throw devices::WrongDeviceKind("robot '" + r.name + "' has no differential wheels");
  if (!std::isfinite(left) || !std::isfinite(right)) throw ControllerError("wheel speeds must be finite");
  r.pending_left = std::clamp(left, -r.drive.max_speed, r.drive.max_speed);
  r.pending_right = std::clamp(right, -r.drive.max_speed, r.drive.max_speed);
}

void Controller::servo_command(const DeviceTag& tag, physics::ServoMode mode, double target) {
  auto lk = enter();
  if (!std::isfinite(target)) throw ControllerError("servo target must be finite");
  RobotRuntime& r = Access::world(*sim_).robots[robot_];
  const DeviceRuntime& d = r.devices[device_index(tag, DeviceKind::Servo)];
  detail::ServoRuntime& s = r.servos[static_cast<std::size_t>(d.servo)];
  s.pending_mode = mode;
  s.pending_target = target;
}

double Controller::servo_get_position(const DeviceTag& tag) {
  auto lk = enter();
  RobotRuntime& r = Access::world(*sim_).robots[robot_];
  const DeviceRuntime& d = r.devices[device_index(tag, DeviceKind::Servo)];
  return r.servos[static_cast<std::size_t>(d.servo)].joint.angle;
}

void Controller::led_set(const DeviceTag& tag, int state) {
  auto lk = enter();
  device(sim_, robot_, device_index(tag, DeviceKind::LED)).led_pending = state;
}

int Controller::led_get(const DeviceTag& tag) {
  auto lk = enter();
  return device(sim_, robot_, device_index(tag, DeviceKind::LED)).led_pending;
}

std::vector<double> Controller::read_values(const DeviceTag& tag) {
  const DeviceKind kind = device_kind(tag);
  switch (kind) {
    case DeviceKind::Encoder:
      return {encoder_get_value(tag)};
    case DeviceKind::Servo:
      return {servo_get_position(tag)};
    case DeviceKind::LED:
      return {static_cast<double>(led_get(tag))};
    case DeviceKind::Emitter:
    case DeviceKind::Receiver:
      throw devices::WrongDeviceKind("device '" + tag.name + "' has no readable value");
    default: {
      auto lk = enter();
      return device(sim_, robot_, tag.index).value;
    }
  }
}

namespace detail {

namespace {

/// Hands the turn to the controller thread and waits for it to give it back.
/// Returns false if the budget ran out.
bool hand_over(Controller::Task& t, std::unique_lock<std::mutex>& lk, std::chrono::milliseconds budget) {
  t.controller_turn = true;
  t.cv.notify_all();
  return t.cv.wait_for(lk, budget, [&] { return !t.controller_turn; });
}

void declare_hung(World& w, RobotRuntime& r, Controller::Task& t) {
  t.terminate = true;
  t.hung = true;
  r.done = true;
  zero_actuators(r);
  w.errors.push_back("robot '" + r.name + "': controller exceeded its " +
                     std::to_string(w.options.hung_budget.count()) + " ms budget without calling step");
  if (t.thread.joinable()) t.thread.detach();
}

}  // namespace

void run_turn(Simulation* sim, World& w, std::size_t ridx) {
  RobotRuntime& r = w.robots[ridx];
  Controller& api = *r.api;
  if (r.remote) {
    Access::set_turn(api, true);
    bool ok = false;
    std::shared_ptr<RemoteController> remote = r.remote;
    try {
      ok = remote->run_turn(api);
    } catch (const std::exception& e) {
      w.errors.push_back("robot '" + r.name + "': " + e.what());
    }
    const bool stepped = Access::stepped(api);
    Access::set_turn(api, false);
    RobotRuntime& rr = w.robots[ridx];
    if (!ok || !stepped) {
      zero_actuators(rr);
      if (rr.remote == remote) {
        rr.remote.reset();
        remote->detached("disconnected");
      }
      rr.live = false;
    }
    return;
  }
  if (r.done || !r.program) return;

  auto& task_ptr = Access::task_ptr(api);
  if (!task_ptr) {
    task_ptr = std::make_shared<Controller::Task>();
    task_ptr->fn = r.program;
  }
  std::shared_ptr<Controller::Task> task = task_ptr;
  std::unique_lock lk(task->m);
  if (!task->started) {
    task->started = true;
    task->thread = std::thread(task_main, task, r.api);
  }
  if (!hand_over(*task, lk, w.options.hung_budget)) {
    declare_hung(w, w.robots[ridx], *task);
    return;
  }
  RobotRuntime& rr = w.robots[ridx];
  if (task->finished) {
    rr.done = true;
    if (!task->error.empty()) {
      zero_actuators(rr);
      w.errors.push_back("robot '" + rr.name + "': " + task->error);
    }
    lk.unlock();
    if (task->thread.joinable()) task->thread.join();
  }
  (void)sim;
}

void run_reset_callback(World& w, std::size_t ridx) {
  RobotRuntime& r = w.robots[ridx];
  if (!r.api || r.done || !r.live) return;
  auto task = Access::task_ptr(*r.api);
  if (!task || !task->started) return;
  std::unique_lock lk(task->m);
  if (task->finished || task->terminate) return;
  task->reset_pending = true;
  if (!hand_over(*task, lk, w.options.hung_budget)) {
    declare_hung(w, r, *task);
    return;
  }
  if (!task->reset_error.empty()) {
    w.errors.push_back("robot '" + r.name + "': reset callback: " + task->reset_error);
    task->reset_error.clear();
  }
}

}  // namespace detail
}  // namespace microsim::engine
