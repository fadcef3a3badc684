#include <bit>
#include <fstream>
#include <sstream>
#include <thread>

#include "world.hpp"

namespace microsim::engine {

using detail::Access;
using detail::RobotRuntime;
using detail::Unit;
using detail::World;

std::optional<RunMode> parse_run_mode(std::string_view text) {
  if (text == "realtime") return RunMode::Realtime;
  if (text == "fast") return RunMode::Fast;
  if (text == "step") return RunMode::Step;
  return std::nullopt;
}

std::string_view to_string(RunMode mode) {
  switch (mode) {
    case RunMode::Realtime: return "realtime";
    case RunMode::Fast: return "fast";
    case RunMode::Step: return "step";
  }
  return "?";
}

LoadError::LoadError(const std::string& what, std::vector<std::string> details)
    : std::runtime_error(what), details_(std::move(details)) {}

Simulation::Simulation(const scene::SceneTree& tree, LoadOptions options) : w_(std::make_unique<World>()) {
  std::vector<std::string> problems;
  for (const auto& d : scene::validate(tree)) {
    std::string where;
    if (d.location.line > 0) where = std::to_string(d.location.line) + ":" + std::to_string(d.location.column) + ": ";
    problems.push_back(where + d.message);
  }
  if (!problems.empty()) throw LoadError("world does not validate: " + problems.front(), problems);

  World& w = *w_;
  w.options = std::move(options);
  w.original = tree;
  w.tree = tree;
  std::int64_t world_seed = 0;
  for (scene::NodeId r : tree.roots()) {
    const scene::Node& n = tree.node(tree.resolve(r));
    if (n.type == scene::NodeType::WorldInfo) {
      w.step_ms = n.get_int("basicTimeStep");
      world_seed = n.get_int("randomSeed");
    }
  }
  w.seed = w.options.seed ? *w.options.seed : static_cast<std::uint64_t>(world_seed);
  detail::check_controllers(w, tree);
  detail::build_world(this, w);
}

Simulation::~Simulation() {
  for (RobotRuntime& r : w_->robots) detail::terminate_controller(r, "shutdown");
}

std::unique_ptr<Simulation> Simulation::load_file(const std::filesystem::path& path, LoadOptions options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open world file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  scene::SceneTree tree;
  try {
    tree = scene::parse_world(text.str());
  } catch (const scene::ParseError& e) {
    throw LoadError(path.string() + ":" + e.what());
  }
  try {
    return std::make_unique<Simulation>(tree, std::move(options));
  } catch (const LoadError& e) {
    std::vector<std::string> details;
    for (const auto& d : e.details()) details.push_back(path.string() + ":" + d);
    throw LoadError(path.string() + ": " + e.what(), details);
  }
}

std::int64_t Simulation::now_ms() const { return w_->now_ms; }
std::int64_t Simulation::basic_step_ms() const { return w_->step_ms; }
std::int64_t Simulation::tick_count() const { return w_->ticks; }
std::uint64_t Simulation::seed() const { return w_->seed; }

bool Simulation::drain_commands() {
  std::deque<std::function<void(Simulation&)>> batch;
  {
    std::lock_guard lk(queue_mutex_);
    batch.swap(queue_);
  }
  draining_ = true;
  for (auto& command : batch) {
    try {
      command(*this);
    } catch (const std::exception& e) {
      w_->errors.push_back(std::string("command failed: ") + e.what());
    }
  }
  draining_ = false;
  if (reset_deferred_) {
    // A reset requested by a command replaces the rest of this tick.
    reset_deferred_ = false;
    reset();
    return true;
  }
  apply_pending();
  return false;
}

void Simulation::apply_pending() {
  World& w = *w_;
  if (w.pending.empty()) return;
  auto ops = std::move(w.pending);
  w.pending.clear();
  for (auto& op : ops) op();
  detail::flatten(w);
}

void Simulation::tick() {
  World& w = *w_;
  if (drain_commands()) return;
  for (std::size_t r = 0; r < w.robots.size(); ++r) {
    RobotRuntime& robot = w.robots[r];
    if (!robot.alive) continue;
    if (!robot.remote && (robot.done || !robot.program)) continue;
    if (w.now_ms < robot.blocked_until) continue;
    detail::refresh_snapshot(w, r);
    detail::run_turn(this, w, r);
  }
  detail::physics_step(w);
  detail::deliver_messages(w);
  detail::record_trajectories(w);
  w.now_ms += w.step_ms;
  ++w.ticks;
  const auto listeners = w.tick_listeners;
  for (const auto& [id, fn] : listeners) fn(*this);
}

void Simulation::run(RunMode mode, std::optional<std::int64_t> until_ms) {
  {
    std::lock_guard lk(queue_mutex_);
    paused_ = mode == RunMode::Step;
  }
  using clock = std::chrono::steady_clock;
  auto wall0 = clock::now();
  std::int64_t virt0 = w_->now_ms;
  while (!until_ms || w_->now_ms < *until_ms) {
    bool waited = false;
    {
      std::unique_lock lk(queue_mutex_);
      while (true) {
        // Steps already asked for still run.
        if (stop_ && !(paused_ && step_requests_ > 0)) {
          stop_ = false;
          lk.unlock();
          drain_commands();
          return;
        }
        if (!queue_.empty()) {
          lk.unlock();
          drain_commands();
          lk.lock();
          continue;
        }
        if (!paused_) break;
        if (step_requests_ > 0) {
          --step_requests_;
          break;
        }
        waited = true;
        queue_cv_.wait(lk);
      }
    }
    if (waited) {
      wall0 = clock::now();
      virt0 = w_->now_ms;
    }
    tick();
    if (mode == RunMode::Realtime && !paused()) {
      std::this_thread::sleep_until(wall0 + std::chrono::milliseconds(w_->now_ms - virt0));
    }
  }
}

void Simulation::reset() {
  if (draining_) {
    reset_deferred_ = true;
    return;
  }
  World& w = *w_;
  std::vector<RobotRuntime> old = std::move(w.robots);
  w.robots.clear();
  w.tree = w.original;
  w.now_ms = 0;
  w.ticks = 0;
  w.outbox.clear();
  w.pending.clear();
  w.contacts.clear();
  w.next_sequence = 0;
  for (auto& [label, traj] : w.trajectories) traj.samples.clear();
  detail::build_world(this, w);

  std::vector<std::size_t> carried;
  for (std::size_t i = 0; i < w.robots.size() && i < old.size(); ++i) {
    RobotRuntime& o = old[i];
    RobotRuntime& n = w.robots[i];
    if (!o.alive || o.node != n.node) continue;
    n.api = std::move(o.api);
    n.remote = std::move(o.remote);
    n.live = o.live;
    n.reset_callback = std::move(o.reset_callback);
    n.done = o.done;
    n.program = std::move(o.program);
    carried.push_back(i);
  }
  for (RobotRuntime& o : old) detail::terminate_controller(o, "reset");
  for (std::size_t i : carried) detail::run_reset_callback(w, i);
  const auto listeners = w.reset_listeners;
  for (const auto& [id, fn] : listeners) fn(*this);
}

void Simulation::post(std::function<void(Simulation&)> command) {
  {
    std::lock_guard lk(queue_mutex_);
    queue_.push_back(std::move(command));
  }
  queue_cv_.notify_all();
}

void Simulation::pause() {
  std::lock_guard lk(queue_mutex_);
  paused_ = true;
}

void Simulation::resume() {
  {
    std::lock_guard lk(queue_mutex_);
    paused_ = false;
    step_requests_ = 0;
  }
  queue_cv_.notify_all();
}

void Simulation::step_once() {
  {
    std::lock_guard lk(queue_mutex_);
    ++step_requests_;
  }
  queue_cv_.notify_all();
}

void Simulation::request_stop() {
  {
    std::lock_guard lk(queue_mutex_);
    stop_ = true;
  }
  queue_cv_.notify_all();
}

bool Simulation::paused() const {
  std::lock_guard lk(queue_mutex_);
  return paused_;
}

std::size_t Simulation::robot_count() const {
  std::size_t n = 0;
  for (const RobotRuntime& r : w_->robots) n += r.alive;
  return n;
}

std::size_t Simulation::device_count(std::size_t robot) const { return w_->robots.at(robot).declared_devices; }

std::optional<std::size_t> Simulation::find_robot(std::string_view name) const {
  for (std::size_t k = 0; k < w_->robots.size(); ++k) {
    if (w_->robots[k].alive && w_->robots[k].name == name) return k;
  }
  return std::nullopt;
}

std::vector<std::pair<std::string, DeviceKind>> Simulation::device_list(std::size_t robot) const {
  std::vector<std::pair<std::string, DeviceKind>> out;
  for (const auto& d : w_->robots.at(robot).devices) out.emplace_back(d.name, d.kind);
  return out;
}

std::string Simulation::robot_name(std::size_t robot) const { return w_->robots.at(robot).name; }

std::pair<double, double> Simulation::wheel_speeds(std::size_t robot) const {
  const auto& d = w_->robots.at(robot).drive;
  return {d.wheel_speed_left, d.wheel_speed_right};
}

Controller& Simulation::controller(std::size_t robot) { return *w_->robots.at(robot).api; }

std::span<const physics::Body> Simulation::bodies() const { return w_->flat; }
std::span<const std::string> Simulation::body_labels() const { return w_->flat_labels; }

StateSnapshot Simulation::state() const {
  const World& w = *w_;
  StateSnapshot s;
  s.t_ms = w.now_ms;
  for (std::size_t k = 0; k < w.flat.size(); ++k) {
    const auto& b = w.flat[k];
    s.bodies.push_back({w.flat_labels[k], b.pose.x, b.pose.y, b.pose.theta, b.shape, b.color});
  }
  for (const RobotRuntime& r : w.robots) {
    if (!r.alive) continue;
    for (const auto& d : r.devices) {
      if (d.kind == DeviceKind::LED) {
        s.leds.push_back({r.name, d.name, d.led_state});
        continue;
      }
      if (d.kind == DeviceKind::Emitter || d.kind == DeviceKind::Receiver) continue;
      std::vector<double> v = d.value;
      if (d.kind == DeviceKind::Encoder && !v.empty()) {
        v[0] = devices::encoder_read(v[0], d.encoder_resolution, d.encoder_offset);
      }
      s.devices.push_back({r.name, d.name, d.kind, std::move(v)});
    }
  }
  return s;
}

namespace {

struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) {
      h ^= (v >> (8 * k)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  void num(double d) { bytes(std::bit_cast<std::uint64_t>(d)); }
  void integer(std::int64_t i) { bytes(static_cast<std::uint64_t>(i)); }
};

}  // namespace

std::uint64_t Simulation::digest() const {
  const World& w = *w_;
  Fnv f;
  f.integer(w.now_ms);
  f.integer(w.ticks);
  for (const auto& b : w.flat) {
    f.num(b.pose.x);
    f.num(b.pose.y);
    f.num(b.pose.theta);
    f.num(b.velocity.vx);
    f.num(b.velocity.vy);
    f.num(b.velocity.omega);
  }
  for (const RobotRuntime& r : w.robots) {
    f.integer(r.alive);
    if (!r.alive) continue;
    const Unit& u = w.units[r.unit];
    f.num(u.pose.x);
    f.num(u.pose.y);
    f.num(u.pose.theta);
    f.num(r.drive.wheel_speed_left);
    f.num(r.drive.wheel_speed_right);
    f.num(r.drive.wheel_angle_left);
    f.num(r.drive.wheel_angle_right);
    f.integer(r.blocked_until);
    for (const auto& s : r.servos) {
      f.num(s.joint.angle);
      f.num(s.joint.angular_velocity);
      f.num(s.joint.target);
      f.integer(static_cast<std::int64_t>(s.joint.mode));
    }
    for (const auto& d : r.devices) {
      for (double v : d.value) f.num(v);
      f.integer(d.led_state);
      f.integer(static_cast<std::int64_t>(d.inbox.size()));
      for (const auto& m : d.inbox) {
        for (std::uint8_t byte : m.payload) f.integer(byte);
      }
    }
  }
  return f.h;
}

const std::vector<std::string>& Simulation::errors() const { return w_->errors; }

const std::map<std::string, Trajectory, std::less<>>& Simulation::trajectories() const { return w_->trajectories; }

const scene::SceneTree& Simulation::world() const { return w_->tree; }

Supervisor Simulation::supervisor() { return Supervisor(this, std::numeric_limits<std::uint64_t>::max()); }

void Simulation::attach_remote(std::size_t robot, std::shared_ptr<RemoteController> remote) {
  RobotRuntime& r = w_->robots.at(robot);
  if (!r.alive) throw UnknownNode("robot '" + r.name + "' was removed");
  if (r.controller != kExternController) {
    throw ControllerError("robot '" + r.name + "' runs the in-process controller '" + r.controller + "'");
  }
  if (r.remote) throw ControllerError("robot '" + r.name + "' already has a controller session");
  r.remote = std::move(remote);
  r.live = true;
  r.blocked_until = w_->now_ms;
}

void Simulation::detach_remote(std::size_t robot) {
  RobotRuntime& r = w_->robots.at(robot);
  if (!r.remote) return;
  r.remote.reset();
  r.live = false;
  detail::zero_actuators(r);
}

std::size_t Simulation::add_tick_listener(Listener fn) {
  const std::size_t id = w_->next_listener++;
  w_->tick_listeners.emplace_back(id, std::move(fn));
  return id;
}

std::size_t Simulation::add_reset_listener(Listener fn) {
  const std::size_t id = w_->next_listener++;
  w_->reset_listeners.emplace_back(id, std::move(fn));
  return id;
}

void Simulation::remove_listener(std::size_t id) {
  std::erase_if(w_->tick_listeners, [&](const auto& p) { return p.first == id; });
  std::erase_if(w_->reset_listeners, [&](const auto& p) { return p.first == id; });
}

// ---------------------------------------------------------------------------
// Supervisor

namespace {

std::size_t require_unit(const World& w, std::string_view node) {
  const auto u = detail::find_unit(w, node);
  if (!u) throw UnknownNode("unknown node '" + std::string(node) + "'");
  return *u;
}

bool erase_occurrence(scene::SceneTree& tree, scene::NodeId id) {
  auto& roots = tree.roots();
  if (auto it = std::find(roots.begin(), roots.end(), id); it != roots.end()) {
    roots.erase(it);
    return true;
  }
  for (scene::NodeId n = 0; n < tree.size(); ++n) {
    scene::Node& node = tree.node(n);
    if (node.is_use() || scene::node_spec(node.type).field_index("children") < 0) continue;
    auto kids = node.get_nodes("children");
    if (auto it = std::find(kids.begin(), kids.end(), id); it != kids.end()) {
      kids.erase(it);
      node.set("children", scene::NodeList{kids});
      return true;
    }
  }
  return false;
}

}  // namespace

void Supervisor::set_pose(std::string_view node, const Pose& pose) {
  World& w = Access::world(*sim_);
  const std::size_t u = require_unit(w, node);
  w.pending.push_back([&w, u, pose] {
    Unit& unit = w.units[u];
    if (!unit.alive) return;
    unit.pose = pose;
    if (unit.has_root_body) unit.bodies[0].body.velocity = {};
    detail::update_frames(w, unit);
  });
}

Pose Supervisor::get_pose(std::string_view node) const {
  const World& w = Access::world(*sim_);
  if (const auto u = detail::find_unit(w, node)) return w.units[*u].pose;
  for (std::size_t k = 0; k < w.flat_labels.size(); ++k) {
    if (w.flat_labels[k] == node) return w.flat[k].pose;
  }
  throw UnknownNode("unknown node '" + std::string(node) + "'");
}

std::string Supervisor::spawn(std::string_view fragment) {
  World& w = Access::world(*sim_);
  scene::SceneTree copy = w.tree;
  const scene::NodeId id = scene::parse_fragment_into(copy, fragment);
  const auto diags = scene::validate(copy);
  if (!diags.empty()) throw LoadError("spawned node does not validate: " + diags.front().message);
  detail::check_controllers(w, copy, id);
  w.tree = std::move(copy);
  Simulation* sim = sim_;
  w.pending.push_back([sim, &w, id] { detail::activate_root(sim, w, id); });
  return detail::node_label(w.tree, id);
}

void Supervisor::remove(std::string_view node) {
  World& w = Access::world(*sim_);
  const std::size_t u = require_unit(w, node);
  w.pending.push_back([&w, u] {
    Unit& unit = w.units[u];
    if (!unit.alive) return;
    unit.alive = false;
    if (unit.robot >= 0) {
      RobotRuntime& r = w.robots[static_cast<std::size_t>(unit.robot)];
      r.alive = false;
      detail::terminate_controller(r, "removed");
      std::erase_if(w.outbox, [&](const devices::Message& m) { return m.sender_order == static_cast<std::uint64_t>(unit.robot); });
    }
    erase_occurrence(w.tree, unit.node);
  });
}

std::string Supervisor::track(std::string_view node) {
  World& w = Access::world(*sim_);
  const std::string label = w.units[require_unit(w, node)].label;
  w.trajectories.try_emplace(label, Trajectory{label, {}});
  return label;
}

void Supervisor::send(std::int64_t channel, std::span<const std::uint8_t> payload) {
  World& w = Access::world(*sim_);
  devices::check_payload(payload);
  devices::Message m;
  m.channel = channel;
  m.payload.assign(payload.begin(), payload.end());
  m.send_tick = w.ticks;
  m.sender_order = sender_order_;
  m.sequence = w.next_sequence++;
  w.outbox.push_back(std::move(m));
}

}  // namespace microsim::engine
