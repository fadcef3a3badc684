#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <future>
#include <set>
#include <thread>

#include "connection.hpp"
#include "json.hpp"
#include "microsim/wire.hpp"

namespace microsim::wire {

using json = nlohmann::json;
using engine::Controller;
using engine::Simulation;
using devices::DeviceKind;
using devices::DeviceTag;

namespace {

enum class Role : std::uint8_t { None, Controller, Supervisor, Observer };

const std::set<std::string, std::less<>> kControllerOps = {
    "get_device", "set_wheel_speeds", "servo_command", "led_set", "emitter_send", "encoder_reset", "read", "step"};
const std::set<std::string, std::less<>> kSupervisorOps = {
    "set_pose", "get_pose", "spawn", "remove", "track", "trajectory", "send", "pause", "resume", "step_once", "reset"};

struct WireError : std::runtime_error {
  WireError(std::string c, const std::string& detail) : std::runtime_error(detail), code(std::move(c)) {}
  std::string code;
};

json error_reply(const json& id, std::string_view code, std::string_view detail) {
  return {{"op", "error"}, {"id", id}, {"code", code}, {"detail", detail}};
}

json ok(const json& id) { return {{"op", "ok"}, {"id", id}}; }

// Must be called from a catch block.
json error_from_current(const json& id) {
  try {
    throw;
  } catch (const WireError& e) {
    return error_reply(id, e.code, e.what());
  } catch (const engine::PermissionError& e) {
    return error_reply(id, "permission", e.what());
  } catch (const engine::UnknownNode& e) {
    return error_reply(id, "unknown_node", e.what());
  } catch (const engine::UnknownDevice& e) {
    return error_reply(id, "unknown_device", e.what());
  } catch (const devices::WrongDeviceKind& e) {
    return error_reply(id, "wrong_device_kind", e.what());
  } catch (const devices::PayloadTooLarge& e) {
    return error_reply(id, "payload_too_large", e.what());
  } catch (const scene::ParseError& e) {
    return error_reply(id, "parse_error", e.what());
  } catch (const engine::LoadError& e) {
    return error_reply(id, "rejected", e.what());
  } catch (const engine::ControllerError& e) {
    return error_reply(id, "controller_error", e.what());
  } catch (const json::exception& e) {
    return error_reply(id, "malformed", e.what());
  } catch (const std::exception& e) {
    return error_reply(id, "rejected", e.what());
  }
}

const json& field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw WireError("malformed", std::string("missing field '") + key + "'");
  return *it;
}

double number(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number()) throw WireError("malformed", std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

double number_or(const json& j, const char* key, double fallback) {
  return j.contains(key) ? number(j, key) : fallback;
}

std::int64_t integer(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number_integer()) throw WireError("malformed", std::string("field '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

std::string text(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_string()) throw WireError("malformed", std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::uint8_t> payload(const json& j) {
  auto bytes = base64_decode(text(j, "payload"));
  if (!bytes) throw WireError("malformed", "payload is not base64");
  return *bytes;
}

json shape_json(const physics::Shape& shape) {
  return std::visit(
      [](const auto& s) -> json {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, physics::Circle>) {
          return {{"type", "circle"}, {"radius", s.radius}};
        } else if constexpr (std::is_same_v<S, physics::Rectangle>) {
          return {{"type", "box"}, {"width", s.width}, {"height", s.height}};
        } else {
          return {{"type", "segment"}, {"ax", s.a.x}, {"ay", s.a.y}, {"bx", s.b.x}, {"by", s.b.y}};
        }
      },
      shape);
}

json value_json(DeviceKind kind, const std::vector<double>& v) {
  if (kind == DeviceKind::Camera1D) return encode_doubles(v);
  if (v.size() == 1) return v[0];
  return v;
}

json state_json(const Simulation& sim) {
  const engine::StateSnapshot st = sim.state();
  json bodies = json::array();
  for (const auto& b : st.bodies) {
    bodies.push_back({{"node", b.node}, {"x", b.x}, {"y", b.y}, {"theta", b.theta}, {"shape", shape_json(b.shape)},
                      {"color", b.color}});
  }
  json devs = json::array();
  for (const auto& d : st.devices) {
    devs.push_back({{"robot", d.robot}, {"name", d.name}, {"kind", devices::to_string(d.kind)},
                    {"display_value", value_json(d.kind, d.value)}});
  }
  json leds = json::array();
  for (const auto& l : st.leds) leds.push_back({{"robot", l.robot}, {"name", l.name}, {"state", l.state}});
  return {{"op", "state"}, {"t_ms", st.t_ms}, {"bodies", bodies}, {"devices", devs}, {"leds", leds}};
}

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

class Session : public engine::RemoteController, public std::enable_shared_from_this<Session> {
 public:
  Session(Simulation& sim, int fd) : sim_(sim), conn_(fd) {}

  void start() {
    auto self = shared_from_this();
    writer_ = std::thread([self] { self->writer_main(); });
    reader_ = std::thread([self] { self->reader_main(); });
  }

  void join() {
    if (reader_.joinable()) reader_.join();
    if (writer_.joinable()) writer_.join();
  }

  bool finished() const { return finished_; }
  Role role() const { return role_; }

  void close() {
    closing_ = true;
    {
      std::lock_guard lk(m_);
      closed_ = true;
    }
    cv_.notify_all();
    {
      std::lock_guard lk(out_m_);
      out_closed_ = true;
    }
    out_cv_.notify_all();
    conn_.shutdown();
  }

  void send(const json& j) { push(false, dump(j)); }

  void push_state(const std::string& body) {
    {
      std::lock_guard lk(out_m_);
      if (out_closed_) return;
      std::size_t states = 0;
      for (const auto& o : out_) states += o.first ? 1 : 0;
      if (states >= kMaxPendingStates) {
        const auto oldest = std::find_if(out_.begin(), out_.end(), [](const auto& o) { return o.first; });
        out_.erase(oldest);
      }
      out_.emplace_back(true, body);
    }
    out_cv_.notify_one();
  }

  bool due(std::int64_t tick) const {
    const long every = every_;
    return role_ != Role::None && every > 0 && tick % every == 0;
  }

  bool run_turn(Controller& ctx) override {
    if (pending_step_) {
      send({{"op", "stepped"}, {"id", *pending_step_}, {"t_ms", ctx.time_ms()}});
      pending_step_.reset();
    }
    for (;;) {
      json req;
      {
        std::unique_lock lk(m_);
        cv_.wait(lk, [&] { return closed_ || !requests_.empty(); });
        if (requests_.empty()) return false;
        req = std::move(requests_.front());
        requests_.pop_front();
      }
      const json id = req.value("id", json());
      try {
        if (controller_op(ctx, req, id)) return true;
      } catch (...) {
        send(error_from_current(id));
      }
    }
  }

  void detached(std::string_view reason) override {
    role_ = Role::None;
    send({{"op", "detached"}, {"reason", reason}});
    {
      std::lock_guard lk(out_m_);
      out_closed_ = true;
    }
    out_cv_.notify_all();
  }

 private:
  void push(bool state, std::string body) {
    {
      std::lock_guard lk(out_m_);
      if (out_closed_) return;
      out_.emplace_back(state, std::move(body));
    }
    out_cv_.notify_one();
  }

  void writer_main() {
    for (;;) {
      std::string body;
      {
        std::unique_lock lk(out_m_);
        out_cv_.wait(lk, [&] { return out_closed_ || !out_.empty(); });
        if (out_.empty()) break;
        body = std::move(out_.front().second);
        out_.pop_front();
      }
      if (!conn_.send_message(body)) break;
    }
    // Flushed (or dead): wake the reader too.
    conn_.shutdown();
  }

  void reader_main() {
    while (auto msg = conn_.read_message()) handle(*msg);
    close();
    finished_ = true;
  }

  void handle(const std::string& line) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      send(error_reply(nullptr, "malformed", "not a JSON object"));
      return;
    }
    if (!j.is_object() || !j.contains("op") || !j["op"].is_string()) {
      send(error_reply(j.is_object() ? j.value("id", json()) : json(), "malformed", "missing 'op'"));
      return;
    }
    const json id = j.value("id", json());
    const std::string op = j["op"];
    if (role_ == Role::None) {
      if (op != "hello") {
        send(error_reply(id, "malformed", "the first message must be hello"));
        return;
      }
      try {
        hello(j, id);
      } catch (...) {
        send(error_from_current(id));
      }
      return;
    }
    if (op == "hello") {
      send(error_reply(id, "malformed", "hello already received"));
    } else if (kControllerOps.contains(op)) {
      if (role_ != Role::Controller) {
        send(error_reply(id, "permission", "'" + op + "' needs the controller role"));
        return;
      }
      {
        std::lock_guard lk(m_);
        requests_.push_back(std::move(j));
      }
      cv_.notify_all();
    } else if (kSupervisorOps.contains(op)) {
      if (role_ != Role::Supervisor) {
        send(error_reply(id, "permission", "'" + op + "' needs the supervisor role"));
        return;
      }
      auto self = shared_from_this();
      sim_.post([self, j = std::move(j), id](Simulation& sim) {
        json reply;
        try {
          reply = self->supervisor_op(sim, j, id);
        } catch (...) {
          reply = error_from_current(id);
        }
        self->send(reply);
      });
    } else if (op == "subscribe") {
      if (role_ == Role::Controller) {
        send(error_reply(id, "permission", "'subscribe' needs the supervisor or observer role"));
        return;
      }
      std::int64_t every = 1;
      if (j.contains("every_n_ticks")) {
        try {
          every = integer(j, "every_n_ticks");
          if (every < 0) throw WireError("malformed", "every_n_ticks must not be negative");
        } catch (...) {
          send(error_from_current(id));
          return;
        }
      }
      auto self = shared_from_this();
      sim_.post([self, every, id](Simulation&) {
        self->every_ = static_cast<long>(every);
        self->send(ok(id));
      });
    } else {
      send(error_reply(id, "unknown_op", "unknown op '" + op + "'"));
    }
  }

  void hello(const json& j, const json& id) {
    const std::string role = text(j, "role");
    if (j.contains("version") && j["version"] != kProtocolVersion) {
      throw WireError("rejected", "unsupported protocol version");
    }
    Role wanted;
    if (role == "controller") {
      wanted = Role::Controller;
    } else if (role == "supervisor") {
      wanted = Role::Supervisor;
    } else if (role == "observer") {
      wanted = Role::Observer;
    } else {
      throw WireError("malformed", "role must be controller, supervisor or observer");
    }
    const std::string robot = wanted == Role::Controller ? text(j, "robot") : std::string();

    auto done = std::make_shared<std::promise<void>>();
    auto future = done->get_future();
    auto self = shared_from_this();
    sim_.post([self, wanted, robot, id, done](Simulation& sim) {
      json welcome = {{"op", "welcome"},  {"id", id},
                      {"version", kProtocolVersion}, {"basic_step_ms", sim.basic_step_ms()},
                      {"t_ms", sim.now_ms()}};
      json devs = json::array();
      try {
        if (wanted == Role::Controller) {
          const auto r = sim.find_robot(robot);
          if (!r) throw WireError("rejected", "no robot named '" + robot + "'");
          try {
            sim.attach_remote(*r, self);
          } catch (const std::exception& e) {
            throw WireError("rejected", e.what());
          }
          welcome["role"] = "controller";
          welcome["robot"] = robot;
          for (const auto& [name, kind] : sim.device_list(*r)) devs.push_back({{"name", name}, {"kind", devices::to_string(kind)}});
        } else {
          welcome["role"] = wanted == Role::Supervisor ? "supervisor" : "observer";
          for (std::size_t r = 0; r < sim.robot_count(); ++r) {
            for (const auto& [name, kind] : sim.device_list(r)) {
              devs.push_back({{"robot", sim.robot_name(r)}, {"name", name}, {"kind", devices::to_string(kind)}});
            }
          }
        }
        welcome["devices"] = devs;
        self->role_ = wanted;
        self->send(welcome);
      } catch (...) {
        self->send(error_from_current(id));
      }
      done->set_value();
    });
    while (future.wait_for(std::chrono::milliseconds(50)) != std::future_status::ready) {
      if (closing_) return;
    }
  }

  // Runs on the engine thread during this robot's turn. True once the client stepped.
  bool controller_op(Controller& ctx, const json& j, const json& id) {
    const std::string op = j["op"];
    if (op == "step") {
      const std::int64_t ms = integer(j, "ms");
      try {
        ctx.step(ms);
      } catch (const engine::ControllerError& e) {
        throw WireError("bad_step", e.what());
      }
      pending_step_ = id;
      return true;
    }
    if (op == "set_wheel_speeds") {
      ctx.set_wheel_speeds(number(j, "left"), number(j, "right"));
      send(ok(id));
      return false;
    }
    const DeviceTag tag = ctx.get_device(text(j, op == "get_device" ? "name" : "device"));
    if (op == "get_device") {
      send({{"op", "device"}, {"id", id}, {"name", tag.name}, {"kind", devices::to_string(ctx.device_kind(tag))}});
    } else if (op == "servo_command") {
      const std::string mode = text(j, "mode");
      physics::ServoMode m;
      if (mode == "position") {
        m = physics::ServoMode::Position;
      } else if (mode == "velocity") {
        m = physics::ServoMode::Velocity;
      } else if (mode == "torque") {
        m = physics::ServoMode::Torque;
      } else {
        throw WireError("malformed", "mode must be position, velocity or torque");
      }
      ctx.servo_command(tag, m, number(j, "target"));
      send(ok(id));
    } else if (op == "led_set") {
      ctx.led_set(tag, static_cast<int>(integer(j, "state")));
      send(ok(id));
    } else if (op == "emitter_send") {
      ctx.emitter_send(tag, payload(j));
      send(ok(id));
    } else if (op == "encoder_reset") {
      ctx.encoder_reset(tag);
      send(ok(id));
    } else if (op == "read") {
      const DeviceKind kind = ctx.device_kind(tag);
      json reply = {{"op", "value"}, {"id", id}, {"device", tag.name}, {"t_ms", ctx.time_ms()}};
      if (kind == DeviceKind::Receiver) {
        json msgs = json::array();
        for (const auto& m : ctx.receiver_poll(tag)) {
          msgs.push_back({{"channel", m.channel}, {"payload", base64_encode(m.payload)}});
        }
        reply["value"] = msgs;
      } else if (kind == DeviceKind::Camera1D) {
        reply["value"] = encode_doubles(ctx.camera_get_image(tag));
      } else {
        reply["value"] = value_json(kind, ctx.read_values(tag));
      }
      send(reply);
    }
    return false;
  }

  json supervisor_op(Simulation& sim, const json& j, const json& id) {
    const std::string op = j["op"];
    engine::Supervisor sup = sim.supervisor();
    if (op == "set_pose") {
      sup.set_pose(text(j, "node"), {number(j, "x"), number(j, "y"), number_or(j, "theta", 0.0)});
      return ok(id);
    }
    if (op == "get_pose") {
      const std::string node = text(j, "node");
      const Pose p = sup.get_pose(node);
      return {{"op", "pose"}, {"id", id}, {"node", node}, {"x", p.x}, {"y", p.y}, {"theta", p.theta}};
    }
    if (op == "spawn") return {{"op", "spawned"}, {"id", id}, {"node", sup.spawn(text(j, "text"))}};
    if (op == "remove") {
      sup.remove(text(j, "node"));
      return ok(id);
    }
    if (op == "track") return {{"op", "tracking"}, {"id", id}, {"node", sup.track(text(j, "node"))}};
    if (op == "trajectory") {
      const std::string node = text(j, "node");
      const auto& all = sim.trajectories();
      const auto it = all.find(node);
      if (it == all.end()) throw engine::UnknownNode("node '" + node + "' is not tracked");
      json samples = json::array();
      for (const auto& s : it->second.samples) samples.push_back({s.t_ms, s.x, s.y, s.theta});
      return {{"op", "trajectory"}, {"id", id}, {"node", node}, {"samples", samples}};
    }
    if (op == "send") {
      sup.send(integer(j, "channel"), payload(j));
      return ok(id);
    }
    if (op == "pause") {
      sim.pause();
    } else if (op == "resume") {
      sim.resume();
    } else if (op == "step_once") {
      sim.step_once();
    } else if (op == "reset") {
      sim.reset();
    }
    return ok(id);
  }

  Simulation& sim_;
  Connection conn_;
  std::atomic<Role> role_{Role::None};
  std::atomic<long> every_{0};
  std::atomic<bool> closing_{false};
  std::atomic<bool> finished_{false};

  std::mutex m_;
  std::condition_variable cv_;
  std::deque<json> requests_;
  bool closed_ = false;
  // Engine thread only.
  std::optional<json> pending_step_;

  std::mutex out_m_;
  std::condition_variable out_cv_;
  std::deque<std::pair<bool, std::string>> out_;
  bool out_closed_ = false;

  std::thread reader_;
  std::thread writer_;
};

}  // namespace

struct Server::Impl {
  explicit Impl(Simulation& s) : sim(s) {}
  Simulation& sim;
  int listen_fd = -1;
  std::uint16_t port = 0;
  std::thread acceptor;
  std::mutex m;
  std::vector<std::shared_ptr<Session>> sessions;
  std::atomic<bool> stopping{false};

  std::vector<std::shared_ptr<Session>> snapshot() {
    std::lock_guard lk(m);
    return sessions;
  }

  void accept_loop() {
    for (;;) {
      const int fd = ::accept(listen_fd, nullptr, nullptr);
      if (fd < 0) {
        if (stopping) return;
        if (errno == EINTR || errno == ECONNABORTED) continue;
        return;
      }
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      auto session = std::make_shared<Session>(sim, fd);
      std::vector<std::shared_ptr<Session>> done;
      {
        std::lock_guard lk(m);
        if (stopping) {
          session->close();
          return;
        }
        std::erase_if(sessions, [&](const auto& s) {
          if (!s->finished()) return false;
          done.push_back(s);
          return true;
        });
        sessions.push_back(session);
      }
      for (auto& s : done) s->join();
      session->start();
    }
  }
};

Server::Server(Simulation& sim, const Endpoint& at) : impl_(std::make_shared<Impl>(sim)) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* found = nullptr;
  const std::string port = std::to_string(at.port);
  const int rc = ::getaddrinfo(at.host.empty() ? nullptr : at.host.c_str(), port.c_str(), &hints, &found);
  if (rc != 0) throw BindError("cannot resolve '" + at.host + "': " + ::gai_strerror(rc));
  std::string last = "no address";
  for (addrinfo* a = found; a; a = a->ai_next) {
    const int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 16) == 0) {
      impl_->listen_fd = fd;
      break;
    }
    last = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(found);
  if (impl_->listen_fd < 0) throw BindError("cannot listen on " + at.host + ":" + port + ": " + last);

  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(impl_->listen_fd, reinterpret_cast<sockaddr*>(&addr), &len);
  impl_->port = ntohs(addr.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port
                                                  : reinterpret_cast<sockaddr_in*>(&addr)->sin_port);

  std::weak_ptr<Impl> weak = impl_;
  sim.add_tick_listener([weak](const Simulation& s) {
    auto impl = weak.lock();
    if (!impl) return;
    std::vector<std::shared_ptr<Session>> due;
    for (auto& session : impl->snapshot()) {
      if (session->due(s.tick_count())) due.push_back(session);
    }
    if (due.empty()) return;
    const std::string body = dump(state_json(s));
    for (auto& session : due) session->push_state(body);
  });
  sim.add_reset_listener([weak](const Simulation& s) {
    auto impl = weak.lock();
    if (!impl) return;
    for (auto& session : impl->snapshot()) {
      if (session->role() != Role::None) session->send({{"op", "reset"}, {"t_ms", s.now_ms()}});
    }
  });
  impl_->acceptor = std::thread([impl = impl_.get()] { impl->accept_loop(); });
}

Server::~Server() { stop(); }

std::uint16_t Server::port() const { return impl_->port; }

void Server::stop() {
  if (impl_->stopping.exchange(true)) return;
  ::shutdown(impl_->listen_fd, SHUT_RDWR);
  if (impl_->acceptor.joinable()) impl_->acceptor.join();
  ::close(impl_->listen_fd);
  for (auto& s : impl_->snapshot()) s->close();
  for (auto& s : impl_->snapshot()) s->join();
}

}  // namespace microsim::wire
