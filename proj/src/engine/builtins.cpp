#include <cmath>
#include <optional>
#include <string>

#include "microsim/engine.hpp"

namespace microsim::engine {

namespace {

std::optional<DeviceTag> optional_device(Controller& c, std::string_view name) {
  for (const auto& [n, kind] : c.device_list()) {
    if (n == name) return c.get_device(name);
  }
  return std::nullopt;
}

std::vector<std::uint8_t> bytes(std::string_view s) { return {s.begin(), s.end()}; }

// The classic obstacle-stop loop: drive until the infra-red sensor reads above 100.
void obstacle_stop(Controller& c) {
  DeviceTag ir;
  c.live([&] { ir = c.get_device("ir"); });
  for (;;) {
    if (c.distance_sensor_get_value(ir) > 100) {
      c.set_wheel_speeds(0, 0);
    } else {
      c.set_wheel_speeds(10, 10);
    }
    c.step(64);
  }
}

void braitenberg(Controller& c) {
  DeviceTag left, right;
  std::optional<DeviceTag> inbox, radio;
  c.live([&] {
    left = c.get_device("left");
    right = c.get_device("right");
    inbox = optional_device(c, "inbox");
    radio = optional_device(c, "radio");
  });
  const std::int64_t dt = c.basic_step_ms();
  for (;;) {
    const double l = c.distance_sensor_get_value(left) / 1024.0;
    const double r = c.distance_sensor_get_value(right) / 1024.0;
    c.set_wheel_speeds(6.0 - 10.0 * r, 6.0 - 10.0 * l);
    if (inbox) c.receiver_poll(*inbox);
    if (radio && c.time_ms() % 512 == 0) c.emitter_send(*radio, bytes(c.robot_name()));
    c.step(dt);
  }
}

void light_follower(Controller& c) {
  DeviceTag left, right;
  c.live([&] {
    left = c.get_device("ls_left");
    right = c.get_device("ls_right");
  });
  const std::int64_t dt = c.basic_step_ms();
  for (;;) {
    const double l = c.light_sensor_get_value(left);
    const double r = c.light_sensor_get_value(right);
    const double turn = 6.0 * (l - r) / (l + r + 1.0);
    c.set_wheel_speeds(4.0 - turn, 4.0 + turn);
    c.step(dt);
  }
}

void servo_sweep(Controller& c) {
  DeviceTag shoulder, elbow;
  c.live([&] {
    shoulder = c.get_device("shoulder");
    elbow = c.get_device("elbow");
  });
  const std::int64_t dt = c.basic_step_ms();
  for (;;) {
    const double t = static_cast<double>(c.time_ms()) / 1000.0;
    c.servo_command(shoulder, physics::ServoMode::Position, 1.2 * std::sin(t));
    c.servo_command(elbow, physics::ServoMode::Velocity, (static_cast<long>(t) % 2 == 0) ? 1.0 : -1.0);
    c.step(dt);
  }
}

void radio_ping(Controller& c) {
  DeviceTag tx, rx;
  c.live([&] {
    tx = c.get_device("tx");
    rx = c.get_device("rx");
  });
  const bool pinger = c.robot_name() == "pinger";
  const std::int64_t dt = c.basic_step_ms();
  for (long n = 0;; ++n) {
    for (const auto& m : c.receiver_poll(rx)) {
      if (!pinger) {
        std::string reply = "pong ";
        reply.append(m.payload.begin(), m.payload.end());
        c.emitter_send(tx, bytes(reply));
      }
    }
    if (pinger && n % 4 == 0) c.emitter_send(tx, bytes("ping " + std::to_string(n / 4)));
    c.step(dt);
  }
}

void idle(Controller& c) {
  c.live();
  const std::int64_t dt = c.basic_step_ms();
  for (;;) c.step(dt);
}

void forward(Controller& c) {
  c.live();
  const std::int64_t dt = c.basic_step_ms();
  for (;;) {
    c.set_wheel_speeds(10, 10);
    c.step(dt);
  }
}

// Supervisor: puts the ball back every 2048 ms and tells everyone.
void ball_reset(Controller& c) {
  std::optional<DeviceTag> announce;
  c.live([&] { announce = optional_device(c, "announce"); });
  const std::int64_t dt = c.basic_step_ms();
  for (;;) {
    if (c.time_ms() > 0 && c.time_ms() % 2048 == 0) {
      c.supervisor().set_pose("BALL", {0.5, 0.0, 0.0});
      if (announce) c.emitter_send(*announce, bytes("reset"));
    }
    c.step(dt);
  }
}

void bumper(Controller& c) {
  DeviceTag front, alarm;
  c.live([&] {
    front = c.get_device("front");
    alarm = c.get_device("alarm");
  });
  const std::int64_t dt = c.basic_step_ms();
  int backing = 0;
  for (;;) {
    if (backing == 0 && c.touch_sensor_get_value(front) == 1) backing = 30;
    if (backing > 10) {
      c.set_wheel_speeds(-5, -5);
    } else if (backing > 0) {
      c.set_wheel_speeds(5, -5);
    } else {
      c.set_wheel_speeds(5, 5);
    }
    c.led_set(alarm, backing > 0 ? 1 : 0);
    if (backing > 0) --backing;
    c.step(dt);
  }
}

}  // namespace

const ControllerRegistry& builtin_controllers() {
  static const ControllerRegistry registry = {
      {"obstacle_stop", obstacle_stop}, {"braitenberg", braitenberg}, {"light_follower", light_follower},
      {"servo_sweep", servo_sweep},     {"radio_ping", radio_ping},   {"void", idle},
      {"forward", forward},             {"ball_reset", ball_reset},   {"bumper", bumper},
  };
  return registry;
}

}  // namespace microsim::engine
