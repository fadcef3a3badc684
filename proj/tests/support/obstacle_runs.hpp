#pragma once

// The obstacle-stop scenario run in-process and over the wire, for
// comparing the two.

#include <fstream>
#include <sstream>
#include <thread>

#include "microsim/engine.hpp"
#include "microsim/wire.hpp"
#include "wire_client.hpp"

namespace obstacle {

using namespace microsim;

inline constexpr int kTicks = 100;
/// The wall is moved away after this many ticks.
inline constexpr int kMoveAfter = 60;

struct Run {
  std::vector<std::uint64_t> digests;
  /// Robot x after every tick.
  std::vector<double> x;
  /// ir reading seen by the controller at t = 64·k.
  std::vector<double> reads;
  std::vector<std::pair<double, double>> speeds;
};

inline std::string world_text(bool remote) {
  std::ifstream in(std::string(MICROSIM_WORLDS_DIR) + "/obstacle_stop.mwt");
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  if (remote) {
    const std::string from = "controller \"obstacle_stop\"";
    text.replace(text.find(from), from.size(), "controller \"<extern>\"");
  }
  return text;
}

inline void watch(engine::Simulation& sim, Run& run) {
  sim.add_tick_listener([&run](const engine::Simulation& s) {
    run.digests.push_back(s.digest());
    run.x.push_back(const_cast<engine::Simulation&>(s).supervisor().get_pose("ROBOT").x);
    run.speeds.push_back(s.wheel_speeds(0));
    if (s.tick_count() == kMoveAfter) const_cast<engine::Simulation&>(s).supervisor().set_pose("WALL", {3.0, 0.0, 0.0});
  });
}

inline Run in_process() {
  Run run;
  engine::Simulation sim(scene::parse_world(world_text(false)));
  watch(sim, run);
  // Record what the controller reads: the snapshot refreshed at its resume ticks.
  sim.add_tick_listener([&run](const engine::Simulation& s) {
    if ((s.tick_count() - 1) % 2 == 0) run.reads.push_back(s.state().devices.at(0).value.at(0));
  });
  sim.run(engine::RunMode::Fast, kTicks * 32);
  return run;
}

/// The same loop as a wire client: read ir, set speeds, step 64.
/// `transcript` collects the replies; `wire_log` both directions as "> " / "< " lines.
inline Run over_wire(std::vector<testwire::json>* transcript = nullptr, std::vector<std::string>* wire_log = nullptr) {
  Run run;
  engine::Simulation sim(scene::parse_world(world_text(true)));
  watch(sim, run);
  wire::Server server(sim, {"127.0.0.1", 0});
  std::thread engine_thread([&] { sim.run(engine::RunMode::Step, kTicks * 32); });

  testwire::Client c(server.port());
  auto got = [&](const testwire::json& j) {
    if (transcript) transcript->push_back(j);
    if (wire_log) wire_log->push_back("< " + j.dump());
    return j;
  };
  auto send = [&](const testwire::json& j) {
    if (wire_log) wire_log->push_back("> " + j.dump());
    c.send(j);
  };
  auto request = [&](const testwire::json& j) {
    send(j);
    return got(c.reply());
  };
  request({{"op", "hello"}, {"role", "controller"}, {"robot", "robot1"}, {"version", 1}});
  sim.resume();
  request({{"op", "get_device"}, {"id", 1}, {"name", "ir"}});
  std::int64_t t = 0;
  int id = 2;
  for (;;) {
    const auto v = request({{"op", "read"}, {"id", id++}, {"device", "ir"}});
    const double value = v.at("value").get<double>();
    run.reads.push_back(value);
    if (value > 100) {
      request({{"op", "set_wheel_speeds"}, {"id", id++}, {"left", 0}, {"right", 0}});
    } else {
      request({{"op", "set_wheel_speeds"}, {"id", id++}, {"left", 10}, {"right", 10}});
    }
    send({{"op", "step"}, {"id", id++}, {"ms", 64}});
    if (t + 64 >= kTicks * 32) break;
    const auto stepped = got(c.reply());
    t = stepped.at("t_ms").get<std::int64_t>();
  }
  engine_thread.join();
  server.stop();
  return run;
}

}  // namespace obstacle
