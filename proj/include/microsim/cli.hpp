#pragma once

// simrun: load a world, run it, optionally serve it, record trajectories and dump frames.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "microsim/engine.hpp"
#include "microsim/wire.hpp"

namespace microsim::cli {

enum ExitCode : int { kExitOk = 0, kExitWorld = 1, kExitRuntime = 2 };

struct RunConfig {
  std::filesystem::path world;
  engine::RunMode mode = engine::RunMode::Realtime;
  std::optional<std::int64_t> duration_ms;
  std::optional<wire::Endpoint> listen;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> record;
  std::optional<std::filesystem::path> frames;
  std::optional<std::int64_t> every_ms;
};

/// Flag, then WorldInfo.randomSeed if written, then the environment value, then 0.
/// Throws std::invalid_argument on an unparsable environment value.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const scene::SceneTree& tree, const char* env);

/// `t_ms,node,x,y,theta`, rows ordered by time then node, 9 significant digits.
void write_trajectories(const std::map<std::string, engine::Trajectory, std::less<>>& tracks, std::ostream& out);

/// World-to-pixel mapping of a frame: y up, fixed scale.
struct FrameGeometry {
  double min_x = 0.0;
  double max_y = 0.0;
  double scale = 100.0;
  int width = 1;
  int height = 1;
};
/// Bounding box of all bodies plus a 10% margin on every side.
FrameGeometry frame_geometry(std::span<const physics::Body> bodies, double scale = 100.0);
/// Binary PPM (P6). Background black, bodies filled with their grey level in scene order.
std::string render_ppm(const engine::StateSnapshot& state, const FrameGeometry& g);
/// frame_%08d.ppm
std::string frame_name(std::int64_t tick);

/// The whole command line; diagnostics go to err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace microsim::cli
