#include <signal.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "microsim/cli.hpp"

namespace microsim::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool multiple_of(std::int64_t ms, std::int64_t step) { return ms > 0 && ms % step == 0; }

// Waits for SIGINT/SIGTERM on its own thread and stops the run.
class SignalWatch {
 public:
  SignalWatch() {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, &old_);
  }
  ~SignalWatch() {
    done_ = true;
    if (thread_.joinable()) thread_.join();
    pthread_sigmask(SIG_SETMASK, &old_, nullptr);
  }
  template <typename F>
  void start(F on_signal) {
    thread_ = std::thread([this, on_signal] {
      const timespec wait{0, 100'000'000};
      while (!done_) {
        if (sigtimedwait(&set_, nullptr, &wait) > 0) {
          on_signal();
          return;
        }
      }
    });
  }

 private:
  sigset_t set_{};
  sigset_t old_{};
  std::atomic<bool> done_{false};
  std::thread thread_;
};

RunConfig parse_args(int argc, const char* const* argv, std::ostream& out, bool& help) {
  CLI::App app{"Run a microsim world.", "simrun"};
  RunConfig cfg;
  std::string world, mode = "realtime", listen, record, frames;
  app.add_option("world", world, "World file (.mwt)")->required();
  app.add_option("--mode", mode, "realtime, fast or step")->check(CLI::IsMember({"realtime", "fast", "step"}));
  app.add_option("--duration", cfg.duration_ms, "Virtual milliseconds to run (multiple of the basic time step)");
  app.add_option("--listen", listen, "Serve the wire protocol on HOST:PORT");
  app.add_option("--seed", cfg.seed, "Random seed (overrides the world file and MICROSIM_SEED)");
  app.add_option("--record", record, "Write tracked trajectories to this CSV file");
  auto* frames_opt = app.add_option("--frames", frames, "Write PPM frames into this directory");
  auto* every_opt = app.add_option("--every", cfg.every_ms, "Frame interval in virtual milliseconds");
  frames_opt->needs(every_opt);
  every_opt->needs(frames_opt);
  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    help = true;
    return cfg;
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }
  cfg.world = world;
  cfg.mode = *engine::parse_run_mode(mode);
  if (!listen.empty()) {
    cfg.listen = wire::parse_endpoint(listen);
    if (!cfg.listen) throw UsageError("--listen expects HOST:PORT, got '" + listen + "'");
  }
  if (!record.empty()) cfg.record = record;
  if (!frames.empty()) cfg.frames = frames;
  return cfg;
}

void track_everything(engine::Simulation& sim) {
  auto sup = sim.supervisor();
  for (std::size_t r = 0; r < sim.robot_count(); ++r) sup.track(sim.robot_name(r));
  const scene::SceneTree& tree = sim.world();
  for (scene::NodeId id : tree.roots()) {
    const scene::Node& n = tree.node(id);
    if (n.def_name.empty() || n.is_use()) continue;
    try {
      sup.track(n.def_name);
    } catch (const engine::UnknownNode&) {
      // Not a placed object (a Transform group, WorldInfo, ...).
    }
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  bool help = false;
  try {
    cfg = parse_args(argc, argv, out, help);
  } catch (const UsageError& e) {
    err << "simrun: " << e.what() << "\n";
    return kExitWorld;
  }
  if (help) return kExitOk;

  std::ifstream in(cfg.world, std::ios::binary);
  if (!in) {
    err << "simrun: cannot open world file '" << cfg.world.string() << "'\n";
    return kExitWorld;
  }
  std::stringstream text;
  text << in.rdbuf();

  std::unique_ptr<engine::Simulation> sim;
  try {
    const scene::SceneTree tree = scene::parse_world(text.str());
    engine::LoadOptions options;
    options.seed = resolve_seed(cfg.seed, tree, std::getenv("MICROSIM_SEED"));
    sim = std::make_unique<engine::Simulation>(tree, std::move(options));
  } catch (const scene::ParseError& e) {
    err << cfg.world.string() << ":" << e.what() << "\n";
    return kExitWorld;
  } catch (const engine::LoadError& e) {
    err << cfg.world.string() << ": " << e.what() << "\n";
    for (std::size_t k = 1; k < e.details().size(); ++k) err << cfg.world.string() << ": " << e.details()[k] << "\n";
    return kExitWorld;
  } catch (const std::invalid_argument& e) {
    err << "simrun: " << e.what() << "\n";
    return kExitWorld;
  }

  const std::int64_t step = sim->basic_step_ms();
  if (cfg.duration_ms && !multiple_of(*cfg.duration_ms, step)) {
    err << "simrun: --duration " << *cfg.duration_ms << " is not a positive multiple of the basic time step " << step
        << " ms\n";
    return kExitWorld;
  }
  if (cfg.every_ms && !multiple_of(*cfg.every_ms, step)) {
    err << "simrun: --every " << *cfg.every_ms << " is not a positive multiple of the basic time step " << step << " ms\n";
    return kExitWorld;
  }

  SignalWatch signals;
  std::unique_ptr<wire::Server> server;
  if (cfg.listen) {
    try {
      server = std::make_unique<wire::Server>(*sim, *cfg.listen);
    } catch (const wire::BindError& e) {
      err << "simrun: " << e.what() << "\n";
      return kExitRuntime;
    }
    err << "simrun: listening on " << cfg.listen->host << ":" << server->port() << "\n";
  }
  signals.start([&sim, &server] {
    if (server) server->stop();
    sim->request_stop();
  });

  if (cfg.record) track_everything(*sim);

  std::string io_error;
  if (cfg.frames) {
    std::error_code ec;
    std::filesystem::create_directories(*cfg.frames, ec);
    const FrameGeometry g = frame_geometry(sim->bodies());
    const auto dump = [&io_error, dir = *cfg.frames, g](const engine::Simulation& s) {
      const std::filesystem::path path = dir / frame_name(s.tick_count());
      std::ofstream f(path, std::ios::binary);
      f << render_ppm(s.state(), g);
      if (!f) io_error = "cannot write frame '" + path.string() + "'";
      return f.good();
    };
    if (!dump(*sim)) {
      err << "simrun: " << io_error << "\n";
      return kExitRuntime;
    }
    const std::int64_t every = *cfg.every_ms;
    sim->add_tick_listener([dump, every, &io_error](const engine::Simulation& s) {
      if (io_error.empty() && s.now_ms() % every == 0 && !dump(s)) const_cast<engine::Simulation&>(s).request_stop();
    });
  }

  if (cfg.mode == engine::RunMode::Step && !cfg.listen) {
    // Each line on stdin is one step; end of input stops.
    std::thread([raw = sim.get()] {
      std::string line;
      while (std::getline(std::cin, line)) raw->step_once();
      raw->request_stop();
    }).detach();
  }

  const auto wall0 = std::chrono::steady_clock::now();
  sim->run(cfg.mode, cfg.duration_ms);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  if (server) server->stop();

  out << "t_ms=" << sim->now_ms() << " ticks=" << sim->tick_count() << " seed=" << sim->seed();
  if (wall > 0) out << " speed=" << (static_cast<double>(sim->now_ms()) / 1000.0) / wall << "x";
  out << "\n";
  for (const auto& e : sim->errors()) err << "simrun: " << e << "\n";

  if (!io_error.empty()) {
    err << "simrun: " << io_error << "\n";
    return kExitRuntime;
  }
  if (cfg.record) {
    std::ofstream f(*cfg.record, std::ios::binary);
    write_trajectories(sim->trajectories(), f);
    if (!f) {
      err << "simrun: cannot write '" << cfg.record->string() << "'\n";
      return kExitRuntime;
    }
  }
  return kExitOk;
}

}  // namespace microsim::cli
