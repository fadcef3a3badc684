#include <gtest/gtest.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "microsim/cli.hpp"
#include "oracles.hpp"

using namespace microsim;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result simrun(std::vector<std::string> args) {
  args.insert(args.begin(), "simrun");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("simrun_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name) << text;
    return path_ / name;
  }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, ',');) out.push_back(f);
  return out;
}

const std::string kWorlds = MICROSIM_WORLDS_DIR;

const char* kDriveWorld = R"(WorldInfo { basicTimeStep 32 }
DEF BOT DifferentialWheels {
  name "bot"
  controller "forward"
  translation 0.1 -0.2
  rotation 0.5
  wheelRadius 0.05
  axleLength 0.1
}
DEF BOX Solid { translation 2 2 boundingObject Box { size 0.1 0.1 } }
)";

const char* kDiscWorld = R"(WorldInfo { }
DEF DISC Solid { color 1 boundingObject Cylinder { radius 0.2 } }
)";

}  // namespace

TEST(Cli, FastRunReportsFinalTime) {
  const auto r = simrun({kWorlds + "/obstacle_stop.mwt", "--mode", "fast", "--duration", "1024"});
  EXPECT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("t_ms=1024 ticks=32"), std::string::npos) << r.out;
}

TEST(Cli, HelpExitsZero) {
  const auto r = simrun({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--duration"), std::string::npos);
}

TEST(Cli, MissingWorldNamesThePath) {
  const auto r = simrun({"/no/such/dir/world.mwt", "--mode", "fast"});
  EXPECT_EQ(r.code, cli::kExitWorld);
  EXPECT_NE(r.err.find("/no/such/dir/world.mwt"), std::string::npos) << r.err;
}

TEST(Cli, ParseErrorNamesFileAndLine) {
  TempDir dir;
  const auto p = dir.write("bad.mwt", "WorldInfo { }\nSolid { translation 1 }\n");
  const auto r = simrun({p.string(), "--mode", "fast", "--duration", "32"});
  EXPECT_EQ(r.code, cli::kExitWorld);
  EXPECT_NE(r.err.find(p.string() + ":2"), std::string::npos) << r.err;
}

TEST(Cli, ValidationErrorExitsOne) {
  TempDir dir;
  const auto p = dir.write("v.mwt", "WorldInfo { }\nRobot { controller \"no_such_program\" }\n");
  EXPECT_EQ(simrun({p.string(), "--mode", "fast", "--duration", "32"}).code, cli::kExitWorld);
}

TEST(Cli, UsageErrors) {
  const std::string w = kWorlds + "/obstacle_stop.mwt";
  EXPECT_EQ(simrun({w, "--mode", "fast", "--duration", "48"}).code, cli::kExitWorld);
  EXPECT_EQ(simrun({w, "--mode", "fast", "--duration", "0"}).code, cli::kExitWorld);
  EXPECT_EQ(simrun({w, "--mode", "fast", "--duration", "-32"}).code, cli::kExitWorld);
  EXPECT_EQ(simrun({w, "--mode", "warp", "--duration", "32"}).code, cli::kExitWorld);
  EXPECT_EQ(simrun({w, "--mode", "fast", "--duration", "32", "--frames", "/tmp/x"}).code, cli::kExitWorld);
  EXPECT_EQ(simrun({w, "--mode", "fast", "--duration", "32", "--frames", "/tmp/x", "--every", "40"}).code,
            cli::kExitWorld);
  EXPECT_EQ(simrun({w, "--mode", "fast", "--duration", "32", "--listen", "nonsense"}).code, cli::kExitWorld);
  EXPECT_EQ(simrun({}).code, cli::kExitWorld);
}

TEST(Cli, BindFailureExitsTwo) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ASSERT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
  ASSERT_EQ(::listen(fd, 1), 0);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  const std::string port = std::to_string(ntohs(addr.sin_port));
  const auto r = simrun({kWorlds + "/obstacle_stop.mwt", "--mode", "fast", "--duration", "32", "--listen", "127.0.0.1:" + port});
  ::close(fd);
  EXPECT_EQ(r.code, cli::kExitRuntime) << r.err;
}

TEST(Cli, UnwritableRecordExitsTwo) {
  const auto r = simrun({kWorlds + "/obstacle_stop.mwt", "--mode", "fast", "--duration", "32", "--record", "/no/such/dir/t.csv"});
  EXPECT_EQ(r.code, cli::kExitRuntime);
}

TEST(Seed, Priority) {
  const auto with_seed = scene::parse_world("WorldInfo { randomSeed 5 }");
  const auto without = scene::parse_world("WorldInfo { }");
  EXPECT_EQ(cli::resolve_seed(3, with_seed, "11"), 3u);
  EXPECT_EQ(cli::resolve_seed(std::nullopt, with_seed, "11"), 5u);
  EXPECT_EQ(cli::resolve_seed(std::nullopt, without, "11"), 11u);
  EXPECT_EQ(cli::resolve_seed(std::nullopt, without, nullptr), 0u);
  EXPECT_EQ(cli::resolve_seed(std::nullopt, without, ""), 0u);
  // Written explicitly as 0 still counts as written.
  EXPECT_EQ(cli::resolve_seed(std::nullopt, scene::parse_world("WorldInfo { randomSeed 0 }"), "11"), 0u);
  EXPECT_THROW(cli::resolve_seed(std::nullopt, without, "12x"), std::invalid_argument);
}

TEST(Seed, ReachesTheSimulation) {
  TempDir dir;
  const auto p = dir.write("s.mwt", "WorldInfo { randomSeed 5 }\n");
  ::setenv("MICROSIM_SEED", "11", 1);
  const auto by_world = simrun({p.string(), "--mode", "fast", "--duration", "32"});
  const auto by_flag = simrun({p.string(), "--mode", "fast", "--duration", "32", "--seed", "3"});
  const auto env_only = simrun({kWorlds + "/empty.mwt", "--mode", "fast", "--duration", "32"});
  ::setenv("MICROSIM_SEED", "junk", 1);
  const auto junk = simrun({kWorlds + "/empty.mwt", "--mode", "fast", "--duration", "32"});
  ::unsetenv("MICROSIM_SEED");
  EXPECT_NE(by_world.out.find("seed=5"), std::string::npos) << by_world.out;
  EXPECT_NE(by_flag.out.find("seed=3"), std::string::npos) << by_flag.out;
  EXPECT_NE(env_only.out.find("seed=11"), std::string::npos) << env_only.out;
  EXPECT_EQ(junk.code, cli::kExitWorld);
}

TEST(Record, HeaderAndOneRowPerNodePerTick) {
  TempDir dir;
  const auto world = dir.write("d.mwt", kDriveWorld);
  const auto csv = dir / "t.csv";
  ASSERT_EQ(simrun({world.string(), "--mode", "fast", "--duration", "64", "--record", csv.string()}).code, 0);
  const auto rows = lines(slurp(csv));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "t_ms,node,x,y,theta");
  EXPECT_EQ(split(rows[1])[0], "32");
  EXPECT_EQ(split(rows[1])[1], "BOT");
  EXPECT_EQ(split(rows[2])[1], "BOX");
  EXPECT_EQ(split(rows[3])[0], "64");
  EXPECT_EQ(rows[2].substr(2), rows[4].substr(2));
  EXPECT_EQ(split(rows[2])[2], "2");
}

TEST(Record, StraightDriveMatchesArcSolution) {
  TempDir dir;
  const auto world = dir.write("d.mwt", kDriveWorld);
  const auto csv = dir / "t.csv";
  ASSERT_EQ(simrun({world.string(), "--mode", "fast", "--duration", "640", "--record", csv.string()}).code, 0);
  Pose expect{0.1, -0.2, 0.5};
  int checked = 0;
  for (const auto& row : lines(slurp(csv))) {
    const auto f = split(row);
    if (f[1] != "BOT") continue;
    expect = oracle::arc_motion(expect, 10, 10, 0.05, 0.1, 0.032);
    EXPECT_NEAR(std::stod(f[2]), expect.x, 1e-8) << row;
    EXPECT_NEAR(std::stod(f[3]), expect.y, 1e-8) << row;
    EXPECT_NEAR(std::stod(f[4]), expect.theta, 1e-8) << row;
    ++checked;
  }
  EXPECT_EQ(checked, 20);
}

TEST(Frames, EmptyWorldIsUniformBlack) {
  const auto g = cli::frame_geometry({});
  EXPECT_EQ(g.width, 120);
  EXPECT_EQ(g.height, 120);
  const std::string img = cli::render_ppm({}, g);
  const std::string header = "P6\n120 120\n255\n";
  ASSERT_EQ(img.substr(0, header.size()), header);
  ASSERT_EQ(img.size(), header.size() + 120u * 120u * 3u);
  EXPECT_EQ(img.find_first_not_of('\0', header.size()), std::string::npos);
}

TEST(Frames, DiscMatchesPixelOracle) {
  TempDir dir;
  const auto world = dir.write("disc.mwt", kDiscWorld);
  const auto frames = dir / "frames";
  ASSERT_EQ(simrun({world.string(), "--mode", "fast", "--duration", "64", "--frames", frames.string(), "--every", "32"})
                .code,
            0);
  const std::string img = slurp(frames / "frame_00000000.ppm");
  // Disc of radius 0.2 plus a 0.05 margin at 100 px/m.
  const std::string header = "P6\n50 50\n255\n";
  ASSERT_EQ(img.substr(0, header.size()), header);
  ASSERT_EQ(img.size(), header.size() + 50u * 50u * 3u);
  int lit = 0;
  for (int j = 0; j < 50; ++j) {
    for (int i = 0; i < 50; ++i) {
      const double x = -0.25 + (i + 0.5) / 100.0, y = 0.25 - (j + 0.5) / 100.0;
      const double r = std::hypot(x, y);
      if (std::fabs(r - 0.2) < 1e-9) continue;
      const auto* p = reinterpret_cast<const unsigned char*>(img.data() + header.size() + (j * 50 + i) * 3);
      const unsigned char want = r < 0.2 ? 255 : 0;
      ASSERT_EQ(p[0], want) << i << "," << j;
      ASSERT_EQ(p[1], want);
      ASSERT_EQ(p[2], want);
      lit += want != 0;
    }
  }
  // Roughly pi r^2 worth of pixels.
  EXPECT_NEAR(lit, M_PI * 400.0, 40.0);
  EXPECT_TRUE(fs::exists(frames / "frame_00000001.ppm"));
  EXPECT_TRUE(fs::exists(frames / "frame_00000002.ppm"));
  EXPECT_EQ(slurp(frames / "frame_00000000.ppm"), slurp(frames / "frame_00000002.ppm"));
}

TEST(Frames, OnlyEveryIntervalIsWritten) {
  TempDir dir;
  const auto frames = dir / "f";
  ASSERT_EQ(simrun({kWorlds + "/obstacle_stop.mwt", "--mode", "fast", "--duration", "320", "--frames", frames.string(), "--every",
                    "128"})
                .code,
            0);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(frames)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  EXPECT_EQ(names, (std::vector<std::string>{"frame_00000000.ppm", "frame_00000004.ppm", "frame_00000008.ppm"}));
}

TEST(Frames, Name) { EXPECT_EQ(cli::frame_name(12), "frame_00000012.ppm"); }

TEST(Output, ByteIdenticalAcrossRuns) {
  TempDir a, b;
  for (const TempDir* d : {&a, &b}) {
    ASSERT_EQ(simrun({kWorlds + "/three_robots.mwt", "--mode", "fast", "--duration", "640", "--seed", "7", "--record",
                      (*d / "t.csv").string(), "--frames", (*d / "f").string(), "--every", "320"})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(a / "t.csv"), slurp(b / "t.csv"));
  EXPECT_GT(lines(slurp(a / "t.csv")).size(), 20u);
  for (const char* f : {"frame_00000000.ppm", "frame_00000010.ppm", "frame_00000020.ppm"}) {
    EXPECT_EQ(slurp(a / "f" / f), slurp(b / "f" / f)) << f;
  }
  EXPECT_NE(slurp(a / "f" / "frame_00000000.ppm"), slurp(a / "f" / "frame_00000020.ppm"));
}
