#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "microsim/scene.hpp"

using namespace microsim;
using namespace microsim::scene;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::filesystem::path> corpus() {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(MICROSIM_WORLDS_DIR)) {
    if (e.path().extension() == ".mwt") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

ParseErrorKind error_kind(std::string_view text) {
  try {
    parse_world(text);
  } catch (const ParseError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a parse error for: " << text;
  return ParseErrorKind::Syntax;
}

constexpr std::string_view kObstacleStop = R"(
WorldInfo { basicTimeStep 32 }
DEF ROBOT DifferentialWheels {
  controller "obstacle_stop"
  children [ DistanceSensor { name "ir" translation 0.05 0 } ]
}
)";

}  // namespace

TEST(SceneParse, DefSolidWithTranslation) {
  const SceneTree tree = parse_world("DEF BOX Solid { translation 1 0 }");
  ASSERT_EQ(tree.roots().size(), 1u);
  const Node& box = tree.node(tree.roots()[0]);
  EXPECT_EQ(box.type, NodeType::Solid);
  EXPECT_EQ(box.def_name, "BOX");
  EXPECT_EQ(box.get_vec2("translation"), (Vec2{1.0, 0.0}));
  EXPECT_EQ(tree.find_def("BOX"), tree.roots()[0]);
}

TEST(SceneParse, UseWithoutDefIsUnknownUse) {
  EXPECT_EQ(error_kind("USE BOX"), ParseErrorKind::UnknownUse);
  // DEF after the USE does not count.
  EXPECT_EQ(error_kind("Solid { boundingObject USE B }\nSolid { boundingObject DEF B Box {} }"),
            ParseErrorKind::UnknownUse);
}

TEST(SceneParse, ObstacleStopWorldHasDistanceSensorNamedIr) {
  const SceneTree tree = parse_world(kObstacleStop);
  const NodeId robot = *tree.find_def("ROBOT");
  const auto kids = tree.node(robot).children();
  ASSERT_EQ(kids.size(), 1u);
  const Node& ir = tree.node(kids[0]);
  EXPECT_EQ(ir.type, NodeType::DistanceSensor);
  EXPECT_EQ(ir.get_string("name"), "ir");
  EXPECT_TRUE(validate(tree).empty());
}

TEST(SceneParse, ErrorsCarryKindAndLocation) {
  try {
    parse_world("WorldInfo {}\nSolid {\n  translation 1 \"x\"\n}");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseErrorKind::FieldKindMismatch);
    EXPECT_EQ(e.location().line, 3);
    EXPECT_EQ(e.location().column, 17);
  }
  EXPECT_EQ(error_kind("Wheel {}"), ParseErrorKind::UnknownNodeType);
  EXPECT_EQ(error_kind("Solid { mass 1 }"), ParseErrorKind::UnknownField);
  EXPECT_EQ(error_kind("Solid { rotation 1 rotation 2 }"), ParseErrorKind::DuplicateField);
  EXPECT_EQ(error_kind("DEF A Solid {} DEF A Solid {}"), ParseErrorKind::DuplicateDef);
  EXPECT_EQ(error_kind("Solid { rotation 1e999 }"), ParseErrorKind::NonFiniteNumber);
  EXPECT_EQ(error_kind("Solid { rotation nan }"), ParseErrorKind::NonFiniteNumber);
  EXPECT_EQ(error_kind("Solid { rotation inf }"), ParseErrorKind::NonFiniteNumber);
  EXPECT_EQ(error_kind("WorldInfo { basicTimeStep 3.5 }"), ParseErrorKind::FieldKindMismatch);
  EXPECT_EQ(error_kind("Robot { supervisor 1 }"), ParseErrorKind::FieldKindMismatch);
  EXPECT_EQ(error_kind("Solid { children [ 1 ] }"), ParseErrorKind::FieldKindMismatch);
  EXPECT_EQ(error_kind("Solid { "), ParseErrorKind::Syntax);
  EXPECT_EQ(error_kind("Solid { name \"abc }"), ParseErrorKind::Syntax);
  EXPECT_EQ(error_kind("Solid } "), ParseErrorKind::Syntax);
}

TEST(SceneParse, CommentsCommasAndSingleChildShorthand) {
  const SceneTree tree = parse_world(
      "# header\nTransform { # trailing\n children Solid { translation 1, 2 } }\n");
  const Node& t = tree.node(tree.roots()[0]);
  ASSERT_EQ(t.children().size(), 1u);
  EXPECT_EQ(tree.node(t.children()[0]).get_vec2("translation"), (Vec2{1.0, 2.0}));
}

TEST(SceneParse, DeepNestingIsRejectedNotCrashing) {
  std::string text;
  for (int k = 0; k < 5000; ++k) text += "Transform { children [ ";
  EXPECT_EQ(error_kind(text), ParseErrorKind::TooDeep);
}

TEST(SceneParse, FragmentIsAllOrNothing) {
  SceneTree tree = parse_world("WorldInfo {}");
  const NodeId id = parse_fragment_into(tree, "DEF NEW Solid { translation 1 1 }");
  EXPECT_EQ(tree.roots().size(), 2u);
  EXPECT_EQ(tree.find_def("NEW"), id);
  const SceneTree before = tree;
  EXPECT_THROW(parse_fragment_into(tree, "Solid { translation 1 }"), ParseError);
  EXPECT_THROW(parse_fragment_into(tree, "Solid {} Solid {}"), ParseError);
  EXPECT_THROW(parse_fragment_into(tree, "DEF NEW Solid {}"), ParseError);
  EXPECT_TRUE(structurally_equal(before, tree));
  EXPECT_EQ(before.size(), tree.size());
}

TEST(SceneSerialize, EmptyTreeIsEmptyString) { EXPECT_EQ(serialize_world(SceneTree{}), ""); }

TEST(SceneSerialize, CanonicalLayout) {
  const SceneTree tree = parse_world(
      "DEF S Solid { boundingObject DEF B Box { size 0.1 0.2 } translation 1 0.5 children [ Solid { "
      "boundingObject USE B } ] }");
  EXPECT_EQ(serialize_world(tree),
            "DEF S Solid {\n"
            "  translation 1 0.5\n"
            "  children [\n"
            "    Solid {\n"
            "      boundingObject USE B\n"
            "    }\n"
            "  ]\n"
            "  boundingObject DEF B Box {\n"
            "    size 0.1 0.2\n"
            "  }\n"
            "}\n");
}

TEST(SceneSerialize, UseChildStaysUse) {
  const SceneTree tree = parse_world("DEF A Solid {}\nTransform { children [ USE A ] }");
  const std::string text = serialize_world(tree);
  EXPECT_NE(text.find("USE A"), std::string::npos);
  EXPECT_EQ(text.find("Solid", text.find("Transform")), std::string::npos);
}

TEST(SceneSerialize, FloatsAreShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(-2.5e-7), "-2.5e-07");
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int k = 0; k < 2000; ++k) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 30) - 15);
    const SceneTree t = parse_world("Solid { rotation " + format_double(v) + " }");
    EXPECT_EQ(t.node(t.roots()[0]).get_float("rotation"), v);
  }
}

TEST(SceneCorpus, RoundTripFixpoint) {
  const auto files = corpus();
  ASSERT_GE(files.size(), 10u);
  for (const auto& path : files) {
    SCOPED_TRACE(path.string());
    const SceneTree first = parse_world(read_file(path));
    const std::string canon = serialize_world(first);
    const SceneTree second = parse_world(canon);
    EXPECT_TRUE(structurally_equal(first, second));
    EXPECT_EQ(serialize_world(second), canon);
    EXPECT_TRUE(validate(first).empty()) << (validate(first).empty() ? "" : validate(first)[0].message);
  }
}

namespace {

// Random trees over a few node types, built through the public Node API.
class TreeGen {
 public:
  explicit TreeGen(std::uint64_t seed) : rng_(seed) {}

  SceneTree make() {
    SceneTree t;
    const int roots = pick(0, 4);
    for (int k = 0; k < roots; ++k) t.roots().push_back(node(t, 0));
    return t;
  }

 private:
  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real() {
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    return u(rng_) * std::pow(10.0, pick(-6, 3));
  }

  NodeId node(SceneTree& t, int depth) {
    if (depth > 0 && !defs_.empty() && pick(0, 5) == 0) {
      const std::string name = defs_[static_cast<std::size_t>(pick(0, static_cast<int>(defs_.size()) - 1))];
      const NodeId target = *t.find_def(name);
      if (t.node(target).type == NodeType::Solid || t.node(target).type == NodeType::Transform) {
        Node use;
        use.type = t.node(target).type;
        use.use_name = name;
        use.use_target = target;
        return t.add(use);
      }
    }
    Node n;
    n.type = pick(0, 1) ? NodeType::Solid : NodeType::Transform;
    if (pick(0, 1)) n.set("translation", Vec2{real(), real()});
    if (pick(0, 1)) n.set("rotation", real());
    if (n.type == NodeType::Solid) {
      if (pick(0, 1)) n.set("name", std::string("n\"a\\me") + std::to_string(pick(0, 99)));
      if (pick(0, 2) == 0) {
        Node box;
        box.type = NodeType::Box;
        box.set("size", Vec2{std::abs(real()) + 0.1, 1.0});
        n.set("boundingObject", NodeRef{t.add(box)});
      }
    }
    if (depth < 3 && pick(0, 1)) {
      NodeList kids;
      const int count = pick(0, 3);
      for (int k = 0; k < count; ++k) kids.ids.push_back(node(t, depth + 1));
      n.set("children", kids);
    }
    const NodeId id = t.add(n);
    if (pick(0, 3) == 0) {
      const std::string name = "D" + std::to_string(defs_.size());
      t.node(id).def_name = name;
      t.define(name, id);
      defs_.push_back(name);
    }
    return id;
  }

  std::mt19937_64 rng_;
  std::vector<std::string> defs_;
};

}  // namespace

TEST(SceneProperty, RandomTreesRoundTrip) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    TreeGen gen(seed);
    const SceneTree t = gen.make();
    const SceneTree back = parse_world(serialize_world(t));
    ASSERT_TRUE(structurally_equal(t, back)) << serialize_world(t);
  }
}

TEST(SceneProperty, FieldKindMutationsAreRejected) {
  // Replace one numeric token of a valid file with something of another kind.
  const std::string text = read_file(std::filesystem::path(MICROSIM_WORLDS_DIR) / "three_robots.mwt");
  std::vector<std::size_t> number_starts;
  for (std::size_t k = 0; k < text.size(); ++k) {
    const bool starts = std::isdigit(static_cast<unsigned char>(text[k])) &&
                        (k == 0 || text[k - 1] == ' ' || text[k - 1] == '[' || text[k - 1] == '-');
    const std::size_t line_start = text.rfind('\n', k);
    const std::size_t hash = text.rfind('#', k);
    const bool in_comment = hash != std::string::npos && (line_start == std::string::npos || hash > line_start);
    if (starts && !in_comment) number_starts.push_back(k);
  }
  ASSERT_GT(number_starts.size(), 50u);
  const std::vector<std::string> replacements{"\"text\"", "TRUE", "Box {}", "[ ]"};
  for (std::size_t idx = 0; idx < number_starts.size(); ++idx) {
    const std::size_t start = number_starts[idx];
    std::size_t end = start;
    while (end < text.size() && (std::isdigit(static_cast<unsigned char>(text[end])) || text[end] == '.' ||
                                 text[end] == 'e')) {
      ++end;
    }
    std::size_t s = start;
    if (s > 0 && text[s - 1] == '-') --s;
    const std::string mutated = text.substr(0, s) + replacements[idx % replacements.size()] + text.substr(end);
    try {
      parse_world(mutated);
      ADD_FAILURE() << "mutation at offset " << s << " accepted";
    } catch (const ParseError& e) {
      EXPECT_GE(e.location().line, 1);
    }
  }
}

TEST(SceneProperty, ByteMutationsNeverCrash) {
  const auto files = corpus();
  std::mt19937_64 rng(7);
  const std::string alphabet = "{}[]\"#.-+eE0123456789 \nDEFUSEabc,\\";
  int errors = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    std::string text = read_file(files[static_cast<std::size_t>(trial) % files.size()]);
    const int edits = 1 + static_cast<int>(rng() % 4);
    for (int e = 0; e < edits && !text.empty(); ++e) {
      const std::size_t at = rng() % text.size();
      switch (rng() % 3) {
        case 0: text[at] = alphabet[rng() % alphabet.size()]; break;
        case 1: text.erase(at, 1 + rng() % 8); break;
        default: text.insert(at, 1, alphabet[rng() % alphabet.size()]); break;
      }
    }
    try {
      const SceneTree t = parse_world(text);
      const std::string canon = serialize_world(t);
      EXPECT_EQ(serialize_world(parse_world(canon)), canon);
    } catch (const ParseError& e) {
      ++errors;
      EXPECT_GE(e.location().line, 1);
      EXPECT_GE(e.location().column, 1);
    }
  }
  EXPECT_GT(errors, 1000);
}

TEST(SceneValidate, DuplicateWorldInfo) {
  const auto diags = validate(parse_world("WorldInfo {} WorldInfo {}"));
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_NE(diags[0].message.find("duplicate WorldInfo"), std::string::npos);
}

TEST(SceneValidate, DuplicateDeviceOnOneRobot) {
  const auto diags = validate(parse_world(
      "WorldInfo {} DifferentialWheels { controller \"c\" children [ DistanceSensor { name \"ir\" } "
      "Transform { children [ DistanceSensor { name \"ir\" } ] } ] }"));
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_NE(diags[0].message.find("duplicate device name \"ir\""), std::string::npos);
  EXPECT_EQ(diags[0].location.line, 1);
}

TEST(SceneValidate, SameDeviceNameOnTwoRobotsIsFine) {
  EXPECT_TRUE(validate(parse_world("WorldInfo {} Robot { controller \"a\" children [ LED { name \"x\" } ] }"
                                   "Robot { controller \"b\" children [ LED { name \"x\" } ] }"))
                  .empty());
}

TEST(SceneValidate, StructuralRules) {
  auto has = [](const std::vector<Diagnostic>& d, std::string_view text) {
    return std::any_of(d.begin(), d.end(), [&](const Diagnostic& x) { return x.message.find(text) != std::string::npos; });
  };
  EXPECT_TRUE(has(validate(parse_world("Solid {}")), "missing WorldInfo"));
  EXPECT_TRUE(has(validate(parse_world("WorldInfo {} Robot {}")), "controller must be non-empty"));
  EXPECT_TRUE(has(validate(parse_world("WorldInfo {} Solid { children [ Servo {} ] }")), "Servo must be a child"));
  EXPECT_TRUE(validate(parse_world("WorldInfo {} Robot { controller \"c\" children [ Transform { children [ "
                                   "Servo { children [ Servo {} ] } ] } ] }"))
                  .empty());
  EXPECT_TRUE(has(validate(parse_world("WorldInfo {} LED { name \"l\" }")), "devices must belong to a robot"));
  EXPECT_TRUE(has(validate(parse_world("WorldInfo {} Robot { controller \"c\" children [ LED {} ] }")),
                  "device name must be non-empty"));
  EXPECT_TRUE(has(validate(parse_world("WorldInfo {} Solid { physics Physics { staticFriction 0.1 "
                                       "kineticFriction 0.2 } }")),
                  "kineticFriction"));
  EXPECT_TRUE(has(validate(parse_world("WorldInfo {} Solid { physics Physics { bounce 1.5 } }")), "bounce"));
  EXPECT_TRUE(has(validate(parse_world("WorldInfo {} Solid { boundingObject Physics {} }")), "boundingObject"));
  EXPECT_TRUE(has(validate(parse_world("WorldInfo {} Robot { controller \"c\" children [ DistanceSensor { "
                                       "name \"d\" lookupTable [0 1 0, 0 0 0] } ] }")),
                  "strictly increasing"));
  EXPECT_TRUE(has(validate(parse_world("WorldInfo {} DifferentialWheels { controller \"c\" children [ LED { "
                                       "name \"left_encoder\" } ] }")),
                  "duplicate device name"));
  EXPECT_TRUE(has(validate(parse_world("WorldInfo { basicTimeStep 0 }")), "basicTimeStep"));
}

TEST(ScenePoses, TransformThenSolid) {
  const SceneTree tree = parse_world("Transform { translation 1 0 children [ DEF C Solid { translation 0 1 } ] }");
  const auto poses = flatten_poses(tree);
  const Pose p = poses.at(*tree.find_def("C"));
  EXPECT_DOUBLE_EQ(p.x, 1.0);
  EXPECT_DOUBLE_EQ(p.y, 1.0);
  EXPECT_DOUBLE_EQ(p.theta, 0.0);
}

TEST(ScenePoses, RotationThenChildTranslation) {
  // Oracle: rotating the child offset (1, 0) by pi/2 gives (cos, sin)(pi/2) = (0, 1).
  const double half_pi = std::numbers::pi / 2.0;
  const SceneTree tree = parse_world("Transform { rotation " + format_double(half_pi) +
                                     " children [ DEF C Solid { translation 1 0 } ] }");
  const Pose p = flatten_poses(tree).at(*tree.find_def("C"));
  EXPECT_NEAR(p.x, std::cos(half_pi), 1e-15);
  EXPECT_NEAR(p.y, 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(p.theta, half_pi);
}

TEST(ScenePoses, ServoJointAngle) {
  const SceneTree tree = parse_world(
      "Robot { controller \"c\" children [ DEF S Servo { translation 0.1 0 children [ DEF TIP Solid { "
      "translation 0.2 0 } ] } ] }");
  const NodeId servo = *tree.find_def("S");
  const NodeId tip = *tree.find_def("TIP");
  const Pose fixed = flatten_poses(tree).at(tip);
  const Pose zero = flatten_poses(tree, {{servo, 0.0}}).at(tip);
  EXPECT_EQ(fixed, zero);
  EXPECT_NEAR(fixed.x, 0.3, 1e-15);
  const Pose bent = flatten_poses(tree, {{servo, std::numbers::pi / 2.0}}).at(tip);
  EXPECT_NEAR(bent.x, 0.1, 1e-15);
  EXPECT_NEAR(bent.y, 0.2, 1e-15);
}

TEST(SceneProperty, IdentityTransformInsertionKeepsPoses) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::string a = format_double(u(rng)), b = format_double(u(rng)), c = format_double(u(rng));
    const std::string d = format_double(u(rng)), e = format_double(u(rng)), f = format_double(u(rng));
    const std::string inner = "DEF LEAF Solid { translation " + d + " " + e + " rotation " + f + " }";
    const SceneTree plain =
        parse_world("Transform { translation " + a + " " + b + " rotation " + c + " children [ " + inner + " ] }");
    const SceneTree wrapped = parse_world("Transform { translation " + a + " " + b + " rotation " + c +
                                          " children [ Transform { children [ " + inner + " ] } ] }");
    const SceneTree outer = parse_world("Transform { children [ Transform { translation " + a + " " + b +
                                        " rotation " + c + " children [ " + inner + " ] } ] }");
    const Pose p0 = flatten_poses(plain).at(*plain.find_def("LEAF"));
    EXPECT_EQ(p0, flatten_poses(wrapped).at(*wrapped.find_def("LEAF")));
    EXPECT_EQ(p0, flatten_poses(outer).at(*outer.find_def("LEAF")));
  }
}

TEST(SceneExpand, UsesBecomeCopies) {
  const SceneTree tree = parse_world(
      "DEF A Solid { translation 1 0 boundingObject DEF B Box {} }\nSolid { boundingObject USE B }\n"
      "Transform { children [ USE A ] }");
  const SceneTree flat = expand_uses(tree);
  const Node& second = flat.node(flat.roots()[1]);
  const Node& shape = flat.node(second.get_node("boundingObject"));
  EXPECT_FALSE(shape.is_use());
  EXPECT_EQ(shape.type, NodeType::Box);
  EXPECT_TRUE(shape.def_name.empty());
  const Node& copy = flat.node(flat.node(flat.roots()[2]).children()[0]);
  EXPECT_EQ(copy.type, NodeType::Solid);
  EXPECT_EQ(copy.get_vec2("translation"), (Vec2{1.0, 0.0}));
  EXPECT_EQ(flat.find_def("A"), flat.roots()[0]);
}
