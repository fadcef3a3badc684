#pragma once

// World files: a planar scene tree in a small VRML97-style node syntax.
//
//   [DEF name] Type { field value ... }   |   USE name
//
// Field kinds are fixed per node type by the catalog below, so the parser is
// schema driven: it knows how many tokens each field value spans.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "microsim/geometry.hpp"

namespace microsim::scene {

enum class NodeType : std::uint8_t {
  WorldInfo,
  Solid,
  Physics,
  Transform,
  Box,
  Cylinder,
  DifferentialWheels,
  Robot,
  Servo,
  DistanceSensor,
  LightSensor,
  TouchSensor,
  GPS,
  Compass,
  Camera1D,
  Emitter,
  Receiver,
  LED,
  PointLight,
};

enum class FieldKind : std::uint8_t { Float, Int, Bool, String, Vec2, Vec3, FloatList, Node, NodeList };

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xffffffffu;

struct NodeRef {
  NodeId id = kNoNode;
  bool operator==(const NodeRef&) const = default;
};
struct NodeList {
  std::vector<NodeId> ids;
  bool operator==(const NodeList&) const = default;
};
using Vec3 = std::array<double, 3>;
using FloatList = std::vector<double>;

using FieldValue =
    std::variant<double, std::int64_t, bool, std::string, Vec2, Vec3, FloatList, NodeRef, NodeList>;

FieldKind kind_of(const FieldValue& value);

struct FieldSpec {
  std::string_view name;
  FieldKind kind;
  FieldValue default_value;
};

struct NodeSpec {
  NodeType type;
  std::string_view name;
  std::vector<FieldSpec> fields;

  /// Index into `fields`, or -1.
  int field_index(std::string_view field) const;
};

const NodeSpec& node_spec(NodeType type);
std::optional<NodeType> node_type_from_name(std::string_view name);
std::string_view node_type_name(NodeType type);

bool is_robot(NodeType type);
bool is_device(NodeType type);
/// Node types that carry translation/rotation.
bool is_placed(NodeType type);

struct SourceLocation {
  int line = 0;
  int column = 0;
};

struct Field {
  int index;  // declaration index in the node's spec
  FieldValue value;
};

struct Node {
  NodeType type = NodeType::Transform;
  std::string def_name;
  /// Non-empty for a `USE name` entry; `type` then mirrors the target and `fields` is empty.
  std::string use_name;
  NodeId use_target = kNoNode;
  /// Explicitly written fields, sorted by declaration index.
  std::vector<Field> fields;
  SourceLocation location;

  bool is_use() const { return !use_name.empty(); }
  const FieldValue* find(std::string_view field) const;
  /// Explicit value or the catalog default.
  const FieldValue& get(std::string_view field) const;
  void set(std::string_view field, FieldValue value);

  double get_float(std::string_view field) const;
  std::int64_t get_int(std::string_view field) const;
  bool get_bool(std::string_view field) const;
  const std::string& get_string(std::string_view field) const;
  Vec2 get_vec2(std::string_view field) const;
  const FloatList& get_list(std::string_view field) const;
  NodeId get_node(std::string_view field) const;
  const std::vector<NodeId>& get_nodes(std::string_view field) const;
  /// The `children` list, or empty for node types without one.
  std::span<const NodeId> children() const;
};

/// Arena of nodes plus the ordered root list. Node references are arena indices,
/// so a tree is an ordinary value: copyable, comparable via `structurally_equal`.
class SceneTree {
 public:
  NodeId add(Node node);
  const Node& node(NodeId id) const { return nodes_.at(id); }
  Node& node(NodeId id) { return nodes_.at(id); }
  /// Follows a USE entry to its DEF target; identity for ordinary nodes.
  NodeId resolve(NodeId id) const;

  const std::vector<NodeId>& roots() const { return roots_; }
  std::vector<NodeId>& roots() { return roots_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return roots_.empty(); }

  std::optional<NodeId> find_def(std::string_view name) const;
  const std::map<std::string, NodeId, std::less<>>& defs() const { return defs_; }
  /// Registers a DEF name; returns false if it is already taken.
  bool define(const std::string& name, NodeId id);

  /// Direct node-valued children (children list, boundingObject, physics), USE entries included.
  std::vector<NodeId> child_nodes(NodeId id) const;

 private:
  std::vector<Node> nodes_;
  std::vector<NodeId> roots_;
  std::map<std::string, NodeId, std::less<>> defs_;
};

/// Same node types, DEF/USE names, explicit fields and shape; arena ids and source
/// locations are ignored.
bool structurally_equal(const SceneTree& a, const SceneTree& b);

enum class ParseErrorKind {
  Syntax,
  UnknownNodeType,
  UnknownField,
  DuplicateField,
  DuplicateDef,
  UnknownUse,
  FieldKindMismatch,
  NonFiniteNumber,
  TooDeep,
};

std::string_view to_string(ParseErrorKind kind);

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, SourceLocation where, const std::string& detail);
  ParseErrorKind kind() const { return kind_; }
  SourceLocation location() const { return location_; }
  const std::string& detail() const { return detail_; }

 private:
  ParseErrorKind kind_;
  SourceLocation location_;
  std::string detail_;
};

SceneTree parse_world(std::string_view text);

/// Parses a fragment that must hold exactly one node and appends it to `tree`
/// as a new root. DEF names share the tree's namespace. On error `tree` is unchanged.
NodeId parse_fragment_into(SceneTree& tree, std::string_view text);

/// Canonical text: 2-space indent, explicit fields in declaration order,
/// shortest round-trip decimals, LF line endings.
std::string serialize_world(const SceneTree& tree);
std::string serialize_node(const SceneTree& tree, NodeId id);

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

struct Diagnostic {
  std::string message;
  NodeId node = kNoNode;
  SourceLocation location;
};

/// Empty iff the tree is simulation-ready.
std::vector<Diagnostic> validate(const SceneTree& tree);

/// Replaces every USE entry with a deep copy of its target (DEF names are not copied).
SceneTree expand_uses(const SceneTree& tree);

/// Current joint angles for Servo nodes; absent entries are 0.
using JointAngles = std::unordered_map<NodeId, double>;

/// World pose of every placed node, composed through its ancestors. A USE entry
/// gets the pose of its occurrence; its subtree is not descended.
std::unordered_map<NodeId, Pose> flatten_poses(const SceneTree& tree, const JointAngles& joints = {});

/// Local pose of a placed node (translation, rotation); identity otherwise.
Pose local_pose(const Node& node);

}  // namespace microsim::scene
