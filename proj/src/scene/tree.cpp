#include <algorithm>
#include <functional>

#include "microsim/scene.hpp"

namespace microsim::scene {

const FieldValue* Node::find(std::string_view field) const {
  const int index = node_spec(type).field_index(field);
  if (index < 0) return nullptr;
  auto it = std::find_if(fields.begin(), fields.end(), [&](const Field& f) { return f.index == index; });
  return it == fields.end() ? nullptr : &it->value;
}

const FieldValue& Node::get(std::string_view field) const {
  if (const FieldValue* v = find(field)) return *v;
  const NodeSpec& spec = node_spec(type);
  const int index = spec.field_index(field);
  if (index < 0) {
    throw std::out_of_range(std::string(spec.name) + " has no field '" + std::string(field) + "'");
  }
  return spec.fields[static_cast<std::size_t>(index)].default_value;
}

void Node::set(std::string_view field, FieldValue value) {
  const NodeSpec& spec = node_spec(type);
  const int index = spec.field_index(field);
  if (index < 0) {
    throw std::out_of_range(std::string(spec.name) + " has no field '" + std::string(field) + "'");
  }
  if (kind_of(value) != spec.fields[static_cast<std::size_t>(index)].kind) {
    throw std::invalid_argument("field kind mismatch for '" + std::string(field) + "'");
  }
  auto it = std::lower_bound(fields.begin(), fields.end(), index,
                             [](const Field& f, int idx) { return f.index < idx; });
  if (it != fields.end() && it->index == index) {
    it->value = std::move(value);
  } else {
    fields.insert(it, Field{index, std::move(value)});
  }
}

double Node::get_float(std::string_view field) const { return std::get<double>(get(field)); }
std::int64_t Node::get_int(std::string_view field) const { return std::get<std::int64_t>(get(field)); }
bool Node::get_bool(std::string_view field) const { return std::get<bool>(get(field)); }
const std::string& Node::get_string(std::string_view field) const { return std::get<std::string>(get(field)); }
Vec2 Node::get_vec2(std::string_view field) const { return std::get<Vec2>(get(field)); }
const FloatList& Node::get_list(std::string_view field) const { return std::get<FloatList>(get(field)); }
NodeId Node::get_node(std::string_view field) const { return std::get<NodeRef>(get(field)).id; }
const std::vector<NodeId>& Node::get_nodes(std::string_view field) const {
  return std::get<NodeList>(get(field)).ids;
}

std::span<const NodeId> Node::children() const {
  if (node_spec(type).field_index("children") < 0) return {};
  return get_nodes("children");
}

NodeId SceneTree::add(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId SceneTree::resolve(NodeId id) const {
  const Node& n = node(id);
  return n.is_use() ? n.use_target : id;
}

std::optional<NodeId> SceneTree::find_def(std::string_view name) const {
  auto it = defs_.find(name);
  if (it == defs_.end()) return std::nullopt;
  return it->second;
}

bool SceneTree::define(const std::string& name, NodeId id) { return defs_.emplace(name, id).second; }

std::vector<NodeId> SceneTree::child_nodes(NodeId id) const {
  std::vector<NodeId> out;
  const Node& n = node(id);
  for (const Field& f : n.fields) {
    if (const auto* ref = std::get_if<NodeRef>(&f.value); ref && ref->id != kNoNode) out.push_back(ref->id);
    if (const auto* lst = std::get_if<NodeList>(&f.value)) out.insert(out.end(), lst->ids.begin(), lst->ids.end());
  }
  return out;
}

namespace {

bool nodes_equal(const SceneTree& ta, NodeId a, const SceneTree& tb, NodeId b);

bool values_equal(const SceneTree& ta, const FieldValue& va, const SceneTree& tb, const FieldValue& vb) {
  if (va.index() != vb.index()) return false;
  if (const auto* ra = std::get_if<NodeRef>(&va)) {
    const auto& rb = std::get<NodeRef>(vb);
    if ((ra->id == kNoNode) != (rb.id == kNoNode)) return false;
    return ra->id == kNoNode || nodes_equal(ta, ra->id, tb, rb.id);
  }
  if (const auto* la = std::get_if<NodeList>(&va)) {
    const auto& lb = std::get<NodeList>(vb);
    if (la->ids.size() != lb.ids.size()) return false;
    for (std::size_t k = 0; k < la->ids.size(); ++k) {
      if (!nodes_equal(ta, la->ids[k], tb, lb.ids[k])) return false;
    }
    return true;
  }
  return va == vb;
}

bool nodes_equal(const SceneTree& ta, NodeId a, const SceneTree& tb, NodeId b) {
  const Node& na = ta.node(a);
  const Node& nb = tb.node(b);
  if (na.type != nb.type || na.def_name != nb.def_name || na.use_name != nb.use_name) return false;
  if (na.fields.size() != nb.fields.size()) return false;
  for (std::size_t k = 0; k < na.fields.size(); ++k) {
    if (na.fields[k].index != nb.fields[k].index) return false;
    if (!values_equal(ta, na.fields[k].value, tb, nb.fields[k].value)) return false;
  }
  return true;
}

}  // namespace

bool structurally_equal(const SceneTree& a, const SceneTree& b) {
  if (a.roots().size() != b.roots().size()) return false;
  for (std::size_t k = 0; k < a.roots().size(); ++k) {
    if (!nodes_equal(a, a.roots()[k], b, b.roots()[k])) return false;
  }
  return true;
}

namespace {

NodeId copy_expanded(const SceneTree& src, NodeId id, SceneTree& dst, bool keep_def) {
  const Node& original = src.node(id);
  if (original.is_use()) return copy_expanded(src, original.use_target, dst, false);
  Node copy = original;
  if (!keep_def) copy.def_name.clear();
  for (Field& f : copy.fields) {
    if (auto* ref = std::get_if<NodeRef>(&f.value); ref && ref->id != kNoNode) {
      ref->id = copy_expanded(src, ref->id, dst, keep_def);
    } else if (auto* lst = std::get_if<NodeList>(&f.value)) {
      for (NodeId& child : lst->ids) child = copy_expanded(src, child, dst, keep_def);
    }
  }
  const NodeId out = dst.add(std::move(copy));
  if (!dst.node(out).def_name.empty()) dst.define(dst.node(out).def_name, out);
  return out;
}

}  // namespace

SceneTree expand_uses(const SceneTree& tree) {
  SceneTree out;
  for (NodeId root : tree.roots()) out.roots().push_back(copy_expanded(tree, root, out, true));
  return out;
}

Pose local_pose(const Node& node) {
  if (!is_placed(node.type)) return {};
  const Vec2 t = node.get_vec2("translation");
  return {t.x, t.y, node.get_float("rotation")};
}

std::unordered_map<NodeId, Pose> flatten_poses(const SceneTree& tree, const JointAngles& joints) {
  std::unordered_map<NodeId, Pose> out;
  std::function<void(NodeId, const Pose&)> visit = [&](NodeId id, const Pose& parent) {
    const Node& n = tree.node(id);
    if (n.is_use()) {
      out[id] = compose(parent, local_pose(tree.node(n.use_target)));
      return;
    }
    Pose here = compose(parent, local_pose(n));
    if (is_placed(n.type)) out[id] = here;
    if (n.type == NodeType::PointLight) {
      const Vec2 loc = n.get_vec2("location");
      out[id] = compose(parent, {loc.x, loc.y, 0.0});
    }
    Pose frame = here;
    if (n.type == NodeType::Servo) {
      auto it = joints.find(id);
      if (it != joints.end()) frame = compose(here, {0.0, 0.0, it->second});
    }
    for (NodeId child : n.children()) visit(child, frame);
  };
  for (NodeId root : tree.roots()) visit(root, Pose{});
  return out;
}

}  // namespace microsim::scene
