#include <charconv>
#include <string>

#include "microsim/scene.hpp"

namespace microsim::scene {

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

namespace {

void indent(std::string& out, int level) { out.append(static_cast<std::size_t>(level) * 2, ' '); }

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out.push_back('\\');
      out.push_back(c);
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out.push_back(c);
    }
  }
  out.push_back('"');
  return out;
}

void write_node(const SceneTree& tree, NodeId id, int level, std::string& out);

void write_value(const SceneTree& tree, const FieldValue& value, int level, std::string& out) {
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          out += format_double(v);
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          out += std::to_string(v);
        } else if constexpr (std::is_same_v<T, bool>) {
          out += v ? "TRUE" : "FALSE";
        } else if constexpr (std::is_same_v<T, std::string>) {
          out += quote(v);
        } else if constexpr (std::is_same_v<T, Vec2>) {
          out += format_double(v.x) + " " + format_double(v.y);
        } else if constexpr (std::is_same_v<T, Vec3>) {
          out += format_double(v[0]) + " " + format_double(v[1]) + " " + format_double(v[2]);
        } else if constexpr (std::is_same_v<T, FloatList>) {
          out += "[";
          for (std::size_t k = 0; k < v.size(); ++k) {
            if (k) out += " ";
            out += format_double(v[k]);
          }
          out += "]";
        } else if constexpr (std::is_same_v<T, NodeRef>) {
          if (v.id == kNoNode) {
            out += "NULL";
          } else {
            write_node(tree, v.id, level, out);
          }
        } else if constexpr (std::is_same_v<T, NodeList>) {
          if (v.ids.empty()) {
            out += "[]";
            return;
          }
          out += "[\n";
          for (NodeId child : v.ids) {
            indent(out, level + 1);
            write_node(tree, child, level + 1, out);
            out += "\n";
          }
          indent(out, level);
          out += "]";
        }
      },
      value);
}

// Writes the node starting at the current column; the caller owns the leading indent.
void write_node(const SceneTree& tree, NodeId id, int level, std::string& out) {
  const Node& node = tree.node(id);
  if (node.is_use()) {
    out += "USE " + node.use_name;
    return;
  }
  if (!node.def_name.empty()) out += "DEF " + node.def_name + " ";
  const NodeSpec& spec = node_spec(node.type);
  out += spec.name;
  out += " {\n";
  for (const Field& f : node.fields) {
    indent(out, level + 1);
    out += spec.fields[static_cast<std::size_t>(f.index)].name;
    out += " ";
    write_value(tree, f.value, level + 1, out);
    out += "\n";
  }
  indent(out, level);
  out += "}";
}

}  // namespace

std::string serialize_node(const SceneTree& tree, NodeId id) {
  std::string out;
  write_node(tree, id, 0, out);
  out += "\n";
  return out;
}

std::string serialize_world(const SceneTree& tree) {
  std::string out;
  for (NodeId root : tree.roots()) out += serialize_node(tree, root);
  return out;
}

}  // namespace microsim::scene
