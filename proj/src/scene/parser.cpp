#include <charconv>
#include <cmath>
#include <string>

#include "microsim/scene.hpp"

namespace microsim::scene {

std::string_view to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::Syntax: return "syntax error";
    case ParseErrorKind::UnknownNodeType: return "unknown node type";
    case ParseErrorKind::UnknownField: return "unknown field";
    case ParseErrorKind::DuplicateField: return "duplicate field";
    case ParseErrorKind::DuplicateDef: return "duplicate DEF";
    case ParseErrorKind::UnknownUse: return "unknown USE";
    case ParseErrorKind::FieldKindMismatch: return "field kind mismatch";
    case ParseErrorKind::NonFiniteNumber: return "non-finite number";
    case ParseErrorKind::TooDeep: return "nesting too deep";
  }
  return "error";
}

ParseError::ParseError(ParseErrorKind kind, SourceLocation where, const std::string& detail)
    : std::runtime_error(std::to_string(where.line) + ":" + std::to_string(where.column) + ": " +
                         std::string(to_string(kind)) + ": " + detail),
      kind_(kind),
      location_(where),
      detail_(detail) {}

namespace {

constexpr int kMaxDepth = 200;

enum class Tok { Identifier, Number, String, LBrace, RBrace, LBracket, RBracket, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  SourceLocation at;
};

bool ident_start(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; }
bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9') || c == '-'; }
bool digit(char c) { return c >= '0' && c <= '9'; }

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return current_; }
  Token take() {
    Token t = std::move(current_);
    advance();
    return t;
  }

 private:
  char at(std::size_t k) const { return k < src_.size() ? src_[k] : '\0'; }

  void bump() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_blank() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == ',') {
        bump();
      } else if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') bump();
      } else {
        break;
      }
    }
  }

  void advance() {
    skip_blank();
    current_ = Token{};
    current_.at = {line_, col_};
    if (pos_ >= src_.size()) {
      current_.kind = Tok::End;
      return;
    }
    const char c = src_[pos_];
    const std::size_t start = pos_;
    switch (c) {
      case '{': current_.kind = Tok::LBrace; bump(); return;
      case '}': current_.kind = Tok::RBrace; bump(); return;
      case '[': current_.kind = Tok::LBracket; bump(); return;
      case ']': current_.kind = Tok::RBracket; bump(); return;
      default: break;
    }
    if (c == '"') {
      bump();
      std::string text;
      while (true) {
        if (pos_ >= src_.size()) throw ParseError(ParseErrorKind::Syntax, current_.at, "unterminated string");
        const char d = src_[pos_];
        if (d == '"') {
          bump();
          break;
        }
        if (d == '\\') {
          bump();
          if (pos_ >= src_.size()) throw ParseError(ParseErrorKind::Syntax, current_.at, "unterminated string");
          const char e = src_[pos_];
          if (e == 'n') {
            text.push_back('\n');
          } else if (e == '"' || e == '\\') {
            text.push_back(e);
          } else {
            throw ParseError(ParseErrorKind::Syntax, {line_, col_}, "unknown escape sequence");
          }
          bump();
          continue;
        }
        text.push_back(d);
        bump();
      }
      current_.kind = Tok::String;
      current_.text = std::move(text);
      return;
    }
    if (digit(c) || ((c == '-' || c == '+' || c == '.') && (digit(at(pos_ + 1)) || at(pos_ + 1) == '.'))) {
      while (pos_ < src_.size()) {
        const char d = src_[pos_];
        const bool exp_sign = (d == '-' || d == '+') && (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E');
        if (digit(d) || d == '.' || d == 'e' || d == 'E' || exp_sign || (pos_ == start && (d == '-' || d == '+'))) {
          bump();
        } else {
          break;
        }
      }
      current_.kind = Tok::Number;
      current_.text = std::string(src_.substr(start, pos_ - start));
      return;
    }
    if (ident_start(c)) {
      while (pos_ < src_.size() && ident_char(src_[pos_])) bump();
      current_.kind = Tok::Identifier;
      current_.text = std::string(src_.substr(start, pos_ - start));
      return;
    }
    throw ParseError(ParseErrorKind::Syntax, current_.at, std::string("unexpected character '") + c + "'");
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  Token current_;
};

std::string describe(const Token& t) {
  switch (t.kind) {
    case Tok::Identifier: return "'" + t.text + "'";
    case Tok::Number: return "number " + t.text;
    case Tok::String: return "string";
    case Tok::LBrace: return "'{'";
    case Tok::RBrace: return "'}'";
    case Tok::LBracket: return "'['";
    case Tok::RBracket: return "']'";
    case Tok::End: return "end of input";
  }
  return "token";
}

class Parser {
 public:
  Parser(std::string_view text, SceneTree& tree) : lex_(text), tree_(tree) {}

  void parse_document() {
    while (lex_.peek().kind != Tok::End) tree_.roots().push_back(parse_statement(0));
  }

  NodeId parse_single() {
    if (lex_.peek().kind == Tok::End) throw ParseError(ParseErrorKind::Syntax, lex_.peek().at, "expected a node");
    const NodeId id = parse_statement(0);
    if (lex_.peek().kind != Tok::End) {
      throw ParseError(ParseErrorKind::Syntax, lex_.peek().at, "expected a single node, found " + describe(lex_.peek()));
    }
    return id;
  }

 private:
  [[noreturn]] void fail(ParseErrorKind kind, const Token& at, const std::string& detail) {
    throw ParseError(kind, at.at, detail);
  }

  Token expect(Tok kind, std::string_view what) {
    if (lex_.peek().kind != kind) {
      fail(ParseErrorKind::Syntax, lex_.peek(), "expected " + std::string(what) + ", found " + describe(lex_.peek()));
    }
    return lex_.take();
  }

  NodeId parse_statement(int depth) {
    if (depth > kMaxDepth) fail(ParseErrorKind::TooDeep, lex_.peek(), "more than " + std::to_string(kMaxDepth) + " levels");
    const Token head = lex_.peek();
    if (head.kind != Tok::Identifier) fail(ParseErrorKind::Syntax, head, "expected a node, found " + describe(head));
    if (head.text == "USE") {
      lex_.take();
      const Token name = expect(Tok::Identifier, "a DEF name after USE");
      auto target = tree_.find_def(name.text);
      if (!target) fail(ParseErrorKind::UnknownUse, name, "no earlier DEF named '" + name.text + "'");
      Node use;
      use.type = tree_.node(*target).type;
      use.use_name = name.text;
      use.use_target = *target;
      use.location = head.at;
      return tree_.add(std::move(use));
    }
    std::string def_name;
    Token def_token;
    if (head.text == "DEF") {
      lex_.take();
      def_token = expect(Tok::Identifier, "a name after DEF");
      def_name = def_token.text;
    }
    const NodeId id = parse_node(depth);
    if (!def_name.empty()) {
      if (!tree_.define(def_name, id)) fail(ParseErrorKind::DuplicateDef, def_token, "'" + def_name + "' already defined");
      tree_.node(id).def_name = def_name;
    }
    return id;
  }

  NodeId parse_node(int depth) {
    const Token type_tok = expect(Tok::Identifier, "a node type");
    const auto type = node_type_from_name(type_tok.text);
    if (!type) fail(ParseErrorKind::UnknownNodeType, type_tok, "'" + type_tok.text + "'");
    const NodeSpec& spec = node_spec(*type);
    expect(Tok::LBrace, "'{'");
    Node node;
    node.type = *type;
    node.location = type_tok.at;
    while (lex_.peek().kind != Tok::RBrace) {
      const Token field_tok = expect(Tok::Identifier, "a field name or '}'");
      const int index = spec.field_index(field_tok.text);
      if (index < 0) {
        fail(ParseErrorKind::UnknownField, field_tok, std::string(spec.name) + " has no field '" + field_tok.text + "'");
      }
      if (node.find(field_tok.text)) fail(ParseErrorKind::DuplicateField, field_tok, "'" + field_tok.text + "'");
      FieldValue value = parse_value(spec.fields[static_cast<std::size_t>(index)], depth);
      node.set(field_tok.text, std::move(value));
    }
    lex_.take();
    return tree_.add(std::move(node));
  }

  double parse_number(const FieldSpec& field) {
    const Token& t = lex_.peek();
    if (t.kind == Tok::Identifier && (t.text == "nan" || t.text == "NaN" || t.text == "inf" || t.text == "Infinity")) {
      fail(ParseErrorKind::NonFiniteNumber, t, "'" + t.text + "' for field '" + std::string(field.name) + "'");
    }
    if (t.kind != Tok::Number) {
      fail(ParseErrorKind::FieldKindMismatch, t,
           "field '" + std::string(field.name) + "' expects a number, found " + describe(t));
    }
    const Token tok = lex_.take();
    const char* first = tok.text.data();
    const char* last = first + tok.text.size();
    if (*first == '+') ++first;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec == std::errc::result_out_of_range) fail(ParseErrorKind::NonFiniteNumber, tok, tok.text);
    if (ec != std::errc{} || ptr != last) fail(ParseErrorKind::Syntax, tok, "malformed number '" + tok.text + "'");
    if (!std::isfinite(value)) fail(ParseErrorKind::NonFiniteNumber, tok, tok.text);
    return value;
  }

  std::int64_t parse_integer(const FieldSpec& field) {
    const Token& t = lex_.peek();
    if (t.kind != Tok::Number) {
      fail(ParseErrorKind::FieldKindMismatch, t,
           "field '" + std::string(field.name) + "' expects an integer, found " + describe(t));
    }
    const Token tok = lex_.take();
    const char* first = tok.text.data();
    const char* last = first + tok.text.size();
    if (*first == '+') ++first;
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec == std::errc::result_out_of_range) fail(ParseErrorKind::Syntax, tok, "integer out of range '" + tok.text + "'");
    if (ec != std::errc{} || ptr != last) {
      fail(ParseErrorKind::FieldKindMismatch, tok,
           "field '" + std::string(field.name) + "' expects an integer, found " + tok.text);
    }
    return value;
  }

  FieldValue parse_value(const FieldSpec& field, int depth) {
    const std::string name(field.name);
    switch (field.kind) {
      case FieldKind::Float:
        return parse_number(field);
      case FieldKind::Int:
        return parse_integer(field);
      case FieldKind::Bool: {
        const Token& t = lex_.peek();
        if (t.kind == Tok::Identifier && (t.text == "TRUE" || t.text == "FALSE")) return lex_.take().text == "TRUE";
        fail(ParseErrorKind::FieldKindMismatch, t, "field '" + name + "' expects TRUE or FALSE, found " + describe(t));
      }
      case FieldKind::String: {
        const Token& t = lex_.peek();
        if (t.kind != Tok::String) {
          fail(ParseErrorKind::FieldKindMismatch, t, "field '" + name + "' expects a string, found " + describe(t));
        }
        return lex_.take().text;
      }
      case FieldKind::Vec2: {
        const double x = parse_number(field);
        const double y = parse_number(field);
        return Vec2{x, y};
      }
      case FieldKind::Vec3: {
        Vec3 v{};
        for (double& c : v) c = parse_number(field);
        return v;
      }
      case FieldKind::FloatList: {
        const Token& t = lex_.peek();
        if (t.kind != Tok::LBracket) {
          fail(ParseErrorKind::FieldKindMismatch, t, "field '" + name + "' expects '[' numbers ']', found " + describe(t));
        }
        lex_.take();
        FloatList values;
        while (lex_.peek().kind != Tok::RBracket) values.push_back(parse_number(field));
        lex_.take();
        return values;
      }
      case FieldKind::Node: {
        const Token& t = lex_.peek();
        if (t.kind == Tok::Identifier && t.text == "NULL") {
          lex_.take();
          return NodeRef{};
        }
        if (t.kind != Tok::Identifier) {
          fail(ParseErrorKind::FieldKindMismatch, t, "field '" + name + "' expects a node, found " + describe(t));
        }
        return NodeRef{parse_statement(depth + 1)};
      }
      case FieldKind::NodeList: {
        const Token& t = lex_.peek();
        NodeList list;
        if (t.kind == Tok::Identifier) {
          list.ids.push_back(parse_statement(depth + 1));
          return list;
        }
        if (t.kind != Tok::LBracket) {
          fail(ParseErrorKind::FieldKindMismatch, t, "field '" + name + "' expects '[' nodes ']', found " + describe(t));
        }
        lex_.take();
        while (lex_.peek().kind != Tok::RBracket) {
          if (lex_.peek().kind != Tok::Identifier) {
            fail(ParseErrorKind::FieldKindMismatch, lex_.peek(),
                 "field '" + name + "' expects nodes, found " + describe(lex_.peek()));
          }
          list.ids.push_back(parse_statement(depth + 1));
        }
        lex_.take();
        return list;
      }
    }
    fail(ParseErrorKind::Syntax, lex_.peek(), "unsupported field kind");
  }

  Lexer lex_;
  SceneTree& tree_;
};

}  // namespace

SceneTree parse_world(std::string_view text) {
  SceneTree tree;
  Parser parser(text, tree);
  parser.parse_document();
  return tree;
}

NodeId parse_fragment_into(SceneTree& tree, std::string_view text) {
  SceneTree work = tree;
  Parser parser(text, work);
  const NodeId id = parser.parse_single();
  work.roots().push_back(id);
  tree = std::move(work);
  return id;
}

}  // namespace microsim::scene
