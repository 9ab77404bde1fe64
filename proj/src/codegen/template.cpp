#include <memory>
#include <optional>

#include "rdis/codegen.hpp"
#include "rdis/expr.hpp"

namespace rdis::codegen {
namespace {

using nlohmann::json;

struct Node {
  enum Kind { kText, kValue, kEach, kIf, kUnless } kind = kText;
  std::string text;  // literal text or lookup path
  int line = 1;
  std::vector<Node> body;
  std::vector<Node> otherwise;
};

struct Tag {
  std::size_t begin;  // offset of "{{"
  std::size_t end;    // offset after "}}"
  std::string inner;
  int line;
};

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

bool is_block(const std::string& inner) {
  return !inner.empty() && (inner[0] == '#' || inner[0] == '/' || inner == "else");
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  std::vector<Node> parse() {
    auto nodes = parse_until("");
    if (pos_ < text_.size()) throw TemplateError("template-syntax", "unexpected content", line_at(pos_));
    return nodes;
  }

 private:
  int line_at(std::size_t offset) const {
    int line = 1;
    for (std::size_t i = 0; i < offset && i < text_.size(); ++i) line += text_[i] == '\n';
    return line;
  }

  // Next tag at or after pos_, widened to the whole line when it stands alone.
  std::optional<Tag> next_tag(std::size_t& text_end) {
    auto open = text_.find("{{", pos_);
    if (open == std::string_view::npos) {
      text_end = text_.size();
      return std::nullopt;
    }
    auto close = text_.find("}}", open + 2);
    if (close == std::string_view::npos) throw TemplateError("template-syntax", "unterminated tag", line_at(open));
    Tag tag{open, close + 2, trim(text_.substr(open + 2, close - open - 2)), line_at(open)};
    text_end = open;
    if (is_block(tag.inner)) {
      std::size_t line_begin = open;
      while (line_begin > 0 && text_[line_begin - 1] != '\n') --line_begin;
      auto line_end = text_.find('\n', tag.end);
      bool alone = trim(text_.substr(line_begin, open - line_begin)).empty() &&
                   trim(text_.substr(tag.end, (line_end == std::string_view::npos ? text_.size() : line_end) -
                                                  tag.end))
                       .empty();
      if (alone && line_begin >= pos_) {
        text_end = line_begin;
        tag.end = line_end == std::string_view::npos ? text_.size() : line_end + 1;
      }
    }
    return tag;
  }

  std::vector<Node> parse_until(const std::string& closer, std::vector<Node>* otherwise = nullptr,
                                int open_line = 0) {
    std::vector<Node> out;
    std::vector<Node>* target = &out;
    while (true) {
      std::size_t text_end = 0;
      auto tag = next_tag(text_end);
      if (text_end > pos_) target->push_back({Node::kText, std::string(text_.substr(pos_, text_end - pos_)), 0, {}, {}});
      if (!tag) {
        pos_ = text_.size();
        if (!closer.empty()) throw TemplateError("template-syntax", "missing {{/" + closer + "}}", open_line);
        return out;
      }
      pos_ = tag->end;
      const std::string& in = tag->inner;
      if (in.empty()) throw TemplateError("template-syntax", "empty tag", tag->line);
      if (in[0] == '/') {
        if (in.substr(1) != closer) throw TemplateError("template-syntax", "unexpected {{" + in + "}}", tag->line);
        return out;
      }
      if (in == "else") {
        if (otherwise == nullptr || target != &out) throw TemplateError("template-syntax", "unexpected {{else}}", tag->line);
        target = otherwise;
        continue;
      }
      if (in[0] == '#') {
        auto space = in.find(' ');
        std::string kw = in.substr(1, space == std::string::npos ? std::string::npos : space - 1);
        std::string arg = space == std::string::npos ? "" : trim(in.substr(space + 1));
        if (arg.empty()) throw TemplateError("template-syntax", "{{#" + kw + "}} needs an argument", tag->line);
        Node n;
        n.line = tag->line;
        n.text = arg;
        if (kw == "each") {
          n.kind = Node::kEach;
          n.body = parse_until("each", nullptr, tag->line);
        } else if (kw == "if" || kw == "unless") {
          n.kind = kw == "if" ? Node::kIf : Node::kUnless;
          n.body = parse_until(kw, &n.otherwise, tag->line);
        } else {
          throw TemplateError("template-syntax", "unknown block '" + kw + "'", tag->line);
        }
        target->push_back(std::move(n));
        continue;
      }
      target->push_back({Node::kValue, in, tag->line, {}, {}});
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

struct Scope {
  const json* value;
  json meta;  // @index, @first, @last inside each
};

class Renderer {
 public:
  explicit Renderer(const json& root) { scopes_.push_back({&root, json::object()}); }

  void render(const std::vector<Node>& nodes, std::string& out) {
    for (const auto& n : nodes) {
      switch (n.kind) {
        case Node::kText:
          out += n.text;
          break;
        case Node::kValue:
          out += scalar(lookup(n.text, n.line), n.text, n.line);
          break;
        case Node::kEach: {
          const json& xs = lookup(n.text, n.line);
          if (!xs.is_array()) throw TemplateError("bad-placeholder", "'" + n.text + "' is not a list", n.line);
          for (std::size_t i = 0; i < xs.size(); ++i) {
            scopes_.push_back({&xs[i], {{"@index", i}, {"@first", i == 0}, {"@last", i + 1 == xs.size()}}});
            render(n.body, out);
            scopes_.pop_back();
          }
          break;
        }
        case Node::kIf:
        case Node::kUnless: {
          bool t = truthy(lookup(n.text, n.line));
          if (n.kind == Node::kUnless) t = !t;
          render(t ? n.body : n.otherwise, out);
          break;
        }
      }
    }
  }

 private:
  const json& lookup(const std::string& path, int line) const {
    if (path == "this") return *scopes_.back().value;
    if (path[0] == '@') {
      for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
        if (it->meta.contains(path)) return it->meta.at(path);
      }
      throw TemplateError("unknown-placeholder", "'" + path + "' used outside {{#each}}", line);
    }
    auto dot = path.find('.');
    std::string head = path.substr(0, dot);
    for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
      if (!it->value->is_object() || !it->value->contains(head)) continue;
      const json* v = &it->value->at(head);
      while (dot != std::string::npos) {
        auto next = path.find('.', dot + 1);
        std::string key = path.substr(dot + 1, next == std::string::npos ? std::string::npos : next - dot - 1);
        if (!v->is_object() || !v->contains(key)) {
          throw TemplateError("unknown-placeholder", "no value for '" + path + "'", line);
        }
        v = &v->at(key);
        dot = next;
      }
      return *v;
    }
    throw TemplateError("unknown-placeholder", "no value for '" + path + "'", line);
  }

  static bool truthy(const json& v) {
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_null()) return false;
    if (v.is_number()) return v.get<double>() != 0.0;
    if (v.is_string()) return !v.get_ref<const std::string&>().empty();
    if (v.is_array() || v.is_object()) return !v.empty();
    return false;
  }

  static std::string scalar(const json& v, const std::string& path, int line) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    if (v.is_number()) return expr::format_number(v.get<double>());
    throw TemplateError("bad-placeholder", "'" + path + "' is not a scalar", line);
  }

  std::vector<Scope> scopes_;
};

}  // namespace

std::string render(std::string_view text, const nlohmann::json& context) {
  auto nodes = Parser(text).parse();
  std::string out;
  Renderer(context).render(nodes, out);
  return out;
}

}  // namespace rdis::codegen
