#include "rdis/expr.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <system_error>

namespace rdis::expr {
namespace {

struct BuiltinInfo {
  std::string_view name;
  Builtin fn;
  std::size_t arity;
};

constexpr std::array<BuiltinInfo, 4> kBuiltins{{
    {"clamp", Builtin::kClamp, 3},
    {"round", Builtin::kRound, 1},
    {"min", Builtin::kMin, 2},
    {"max", Builtin::kMax, 2},
}};

bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

NodePtr make(auto&& alt) {
  return std::make_shared<const Node>(Node{std::forward<decltype(alt)>(alt)});
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  NodePtr parse_all() {
    skip_ws();
    if (at_end()) fail("expected expression");
    auto root = parse_sum();
    skip_ws();
    if (!at_end()) fail(std::string("unexpected '") + text_[pos_] + "'");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& msg, std::string code = "expr-syntax") const {
    throw SyntaxError(std::move(code), pos_ + 1,
                      "column " + std::to_string(pos_ + 1) + ": " + msg);
  }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }

  void skip_ws() {
    while (!at_end() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
                         text_[pos_] == '\r')) {
      ++pos_;
    }
  }

  bool accept(char c) {
    skip_ws();
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (at_end()) fail(std::string("expected '") + c + "' before end of input");
      fail(std::string("expected '") + c + "' but found '" + peek() + "'");
    }
  }

  NodePtr parse_sum() {
    auto lhs = parse_product();
    for (;;) {
      skip_ws();
      char c = peek();
      if (c != '+' && c != '-') return lhs;
      ++pos_;
      auto rhs = parse_product();
      lhs = make(Binary{c == '+' ? BinaryOp::kAdd : BinaryOp::kSub, lhs, rhs});
    }
  }

  NodePtr parse_product() {
    auto lhs = parse_unary();
    for (;;) {
      skip_ws();
      char c = peek();
      if (c != '*' && c != '/') return lhs;
      ++pos_;
      auto rhs = parse_unary();
      lhs = make(Binary{c == '*' ? BinaryOp::kMul : BinaryOp::kDiv, lhs, rhs});
    }
  }

  NodePtr parse_unary() {
    skip_ws();
    if (peek() == '-') {
      ++pos_;
      return make(Negate{parse_unary()});
    }
    if (peek() == '+') {
      ++pos_;
      return parse_unary();
    }
    return parse_primary();
  }

  NodePtr parse_primary() {
    skip_ws();
    if (at_end()) fail("expected expression before end of input");
    char c = peek();
    if (c == '(') {
      ++pos_;
      auto inner = parse_sum();
      expect(')');
      return inner;
    }
    if (is_digit(c) || c == '.') return parse_number();
    if (is_ident_start(c)) return parse_name_or_call();
    fail(std::string("unexpected '") + c + "'");
  }

  NodePtr parse_number() {
    std::size_t start = pos_;
    while (is_digit(peek())) ++pos_;
    if (peek() == '.') {
      ++pos_;
      while (is_digit(peek())) ++pos_;
    }
    if (peek() == 'e' || peek() == 'E') {
      std::size_t save = pos_;
      ++pos_;
      if (peek() == '+' || peek() == '-') ++pos_;
      if (!is_digit(peek())) {
        pos_ = save;
        fail("malformed exponent");
      }
      while (is_digit(peek())) ++pos_;
    }
    double value = 0.0;
    auto token = text_.substr(start, pos_ - start);
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
      pos_ = start;
      fail("malformed number '" + std::string(token) + "'");
    }
    return make(Number{value});
  }

  NodePtr parse_name_or_call() {
    std::size_t start = pos_;
    while (is_ident_char(peek())) ++pos_;
    // Dotted names address prior call outputs, e.g. getEncoders.left.
    while (peek() == '.' && pos_ + 1 < text_.size() && is_ident_start(text_[pos_ + 1])) {
      ++pos_;
      while (is_ident_char(peek())) ++pos_;
    }
    std::string id(text_.substr(start, pos_ - start));
    std::size_t after_name = pos_;
    skip_ws();
    if (peek() != '(') {
      pos_ = after_name;
      return make(Name{std::move(id)});
    }
    const BuiltinInfo* info = nullptr;
    for (const auto& b : kBuiltins) {
      if (b.name == id) info = &b;
    }
    if (info == nullptr) {
      pos_ = start;
      fail("unknown function '" + id + "'", "unknown-function");
    }
    ++pos_;  // '('
    std::vector<NodePtr> args;
    if (!accept(')')) {
      do {
        args.push_back(parse_sum());
      } while (accept(','));
      expect(')');
    }
    if (args.size() != info->arity) {
      pos_ = start;
      fail(id + " expects " + std::to_string(info->arity) + " argument(s), got " +
               std::to_string(args.size()),
           "bad-arity");
    }
    return make(Call{info->fn, std::move(args)});
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

int precedence(const Node& n) {
  if (const auto* b = std::get_if<Binary>(&n.v)) {
    return (b->op == BinaryOp::kAdd || b->op == BinaryOp::kSub) ? 1 : 2;
  }
  if (std::holds_alternative<Negate>(n.v)) return 3;
  if (const auto* num = std::get_if<Number>(&n.v); num != nullptr && std::signbit(num->value)) {
    return 3;
  }
  return 4;
}

void render(const Node& n, std::string& out) {
  struct Visitor {
    std::string& out;
    void operator()(const Number& x) { out += format_number(x.value); }
    void operator()(const Name& x) { out += x.id; }
    void operator()(const Negate& x) {
      out += '-';
      bool paren = precedence(*x.operand) < 3;
      if (paren) out += '(';
      render(*x.operand, out);
      if (paren) out += ')';
    }
    void operator()(const Binary& x) {
      static constexpr std::array<std::string_view, 4> kOps{" + ", " - ", " * ", " / "};
      int p = (x.op == BinaryOp::kAdd || x.op == BinaryOp::kSub) ? 1 : 2;
      bool lparen = precedence(*x.lhs) < p;
      bool rparen = precedence(*x.rhs) <= p;
      if (lparen) out += '(';
      render(*x.lhs, out);
      if (lparen) out += ')';
      out += kOps[static_cast<std::size_t>(x.op)];
      if (rparen) out += '(';
      render(*x.rhs, out);
      if (rparen) out += ')';
    }
    void operator()(const Call& x) {
      out += builtin_name(x.fn);
      out += '(';
      for (std::size_t i = 0; i < x.args.size(); ++i) {
        if (i != 0) out += ", ";
        render(*x.args[i], out);
      }
      out += ')';
    }
  };
  std::visit(Visitor{out}, n.v);
}

bool nodes_equal(const Node& a, const Node& b) {
  if (a.v.index() != b.v.index()) return false;
  return std::visit(
      [&b](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b.v);
        if constexpr (std::is_same_v<T, Number>) {
          return x.value == y.value;
        } else if constexpr (std::is_same_v<T, Name>) {
          return x.id == y.id;
        } else if constexpr (std::is_same_v<T, Negate>) {
          return nodes_equal(*x.operand, *y.operand);
        } else if constexpr (std::is_same_v<T, Binary>) {
          return x.op == y.op && nodes_equal(*x.lhs, *y.lhs) && nodes_equal(*x.rhs, *y.rhs);
        } else {
          if (x.fn != y.fn || x.args.size() != y.args.size()) return false;
          for (std::size_t i = 0; i < x.args.size(); ++i) {
            if (!nodes_equal(*x.args[i], *y.args[i])) return false;
          }
          return true;
        }
      },
      a.v);
}

double eval_node(const Node& n, const Env& env) {
  struct Visitor {
    const Env& env;
    double operator()(const Number& x) const { return x.value; }
    double operator()(const Name& x) const {
      auto it = env.find(x.id);
      if (it == env.end()) throw Error("unbound-name", "unbound name '" + x.id + "'");
      return it->second;
    }
    double operator()(const Negate& x) const { return -eval_node(*x.operand, env); }
    double operator()(const Binary& x) const {
      double l = eval_node(*x.lhs, env);
      double r = eval_node(*x.rhs, env);
      switch (x.op) {
        case BinaryOp::kAdd: return l + r;
        case BinaryOp::kSub: return l - r;
        case BinaryOp::kMul: return l * r;
        case BinaryOp::kDiv:
          if (r == 0.0) throw Error("division-by-zero", "division by zero");
          return l / r;
      }
      return 0.0;
    }
    double operator()(const Call& x) const {
      switch (x.fn) {
        case Builtin::kRound: return round_half_away(eval_node(*x.args[0], env));
        case Builtin::kMin: {
          double a = eval_node(*x.args[0], env);
          double b = eval_node(*x.args[1], env);
          return b < a ? b : a;
        }
        case Builtin::kMax: {
          double a = eval_node(*x.args[0], env);
          double b = eval_node(*x.args[1], env);
          return b > a ? b : a;
        }
        case Builtin::kClamp: {
          double v = eval_node(*x.args[0], env);
          double lo = eval_node(*x.args[1], env);
          double hi = eval_node(*x.args[2], env);
          if (lo > hi) {
            throw Error("bad-clamp", "clamp bounds inverted: lo " + format_number(lo) +
                                         " > hi " + format_number(hi));
          }
          return v < lo ? lo : (v > hi ? hi : v);
        }
      }
      return 0.0;
    }
  };
  return std::visit(Visitor{env}, n.v);
}

void collect(const Node& n, std::set<std::string>& out) {
  std::visit(
      [&out](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Name>) {
          out.insert(x.id);
        } else if constexpr (std::is_same_v<T, Negate>) {
          collect(*x.operand, out);
        } else if constexpr (std::is_same_v<T, Binary>) {
          collect(*x.lhs, out);
          collect(*x.rhs, out);
        } else if constexpr (std::is_same_v<T, Call>) {
          for (const auto& a : x.args) collect(*a, out);
        }
      },
      n.v);
}

}  // namespace

std::string Expr::to_string() const {
  std::string out;
  if (root_) render(*root_, out);
  return out;
}

bool operator==(const Expr& a, const Expr& b) {
  if (a.root_ == b.root_) return true;
  if (!a.root_ || !b.root_) return false;
  return nodes_equal(*a.root_, *b.root_);
}

Expr parse(std::string_view text) { return Expr(Parser(text).parse_all()); }

double eval(const Expr& e, const Env& env) {
  if (e.empty()) throw Error("empty-expression", "cannot evaluate an empty expression");
  return eval_node(e.root(), env);
}

std::set<std::string> free_vars(const Expr& e) {
  std::set<std::string> out;
  if (!e.empty()) collect(e.root(), out);
  return out;
}

double round_half_away(double x) { return std::round(x); }

std::string_view builtin_name(Builtin fn) {
  for (const auto& b : kBuiltins) {
    if (b.fn == fn) return b.name;
  }
  return "?";
}

std::string format_number(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace rdis::expr
