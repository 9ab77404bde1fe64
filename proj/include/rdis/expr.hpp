#pragma once

// Arithmetic binding expressions: number literals, names, + - * /, unary
// minus and the builtins clamp/round/min/max. Values are binary64.

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rdis/error.hpp"

namespace rdis::expr {

enum class BinaryOp { kAdd, kSub, kMul, kDiv };

enum class Builtin { kClamp, kRound, kMin, kMax };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Number {
  double value;
};
struct Name {
  std::string id;
};
struct Negate {
  NodePtr operand;
};
struct Binary {
  BinaryOp op;
  NodePtr lhs;
  NodePtr rhs;
};
struct Call {
  Builtin fn;
  std::vector<NodePtr> args;
};

struct Node {
  std::variant<Number, Name, Negate, Binary, Call> v;
};

/// Immutable expression tree. Copies share structure.
class Expr {
 public:
  Expr() = default;
  explicit Expr(NodePtr root) : root_(std::move(root)) {}

  const Node& root() const { return *root_; }
  bool empty() const { return root_ == nullptr; }

  /// Minimal-parenthesis rendering; parse(to_string()) is structurally equal.
  std::string to_string() const;

  friend bool operator==(const Expr& a, const Expr& b);

 private:
  NodePtr root_;
};

/// Raised by parse() with a 1-based column. Codes: "expr-syntax",
/// "unknown-function", "bad-arity".
class SyntaxError : public Error {
 public:
  SyntaxError(std::string code, std::size_t column, const std::string& message)
      : Error(std::move(code), message), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

using Env = std::map<std::string, double, std::less<>>;

Expr parse(std::string_view text);

/// Throws Error with code "unbound-name", "division-by-zero" or "bad-clamp".
double eval(const Expr& e, const Env& env);

std::set<std::string> free_vars(const Expr& e);

/// Half away from zero.
double round_half_away(double x);

std::string_view builtin_name(Builtin fn);

/// Shortest decimal that round-trips to the same binary64.
std::string format_number(double v);

}  // namespace rdis::expr
