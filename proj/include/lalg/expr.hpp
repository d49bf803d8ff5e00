#ifndef LALG_EXPR_HPP
#define LALG_EXPR_HPP

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lalg {

/// Syntax error in an expression, carrying the byte offset of the offending token.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// log/sqrt of a negative argument, log(0), or division by zero.
class DomainError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class UnboundVariable : public std::runtime_error {
 public:
  explicit UnboundVariable(const std::string& name)
      : std::runtime_error("unbound variable '" + name + "'"), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

using Env = std::map<std::string, double, std::less<>>;

/// Immutable scalar expression tree over named variables.
///
/// Copies share structure. Arithmetic through the operators below folds
/// constants (0*x -> 0, 1*x -> x, x+0 -> x, numeric subtrees evaluated) but
/// performs no further simplification.
class Expr {
 public:
  enum class Kind { Const, Var, Neg, Sin, Cos, Exp, Log, Sqrt, Add, Sub, Mul, Div, Pow };

  Expr();  // constant zero
  Expr(double value);  // NOLINT: implicit constants read naturally in formulas
  static Expr variable(std::string name);

  Kind kind() const;
  bool is_const() const { return kind() == Kind::Const; }
  bool is_zero() const;
  /// Constant value; only meaningful when is_const().
  double value() const;
  /// Integer exponent of a Pow node.
  int exponent() const;
  const std::string& name() const;
  const Expr& lhs() const;
  const Expr& rhs() const;

  static Expr unary(Kind kind, Expr arg);
  static Expr binary(Kind kind, Expr a, Expr b);
  static Expr power(Expr base, int exponent);

  struct Node;  // opaque

 private:
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr sin(const Expr& a);
Expr cos(const Expr& a);
Expr exp(const Expr& a);
Expr log(const Expr& a);
Expr sqrt(const Expr& a);
Expr pow(const Expr& a, int exponent);

Expr parse(std::string_view text);
double eval(const Expr& e, const Env& env);
Expr diff(const Expr& e, std::string_view var);
/// Fully parenthesised rendering; parse(to_string(e)) evaluates identically to e.
std::string to_string(const Expr& e);
std::set<std::string> variables(const Expr& e);
bool depends_on(const Expr& e, std::string_view var);
/// Replace variables by expressions.
Expr substitute(const Expr& e, const std::map<std::string, Expr, std::less<>>& values);

/// Flat stack program for repeated evaluation against a fixed variable layout.
///
/// Variables not in the layout raise UnboundVariable at compile time, so
/// evaluation never looks names up.
class Program {
 public:
  Program() = default;
  Program(const Expr& e, std::span<const std::string> layout);

  double operator()(std::span<const double> values) const;
  bool is_const() const { return code_.size() == 1 && code_.front().op == Op::Const; }

 private:
  enum class Op : unsigned char { Const, Var, Neg, Sin, Cos, Exp, Log, Sqrt, Add, Sub, Mul, Div, Pow };
  struct Instr {
    Op op;
    int index = 0;
    double value = 0.0;
  };
  void emit(const Expr& e, std::span<const std::string> layout);

  std::vector<Instr> code_{Instr{Op::Const, 0, 0.0}};
  std::size_t depth_ = 1;
};

/// Several expressions compiled against one layout, evaluated together.
class ProgramVector {
 public:
  ProgramVector() = default;
  ProgramVector(const std::vector<Expr>& exprs, std::span<const std::string> layout);

  std::size_t size() const { return programs_.size(); }
  void operator()(std::span<const double> values, double* out) const;
  double operator()(std::size_t k, std::span<const double> values) const { return programs_[k](values); }

 private:
  std::vector<Program> programs_;
  std::vector<double> constants_;  // value of constant entries, 0 elsewhere
  std::vector<std::size_t> live_;  // indices of non-constant entries
};

}  // namespace lalg

#endif  // LALG_EXPR_HPP
