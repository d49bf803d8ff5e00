#include "lalg/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace lalg {

struct Expr::Node {
  Kind kind = Kind::Const;
  double value = 0.0;
  int exponent = 0;
  std::string name;
  std::vector<Expr> kids;  // empty for leaves
};

namespace {

std::shared_ptr<const Expr::Node> make_const_node(double v);

const std::shared_ptr<const Expr::Node>& zero_node() {
  static const auto node = make_const_node(0.0);
  return node;
}

bool is_unary(Expr::Kind k) {
  switch (k) {
    case Expr::Kind::Neg:
    case Expr::Kind::Sin:
    case Expr::Kind::Cos:
    case Expr::Kind::Exp:
    case Expr::Kind::Log:
    case Expr::Kind::Sqrt:
      return true;
    default:
      return false;
  }
}

double apply_unary(Expr::Kind k, double x) {
  switch (k) {
    case Expr::Kind::Neg:
      return -x;
    case Expr::Kind::Sin:
      return std::sin(x);
    case Expr::Kind::Cos:
      return std::cos(x);
    case Expr::Kind::Exp:
      return std::exp(x);
    case Expr::Kind::Log:
      if (!(x > 0.0)) throw DomainError("log of non-positive argument");
      return std::log(x);
    case Expr::Kind::Sqrt:
      if (x < 0.0) throw DomainError("sqrt of negative argument");
      return std::sqrt(x);
    default:
      throw std::logic_error("not a unary node");
  }
}

double apply_binary(Expr::Kind k, double x, double y) {
  switch (k) {
    case Expr::Kind::Add:
      return x + y;
    case Expr::Kind::Sub:
      return x - y;
    case Expr::Kind::Mul:
      return x * y;
    case Expr::Kind::Div:
      if (y == 0.0) throw DomainError("division by zero");
      return x / y;
    default:
      throw std::logic_error("not a binary node");
  }
}

double apply_pow(double x, int k) {
  if (x == 0.0 && k < 0) throw DomainError("division by zero");
  return std::pow(x, k);
}

std::shared_ptr<const Expr::Node> make_const_node(double v) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = Expr::Kind::Const;
  n->value = v;
  return n;
}

}  // namespace

Expr::Expr() : node_(zero_node()) {}
Expr::Expr(double value) : node_(value == 0.0 ? zero_node() : make_const_node(value)) {}

Expr Expr::variable(std::string name) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Var;
  n->name = std::move(name);
  return Expr(std::shared_ptr<const Node>(std::move(n)));
}

Expr::Kind Expr::kind() const { return node_->kind; }
bool Expr::is_zero() const { return node_->kind == Kind::Const && node_->value == 0.0; }
double Expr::value() const { return node_->value; }
int Expr::exponent() const { return node_->exponent; }
const std::string& Expr::name() const { return node_->name; }
const Expr& Expr::lhs() const { return node_->kids.at(0); }
const Expr& Expr::rhs() const { return node_->kids.at(1); }

Expr Expr::unary(Kind kind, Expr arg) {
  if (arg.is_const()) {
    try {
      return Expr(apply_unary(kind, arg.value()));
    } catch (const DomainError&) {
      // left unfolded; evaluation reports the error
    }
  }
  if (kind == Kind::Neg && arg.kind() == Kind::Neg) return arg.lhs();
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->kids = {std::move(arg)};
  return Expr(std::shared_ptr<const Node>(std::move(n)));
}

Expr Expr::binary(Kind kind, Expr a, Expr b) {
  if (a.is_const() && b.is_const()) {
    try {
      return Expr(apply_binary(kind, a.value(), b.value()));
    } catch (const DomainError&) {
    }
  }
  switch (kind) {
    case Kind::Add:
      if (a.is_zero()) return b;
      if (b.is_zero()) return a;
      break;
    case Kind::Sub:
      if (b.is_zero()) return a;
      if (a.is_zero()) return unary(Kind::Neg, std::move(b));
      break;
    case Kind::Mul:
      if (a.is_zero() || b.is_zero()) return Expr();
      if (a.is_const() && a.value() == 1.0) return b;
      if (b.is_const() && b.value() == 1.0) return a;
      if (a.is_const() && a.value() == -1.0) return unary(Kind::Neg, std::move(b));
      if (b.is_const() && b.value() == -1.0) return unary(Kind::Neg, std::move(a));
      break;
    case Kind::Div:
      if (a.is_zero() && !(b.is_const() && b.value() == 0.0)) return Expr();
      if (b.is_const() && b.value() == 1.0) return a;
      break;
    default:
      throw std::logic_error("not a binary kind");
  }
  auto n = std::make_shared<Node>();
  n->kind = kind;
  n->kids = {std::move(a), std::move(b)};
  return Expr(std::shared_ptr<const Node>(std::move(n)));
}

Expr Expr::power(Expr base, int exponent) {
  if (exponent == 0) return Expr(1.0);
  if (exponent == 1) return base;
  if (base.is_const()) {
    try {
      return Expr(apply_pow(base.value(), exponent));
    } catch (const DomainError&) {
    }
  }
  auto n = std::make_shared<Node>();
  n->kind = Kind::Pow;
  n->exponent = exponent;
  n->kids = {std::move(base)};
  return Expr(std::shared_ptr<const Node>(std::move(n)));
}

Expr operator+(const Expr& a, const Expr& b) { return Expr::binary(Expr::Kind::Add, a, b); }
Expr operator-(const Expr& a, const Expr& b) { return Expr::binary(Expr::Kind::Sub, a, b); }
Expr operator*(const Expr& a, const Expr& b) { return Expr::binary(Expr::Kind::Mul, a, b); }
Expr operator/(const Expr& a, const Expr& b) { return Expr::binary(Expr::Kind::Div, a, b); }
Expr operator-(const Expr& a) { return Expr::unary(Expr::Kind::Neg, a); }
Expr sin(const Expr& a) { return Expr::unary(Expr::Kind::Sin, a); }
Expr cos(const Expr& a) { return Expr::unary(Expr::Kind::Cos, a); }
Expr exp(const Expr& a) { return Expr::unary(Expr::Kind::Exp, a); }
Expr log(const Expr& a) { return Expr::unary(Expr::Kind::Log, a); }
Expr sqrt(const Expr& a) { return Expr::unary(Expr::Kind::Sqrt, a); }
Expr pow(const Expr& a, int exponent) { return Expr::power(a, exponent); }

// ---------------------------------------------------------------------------
// Parsing

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Expr parse_all() {
    Expr e = parse_sum();
    skip_ws();
    if (pos_ != text_.size()) throw ParseError("unexpected character '" + std::string(1, text_[pos_]) + "'", pos_);
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool peek(char c) {
    skip_ws();
    return pos_ < text_.size() && text_[pos_] == c;
  }
  bool accept(char c) {
    if (peek(c)) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) throw ParseError(std::string("expected '") + c + "'", pos_);
  }

  Expr parse_sum() {
    Expr e = parse_product();
    for (;;) {
      if (accept('+'))
        e = e + parse_product();
      else if (accept('-'))
        e = e - parse_product();
      else
        return e;
    }
  }

  Expr parse_product() {
    Expr e = parse_unary();
    for (;;) {
      if (accept('*'))
        e = e * parse_unary();
      else if (accept('/'))
        e = e / parse_unary();
      else
        return e;
    }
  }

  Expr parse_unary() {
    if (accept('-')) return -parse_unary();
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_atom();
    while (accept('^')) base = pow(base, parse_exponent());
    return base;
  }

  int parse_exponent() {
    skip_ws();
    bool paren = accept('(');
    int sign = 1;
    if (accept('-'))
      sign = -1;
    else
      accept('+');
    skip_ws();
    std::size_t start = pos_;
    if (pos_ >= text_.size() || !(std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.'))
      throw ParseError("non-constant exponent; exponents must be integer literals", start);
    double v = parse_number_literal();
    if (v != std::floor(v) || std::abs(v) > 1e6) throw ParseError("exponent must be an integer literal", start);
    if (paren) expect(')');
    return sign * static_cast<int>(v);
  }

  double parse_number_literal() {
    std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    };
    digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      digits();
    }
    if (pos_ == start || (pos_ == start + 1 && text_[start] == '.')) throw ParseError("malformed number", start);
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      std::size_t exp_start = pos_;
      digits();
      if (pos_ == exp_start) pos_ = save;
    }
    return std::strtod(std::string(text_.substr(start, pos_ - start)).c_str(), nullptr);
  }

  Expr parse_atom() {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = parse_sum();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return Expr(parse_number_literal());
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      std::string ident(text_.substr(start, pos_ - start));
      if (peek('(')) {
        Expr::Kind kind;
        if (ident == "sin")
          kind = Expr::Kind::Sin;
        else if (ident == "cos")
          kind = Expr::Kind::Cos;
        else if (ident == "exp")
          kind = Expr::Kind::Exp;
        else if (ident == "log")
          kind = Expr::Kind::Log;
        else if (ident == "sqrt")
          kind = Expr::Kind::Sqrt;
        else
          throw ParseError("unknown function '" + ident + "'", start);
        expect('(');
        Expr arg = parse_sum();
        expect(')');
        return Expr::unary(kind, arg);
      }
      return Expr::variable(ident);
    }
    throw ParseError("unexpected character '" + std::string(1, c) + "'", pos_);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse(std::string_view text) { return Parser(text).parse_all(); }

// ---------------------------------------------------------------------------
// Evaluation, differentiation, printing

double eval(const Expr& e, const Env& env) {
  using K = Expr::Kind;
  switch (e.kind()) {
    case K::Const:
      return e.value();
    case K::Var: {
      auto it = env.find(e.name());
      if (it == env.end()) throw UnboundVariable(e.name());
      return it->second;
    }
    case K::Pow:
      return apply_pow(eval(e.lhs(), env), e.exponent());
    default:
      if (is_unary(e.kind())) return apply_unary(e.kind(), eval(e.lhs(), env));
      return apply_binary(e.kind(), eval(e.lhs(), env), eval(e.rhs(), env));
  }
}

Expr diff(const Expr& e, std::string_view var) {
  using K = Expr::Kind;
  if (e.kind() == K::Const) return Expr();
  if (e.kind() == K::Var) return Expr(e.name() == var ? 1.0 : 0.0);
  const Expr& a = e.lhs();
  switch (e.kind()) {
    case K::Const:
    case K::Var:
      break;
    case K::Neg:
      return -diff(a, var);
    case K::Sin:
      return cos(a) * diff(a, var);
    case K::Cos:
      return -(sin(a) * diff(a, var));
    case K::Exp:
      return e * diff(a, var);
    case K::Log:
      return diff(a, var) / a;
    case K::Sqrt:
      return diff(a, var) / (Expr(2.0) * e);
    case K::Pow:
      return Expr(static_cast<double>(e.exponent())) * pow(a, e.exponent() - 1) * diff(a, var);
    case K::Add:
      return diff(a, var) + diff(e.rhs(), var);
    case K::Sub:
      return diff(a, var) - diff(e.rhs(), var);
    case K::Mul:
      return diff(a, var) * e.rhs() + a * diff(e.rhs(), var);
    case K::Div: {
      const Expr& b = e.rhs();
      return (diff(a, var) * b - a * diff(b, var)) / pow(b, 2);
    }
  }
  return Expr();
}

namespace {

void render(const Expr& e, std::string& out) {
  using K = Expr::Kind;
  switch (e.kind()) {
    case K::Const: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", std::abs(e.value()));
      if (std::signbit(e.value())) {
        out += "(-";
        out += buf;
        out += ')';
      } else {
        out += buf;
      }
      return;
    }
    case K::Var:
      out += e.name();
      return;
    case K::Neg:
      out += "(-";
      render(e.lhs(), out);
      out += ')';
      return;
    case K::Pow:
      out += '(';
      render(e.lhs(), out);
      out += "^(" + std::to_string(e.exponent()) + "))";
      return;
    case K::Sin:
    case K::Cos:
    case K::Exp:
    case K::Log:
    case K::Sqrt: {
      static const char* names[] = {"sin", "cos", "exp", "log", "sqrt"};
      out += names[static_cast<int>(e.kind()) - static_cast<int>(K::Sin)];
      out += '(';
      render(e.lhs(), out);
      out += ')';
      return;
    }
    default: {
      static const char ops[] = {'+', '-', '*', '/'};
      out += '(';
      render(e.lhs(), out);
      out += ops[static_cast<int>(e.kind()) - static_cast<int>(K::Add)];
      render(e.rhs(), out);
      out += ')';
    }
  }
}

void collect(const Expr& e, std::set<std::string>& out) {
  using K = Expr::Kind;
  switch (e.kind()) {
    case K::Const:
      return;
    case K::Var:
      out.insert(e.name());
      return;
    default:
      collect(e.lhs(), out);
      if (!is_unary(e.kind()) && e.kind() != K::Pow) collect(e.rhs(), out);
  }
}

}  // namespace

std::string to_string(const Expr& e) {
  std::string out;
  render(e, out);
  return out;
}

std::set<std::string> variables(const Expr& e) {
  std::set<std::string> out;
  collect(e, out);
  return out;
}

bool depends_on(const Expr& e, std::string_view var) {
  using K = Expr::Kind;
  switch (e.kind()) {
    case K::Const:
      return false;
    case K::Var:
      return e.name() == var;
    default:
      if (depends_on(e.lhs(), var)) return true;
      return !is_unary(e.kind()) && e.kind() != K::Pow && depends_on(e.rhs(), var);
  }
}

Expr substitute(const Expr& e, const std::map<std::string, Expr, std::less<>>& values) {
  using K = Expr::Kind;
  switch (e.kind()) {
    case K::Const:
      return e;
    case K::Var: {
      auto it = values.find(e.name());
      return it == values.end() ? e : it->second;
    }
    case K::Pow:
      return pow(substitute(e.lhs(), values), e.exponent());
    default:
      if (is_unary(e.kind())) return Expr::unary(e.kind(), substitute(e.lhs(), values));
      return Expr::binary(e.kind(), substitute(e.lhs(), values), substitute(e.rhs(), values));
  }
}

// ---------------------------------------------------------------------------
// Program

Program::Program(const Expr& e, std::span<const std::string> layout) {
  code_.clear();
  emit(e, layout);
  std::size_t d = 0;
  depth_ = 0;
  for (const auto& in : code_) {
    switch (in.op) {
      case Op::Const:
      case Op::Var:
        ++d;
        break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
        --d;
        break;
      default:
        break;
    }
    depth_ = std::max(depth_, d);
  }
}

void Program::emit(const Expr& e, std::span<const std::string> layout) {
  using K = Expr::Kind;
  switch (e.kind()) {
    case K::Const:
      code_.push_back({Op::Const, 0, e.value()});
      return;
    case K::Var: {
      auto it = std::find(layout.begin(), layout.end(), e.name());
      if (it == layout.end()) throw UnboundVariable(e.name());
      code_.push_back({Op::Var, static_cast<int>(it - layout.begin()), 0.0});
      return;
    }
    case K::Pow:
      emit(e.lhs(), layout);
      code_.push_back({Op::Pow, e.exponent(), 0.0});
      return;
    default:
      emit(e.lhs(), layout);
      if (!is_unary(e.kind())) emit(e.rhs(), layout);
      code_.push_back({static_cast<Op>(static_cast<int>(e.kind())), 0, 0.0});
  }
}

double Program::operator()(std::span<const double> values) const {
  constexpr std::size_t kInline = 64;
  double inline_stack[kInline] = {};
  std::vector<double> heap;
  double* stack = inline_stack;
  if (depth_ > kInline) {
    heap.resize(depth_);
    stack = heap.data();
  }
  std::size_t sp = 0;
  for (const auto& in : code_) {
    switch (in.op) {
      case Op::Const:
        stack[sp++] = in.value;
        break;
      case Op::Var:
        stack[sp++] = values[static_cast<std::size_t>(in.index)];
        break;
      case Op::Neg:
        stack[sp - 1] = -stack[sp - 1];
        break;
      case Op::Sin:
      case Op::Cos:
      case Op::Exp:
      case Op::Log:
      case Op::Sqrt:
        stack[sp - 1] = apply_unary(static_cast<Expr::Kind>(static_cast<int>(in.op)), stack[sp - 1]);
        break;
      case Op::Pow:
        stack[sp - 1] = apply_pow(stack[sp - 1], in.index);
        break;
      default:
        --sp;
        stack[sp - 1] = apply_binary(static_cast<Expr::Kind>(static_cast<int>(in.op)), stack[sp - 1], stack[sp]);
    }
  }
  return stack[0];
}

ProgramVector::ProgramVector(const std::vector<Expr>& exprs, std::span<const std::string> layout) {
  programs_.reserve(exprs.size());
  constants_.assign(exprs.size(), 0.0);
  for (std::size_t k = 0; k < exprs.size(); ++k) {
    programs_.emplace_back(exprs[k], layout);
    if (exprs[k].is_const())
      constants_[k] = exprs[k].value();
    else
      live_.push_back(k);
  }
}

void ProgramVector::operator()(std::span<const double> values, double* out) const {
  std::copy(constants_.begin(), constants_.end(), out);
  for (std::size_t k : live_) out[k] = programs_[k](values);
}

}  // namespace lalg
