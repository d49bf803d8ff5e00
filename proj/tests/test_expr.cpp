#include <doctest.h>

#include <cmath>
#include <random>

#include "lalg/expr.hpp"

using namespace lalg;

TEST_CASE("parse builds the expected tree") {
  Expr e = parse("x*y + sin(t1)");
  CHECK(e.kind() == Expr::Kind::Add);
  CHECK(e.lhs().kind() == Expr::Kind::Mul);
  CHECK(e.rhs().kind() == Expr::Kind::Sin);
  CHECK(variables(e) == std::set<std::string>{"t1", "x", "y"});
}

TEST_CASE("parse errors carry offsets") {
  try {
    parse("x +");
    FAIL("expected a parse error");
  } catch (const ParseError& err) {
    CHECK(err.offset() == 3);
  }
  CHECK_THROWS_AS(parse("2^x"), ParseError);
  CHECK_THROWS_AS(parse("2^1.5"), ParseError);
  CHECK_THROWS_AS(parse("foo(x)"), ParseError);
  CHECK_THROWS_AS(parse("(x"), ParseError);
  CHECK_THROWS_AS(parse("x y"), ParseError);
  CHECK_THROWS_AS(parse(""), ParseError);
}

TEST_CASE("precedence") {
  Env env{{"x", 2.0}};
  CHECK(eval(parse("-x^2"), env) == -4.0);
  CHECK(eval(parse("2*3+4"), env) == 10.0);
  CHECK(eval(parse("2+3*4"), env) == 14.0);
  CHECK(eval(parse("8/2/2"), env) == 2.0);
  CHECK(eval(parse("x^-1"), env) == 0.5);
  CHECK(eval(parse("x^(-2)"), env) == 0.25);
  CHECK(eval(parse("2^3^2"), env) == 64.0);
  CHECK(eval(parse("1.5e2"), env) == 150.0);
}

TEST_CASE("eval") {
  CHECK(eval(parse("x^2"), {{"x", 3.0}}) == 9.0);
  CHECK(eval(parse("sin(x)"), {{"x", 0.0}}) == 0.0);
  CHECK_THROWS_AS(eval(parse("1/x"), {{"x", 0.0}}), DomainError);
  CHECK_THROWS_AS(eval(parse("log(x)"), {{"x", 0.0}}), DomainError);
  CHECK_THROWS_AS(eval(parse("sqrt(x)"), {{"x", -1.0}}), DomainError);
  CHECK_THROWS_AS(eval(parse("x^-1"), {{"x", 0.0}}), DomainError);
  CHECK_THROWS_AS(eval(parse("x+y"), {{"x", 0.0}}), UnboundVariable);
  // a constant domain error is not folded away at parse time
  CHECK_THROWS_AS(eval(parse("1/0"), {}), DomainError);
}

TEST_CASE("diff examples") {
  CHECK(eval(diff(parse("x^2"), "x"), {{"x", 3.0}}) == 6.0);
  CHECK(eval(diff(parse("sin(x*y)"), "y"), {{"x", 2.0}, {"y", 0.0}}) == 2.0);
  CHECK(diff(parse("sin(x)*exp(y)"), "z").is_zero());
}

namespace {

// Random expressions over x, y whose evaluation stays in-domain on [0.5, 1.5]^2.
Expr random_expr(std::mt19937_64& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 2 : 11);
  std::uniform_real_distribution<double> coeff(-2.0, 2.0);
  Expr x = Expr::variable("x"), y = Expr::variable("y");
  switch (pick(rng)) {
    case 0: return x;
    case 1: return y;
    case 2: return Expr(coeff(rng));
    case 3: return random_expr(rng, depth - 1) + random_expr(rng, depth - 1);
    case 4: return random_expr(rng, depth - 1) - random_expr(rng, depth - 1);
    case 5: return random_expr(rng, depth - 1) * random_expr(rng, depth - 1);
    case 6: {
      Expr d = random_expr(rng, depth - 1);
      return random_expr(rng, depth - 1) / (Expr(3.0) + d * d);
    }
    case 7: return sin(random_expr(rng, depth - 1));
    case 8: return cos(random_expr(rng, depth - 1));
    case 9: return exp(sin(random_expr(rng, depth - 1)));
    case 10: {
      Expr d = random_expr(rng, depth - 1);
      return pick(rng) % 2 ? log(Expr(1.0) + d * d) : sqrt(Expr(1.0) + d * d);
    }
    default: return pow(random_expr(rng, depth - 1), std::uniform_int_distribution<int>(-2, 3)(rng)) ;
  }
}

}  // namespace

TEST_CASE("diff agrees with central differences on random trees") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pt(0.5, 1.5);
  int tested = 0;
  while (tested < 50) {
    Expr e = random_expr(rng, 4);
    Env env{{"x", pt(rng)}, {"y", pt(rng)}};
    double h = 1e-5;
    try {
      for (const char* v : {"x", "y"}) {
        Env lo = env, hi = env;
        lo[v] -= h;
        hi[v] += h;
        double fd = (eval(e, hi) - eval(e, lo)) / (2 * h);
        double d = eval(diff(e, v), env);
        if (std::abs(d) > 1e4) throw DomainError("steep");  // near a pole of x^-k
        CHECK(std::abs(d - fd) < 1e-6 * (1 + std::abs(eval(e, env))) + 1e-9 * std::abs(d));
      }
      ++tested;
    } catch (const DomainError&) {
    }
  }
}

TEST_CASE("diff of an independent variable vanishes and round-trip printing") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 100; ++k) {
    Expr e = random_expr(rng, 4);
    CHECK(diff(e, "z").is_zero());
    if (!depends_on(e, "x")) CHECK(diff(e, "x").is_zero());
    Env env{{"x", 0.7}, {"y", 1.3}};
    try {
      double v = eval(e, env);
      CHECK(eval(parse(to_string(e)), env) == v);
      std::vector<std::string> layout{"x", "y"};
      Program prog(e, layout);
      std::vector<double> vals{0.7, 1.3};
      CHECK(prog(vals) == v);
    } catch (const DomainError&) {
    }
  }
}

TEST_CASE("substitute") {
  Expr e = substitute(parse("x*y"), {{"x", parse("t+1")}});
  CHECK(eval(e, {{"t", 1.0}, {"y", 3.0}}) == 6.0);
}
