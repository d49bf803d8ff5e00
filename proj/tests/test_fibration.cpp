#include <doctest.h>

#include <cmath>

#include "lalg/fibration.hpp"

using namespace lalg;

namespace {

Expr V(const char* n) { return Expr::variable(n); }

// T R^3 extended by a line bundle with connection form d(xyz) and cocycle exp(-xyz) mu,
// mu = dx^dy + dy^dz closed; optionally perturb Lambda_xy by z (not closed).
struct RepExample {
  Algebroid base, ext;
  Fibration F;
};

RepExample rep_example(bool perturb = false) {
  Chart c = box_chart({"x", "y", "z"}, -1, 1);
  Algebroid T = make_tangent(c);
  Expr phi = parse("x*y*z");
  std::vector<Algebroid::Matrix> action;
  for (const char* v : {"x", "y", "z"}) action.push_back({{diff(phi, v)}});
  Expr w = exp(-phi);
  std::vector<std::vector<std::vector<Expr>>> lambda(3, std::vector<std::vector<Expr>>(3));
  lambda[0][1] = {perturb ? w + V("z") : w};
  lambda[1][2] = {w};
  lambda[0][2] = {Expr()};
  Algebroid E = make_rep_extension(T, action, lambda);
  return {T, E, extension_fibration(E, T, 1)};
}

Algebroid::Matrix planar(const Expr& p) { return {{Expr(), p}, {-p, Expr()}}; }

}  // namespace

TEST_CASE("product fibration is flat and trivial") {
  Chart c = box_chart({"x", "y"}, -1, 1);
  Algebroid B = make_tangent(c);
  Fibration F = product_fibration(B, make_lie_algebra(so3_constants()));
  auto rep = validate(F, 1e-12);
  CHECK(rep.pass);
  for (const auto& it : rep.items)
    if (it.name != "kernel_independence") CHECK(it.value == 0.0);
  auto w = curvature(F);
  for (int s = 0; s < 3; ++s) CHECK(w.component(0, 1, s).is_zero());
  auto id = identity_residuals(F, 10, 1e-12);
  CHECK(id.pass);
  // D reduces to differentiating kappa's coefficients along the base field
  Section alpha(B, {parse("y"), parse("x^2")});
  auto dk = covariant_derivative(F, alpha, {parse("x*y"), Expr(), parse("sin(y)")});
  Env env{{"x", 0.3}, {"y", -0.6}};
  CHECK(eval(dk[0], env) == doctest::Approx(-0.6 * -0.6 + 0.09 * 0.3));
  CHECK(eval(dk[1], env) == 0.0);
  CHECK(eval(dk[2], env) == doctest::Approx(0.09 * std::cos(-0.6)));
}

TEST_CASE("default splitting and kernel frame") {
  Chart c = box_chart({"x", "y"}, -1, 1);
  Algebroid B = make_tangent(c);
  Algebroid E = make_product(B, make_lie_algebra(so3_constants()));
  Algebroid::Matrix pi(2, std::vector<Expr>(5));
  pi[0][0] = pi[1][1] = Expr(1.0);
  Fibration F = make_fibration(E, B, pi);
  CHECK(F.kernel_rank() == 3);
  CHECK(validate(F, 1e-12).pass);
}

TEST_CASE("Jacobi extension over a symplectic plane") {
  Chart c = box_chart({"x", "y"}, -1, 1);
  auto pi = planar(Expr(1.0));
  Algebroid B = make_cotangent_poisson(c, pi);
  Algebroid J = make_jacobi_extension(c, pi);
  Fibration F = extension_fibration(J, B, 1);
  CHECK(validate(F, 1e-10).pass);
  auto w = curvature(F);
  REQUIRE(w.comps[0][1].size() == 1);
  CHECK(w.comps[0][1][0].is_const());
  CHECK(w.comps[0][1][0].value() == 1.0);
  // D_alpha f = L_{Pi# alpha} f
  Section alpha(B, {parse("x"), parse("y^2")});
  Expr f = parse("x*exp(y)");
  auto df = covariant_derivative(F, alpha, {f});
  Expr expect = apply_field(c, anchor_apply(B, alpha), f);
  for (const auto& p : sample_points(c, 10, 4)) {
    Env env{{"x", p[0]}, {"y", p[1]}};
    CHECK(eval(df[0], env) == doctest::Approx(eval(expect, env)));
  }
  CHECK(identity_residuals(F, 20, 1e-10).pass);
}

TEST_CASE("Jacobi extension of a non-constant bivector validates") {
  Chart c = box_chart({"x", "y"}, -1, 1);
  auto pi = planar(parse("1+x^2"));
  Fibration F = extension_fibration(make_jacobi_extension(c, pi), make_cotangent_poisson(c, pi), 1);
  CHECK(validate(F, 1e-10).pass);
  CHECK(identity_residuals(F, 20, 1e-8).pass);
}

TEST_CASE("representation extension: round trip, curvature, identities") {
  RepExample ex = rep_example();
  const Fibration& F = ex.F;
  CHECK(validate(F, 1e-10).pass);
  auto G = connection_coefficients(F);
  Expr phi = parse("x*y*z");
  const char* names[] = {"x", "y", "z"};
  auto w = curvature(F);
  for (const auto& p : sample_points(F.total.chart(), 10, 2)) {
    Env env{{"x", p[0]}, {"y", p[1]}, {"z", p[2]}};
    for (int i = 0; i < 3; ++i) CHECK(eval(G[i][0][0], env) == doctest::Approx(eval(diff(phi, names[i]), env)));
    double e = std::exp(-p[0] * p[1] * p[2]);
    CHECK(eval(w.component(0, 1, 0), env) == doctest::Approx(e));
    CHECK(eval(w.component(1, 2, 0), env) == doctest::Approx(e));
    CHECK(std::abs(eval(w.component(0, 2, 0), env)) < 1e-15);
  }
  auto id = identity_residuals(F, 50, 1e-8);
  CHECK(id.curvature_identity < 1e-8);
  CHECK(id.bianchi < 1e-8);

  auto bad = identity_residuals(rep_example(true).F, 50, 1e-8);
  CHECK(bad.bianchi > 1e-3);
  CHECK_FALSE(bad.pass);
}

TEST_CASE("curvature changes by d_D Delta under a change of splitting") {
  RepExample ex = rep_example();
  const Fibration& F = ex.F;
  std::vector<Expr> delta{parse("0.1*y*z"), parse("0.2*x^2"), parse("0.05*sin(x+z)")};
  Algebroid::Matrix sigma = F.sigma;
  for (int i = 0; i < 3; ++i) sigma[0][i] = delta[i];
  Fibration F2 = with_splitting(F, sigma);
  CHECK(validate(F2, 1e-10).pass);
  auto w1 = curvature(F), w2 = curvature(F2);
  const char* names[] = {"x", "y", "z"};
  Expr phi = parse("x*y*z");
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      // tangent frame: [e_i, e_j] = 0, D_i f = d_i f + f d_i phi; abelian kernel
      Expr dD = diff(delta[j], names[i]) + delta[j] * diff(phi, names[i]) - diff(delta[i], names[j]) -
                delta[i] * diff(phi, names[j]);
      for (const auto& p : sample_points(F.total.chart(), 20, 6)) {
        Env env{{"x", p[0]}, {"y", p[1]}, {"z", p[2]}};
        CHECK(std::abs(eval(w2.component(i, j, 0), env) - eval(w1.component(i, j, 0), env) - eval(dD, env)) < 1e-8);
      }
    }
}

TEST_CASE("a splitting that is not a right inverse fails validation") {
  RepExample ex = rep_example();
  Algebroid::Matrix sigma = ex.F.sigma;
  sigma[1][0] = Expr(2.0);
  Fibration F2 = with_splitting(ex.F, sigma);
  auto rep = validate(F2, 1e-8);
  CHECK_FALSE(rep.pass);
  CHECK(rep.value("pi_sigma") == doctest::Approx(1.0));
}

TEST_CASE("lift in a product fibration") {
  Chart c = box_chart({"x", "y"}, -2, 2);
  Algebroid B = make_tangent(c);
  Fibration F = product_fibration(B, make_lie_algebra(so3_constants()));
  const int N = 32;
  Cube base = tangent_lift(B, {parse("sin(3.141592653589793*t1)*sin(3.141592653589793*t2)"), parse("t1*t2*(1-t1)*(1-t2)")}, 2, N);
  Cube init = zero_cube(F.total, 1, N, base.basepoint());
  Cube lift = lift_cube(F, base, init);
  double dev = 0.0;
  for (std::size_t idx = 0; idx < lift.grid().size(); ++idx)
    for (int k = 0; k < 2; ++k) {
      Eigen::VectorXd a = lift.component(k).row(idx).transpose();
      dev = std::max(dev, (a.head(2) - base.component(k).row(idx).transpose()).norm());
      CHECK(a.tail(3).norm() < 1e-14);
    }
  CHECK(dev < 5.0 / (N * N));
  CHECK((lift.gamma() - base.gamma()).cwiseAbs().maxCoeff() < 1e-5);

  Cube zl = lift_cube(F, zero_cube(B, 2, N, base.basepoint()), init);
  CHECK(cube_distance(zl, zero_cube(F.total, 2, N, base.basepoint())) == 0.0);
}

TEST_CASE("parallel transport") {
  RepExample ex = rep_example();
  Algebroid T = ex.base;
  Cube path = tangent_lift(T, {parse("0.5*sin(2*t1)"), parse("t1^2 - 0.3"), parse("0.2 + 0.4*t1")}, 1, 64);
  Eigen::VectorXd v(1);
  v << 1.5;
  Eigen::VectorXd w = parallel_transport(ex.F, path, v);
  auto phi = [](const Eigen::VectorXd& x) { return x[0] * x[1] * x[2]; };
  Eigen::VectorXd x0 = path.gamma().row(0).transpose(), x1 = path.gamma().row(64).transpose();
  CHECK(w[0] == doctest::Approx(1.5 * std::exp(phi(x1) - phi(x0))).epsilon(1e-6));
  Eigen::VectorXd back = parallel_transport(ex.F, reverse(path, 1), w);
  CHECK(std::abs(back[0] - 1.5) < 1e-8);

  Chart c = box_chart({"x", "y"}, -1, 1);
  auto pi = planar(Expr(1.0));
  Fibration J = extension_fibration(make_jacobi_extension(c, pi), make_cotangent_poisson(c, pi), 1);
  Cube p2 = tangent_lift(J.base, {parse("0.3*t1"), parse("0.2*t1^2")}, 1, 16, {{Expr(), Expr(-1.0)}, {Expr(1.0), Expr()}});
  CHECK(parallel_transport(J, p2, v)[0] == 1.5);
}
