#include <doctest.h>

#include <cmath>

#include "lalg/transgression.hpp"

using namespace lalg;

namespace {

const double kPi = 3.141592653589793;

Algebroid::Matrix planar(const Expr& p) { return {{Expr(), p}, {-p, Expr()}}; }

struct Plane {
  Chart chart = box_chart({"x", "y"}, -2, 2);
  Algebroid base, total;
  Fibration F;
  Plane() {
    auto pi = planar(Expr(1.0));
    base = make_cotangent_poisson(chart, pi);
    total = make_jacobi_extension(chart, pi);
    F = extension_fibration(total, base, 1);
  }
  // a_k = (Pi#)^{-1} d_k gamma for a boundary-collapsing map
  Cube sphere(int N) const {
    return tangent_lift(base, {parse("sin(3.141592653589793*t1)*sin(3.141592653589793*t2)"),
                               parse("sin(2*3.141592653589793*t1)*sin(3.141592653589793*t2)^2")},
                        2, N, {{Expr(), Expr(1.0)}, {Expr(-1.0), Expr()}});
  }
};

// Pi_ij = r eps_ijk x_k on R^3; the unit sphere is a leaf with area form as symplectic form.
struct Space {
  Chart chart = box_chart({"x", "y", "z"}, -1.5, 1.5);
  Algebroid::Matrix pi;
  Algebroid base;
  Space() {
    Expr r = parse("sqrt(x^2+y^2+z^2)"), x = parse("x"), y = parse("y"), z = parse("z");
    pi = {{Expr(), r * z, -(r * y)}, {-(r * z), Expr(), r * x}, {r * y, -(r * x), Expr()}};
    base = make_cotangent_poisson(chart, pi);
  }
  // degree -1 map onto the unit sphere (outward orientation), boundary to (0,0,1);
  // covectors (v x x) / r^3 invert the anchor on the leaf
  Cube sphere(int N) const {
    Expr s1 = parse("2*t1-1"), s2 = parse("2*t2-1");
    Expr psi = (Expr(1.0) - s1 * s1) * (Expr(1.0) - s2 * s2);
    Expr q = s1 * s1 + s2 * s2, D = q + psi * psi;
    Expr r3 = pow(parse("sqrt(x^2+y^2+z^2)"), 3);
    Expr x = parse("x") / r3, y = parse("y") / r3, z = parse("z") / r3;
    Algebroid::Matrix sigma{{Expr(), z, -y}, {-z, Expr(), x}, {y, -x, Expr()}};
    return tangent_lift(base, {Expr(2.0) * s1 * psi / D, Expr(2.0) * s2 * psi / D, (q - psi * psi) / D}, 2, N, sigma);
  }
};

}  // namespace

TEST_CASE("planar spheres enclose zero area") {
  Plane P;
  Cube S = P.sphere(64);
  CHECK(sphere_boundary_defect(S) < 1e-12);
  auto f = transgress2_formula(P.F, S);
  // gamma^*(dx^dy) is exact and the boundary collapses
  CHECK(std::abs(f.value[0]) < 1e-10);
  auto l = transgress_lift(P.F, S);
  CHECK(std::abs(l.result.value[0]) < 1e-2);
  CHECK(l.projection_defect < 1e-12);
  CHECK(transgress2_formula(P.F, zero_cube(P.base, 2, 16, Eigen::Vector2d(0.5, 0.5))).value[0] == 0.0);
}

TEST_CASE("unit sphere in the rotation Poisson structure") {
  Space Sp;
  Algebroid J = make_jacobi_extension(Sp.chart, Sp.pi);
  Fibration F = extension_fibration(J, Sp.base, 1);
  CHECK(validate(F, 1e-9).pass);
  Cube S = Sp.sphere(128);
  CHECK(sphere_boundary_defect(S) < 1e-12);
  CHECK(morphism_residual(S).max() < 0.1);
  auto f = transgress2_formula(F, S);
  // degree -1 onto the unit sphere: minus its area
  CHECK(std::abs(f.value[0] + 4 * kPi) < 3e-3);
  CHECK(f.error_estimate < 1e-2);
  auto l = transgress_lift(F, S);
  CHECK(std::abs(l.result.value[0] - f.value[0]) < std::max(1e-2, 3 * l.result.error_estimate));
  CHECK(l.projection_defect < 1e-2);

  SUBCASE("orientation") {
    auto rv = transgress2_formula(F, reverse(S, 1));
    CHECK(std::abs(rv.value[0] + f.value[0]) < 1e-12);
  }
  SUBCASE("additivity") {
    auto two = transgress2_formula(F, concat(S, S, 2));
    CHECK(std::abs(two.value[0] - 2 * f.value[0]) < 1e-2);
    auto two_lift = transgress_lift(F, concat(S, S, 1));
    CHECK(std::abs(two_lift.result.value[0] - 2 * l.result.value[0]) < 2e-2);
  }
}

TEST_CASE("gauged extension weights the period by transport to the basepoint") {
  Space Sp;
  Expr g = parse("0.3*x + 0.2*y*z + 0.5*z");
  std::vector<Algebroid::Matrix> action;
  const char* names[] = {"x", "y", "z"};
  for (int i = 0; i < 3; ++i) {
    Expr gi;
    for (int a = 0; a < 3; ++a) gi = gi + Sp.pi[i][a] * diff(g, names[a]);
    action.push_back({{gi}});
  }
  std::vector<std::vector<std::vector<Expr>>> lambda(3, std::vector<std::vector<Expr>>(3));
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) lambda[i][j] = {exp(-g) * Sp.pi[i][j]};
  Algebroid E = make_rep_extension(Sp.base, action, lambda);
  Fibration F = extension_fibration(E, Sp.base, 1);
  CHECK(validate(F, 1e-9).pass);
  CHECK(identity_residuals(F, 20, 1e-7).pass);
  Cube S = Sp.sphere(128);
  double oracle = -4 * kPi * std::exp(-0.5);
  auto f = transgress2_formula(F, S);
  CHECK(std::abs(f.value[0] - oracle) < 3e-3);
  auto l = transgress_lift(F, S);
  CHECK(std::abs(l.result.value[0] - oracle) < 1e-2);
}

TEST_CASE("product fibration transgresses to zero") {
  Chart c = box_chart({"x", "y"}, -2, 2);
  Algebroid B = make_tangent(c);
  Fibration F = product_fibration(B, make_lie_algebra({{{0.0}}}));
  Cube S = tangent_lift(B, {parse("sin(3.141592653589793*t1)*sin(3.141592653589793*t2)"), parse("t1*t2*(1-t1)*(1-t2)")}, 2, 32);
  auto l = transgress_lift(F, S);
  CHECK(l.result.value.norm() == 0.0);
  CHECK(cube_distance(l.face, zero_cube(F.total, 1, 32, S.basepoint())) < 1e-12);
}

TEST_CASE("connection independence on the plane") {
  Plane P;
  Cube S = P.sphere(128);
  auto f = transgress2_formula(P.F, S);
  Algebroid::Matrix sigma = P.F.sigma;
  sigma[0][0] = parse("0.1*x*y + 0.05*x");
  sigma[0][1] = parse("0.2*y^2 - 0.1*x");
  Fibration F2 = with_splitting(P.F, sigma);
  CHECK(validate(F2, 1e-10).pass);
  auto f2 = transgress2_formula(F2, S);
  CHECK(std::abs(f2.value[0] - f.value[0]) <= 2 * std::max(f.error_estimate, f2.error_estimate));
}

TEST_CASE("S2 periods") {
  Chart c = box_chart({"u", "v"}, -5000, 5000);
  Expr P = parse("(1+u^2+v^2)^2/4");
  Algebroid AL = make_jacobi_extension(c, planar(P));
  Algebroid T = make_tangent(c);
  Algebroid::Matrix sigma{{Expr(), Expr()}, {Expr(), Expr(1.0) / P}, {-(Expr(1.0) / P), Expr()}};
  auto polar = [&](double eps, int N, int degree) {
    std::string half = "(3.141592653589793-" + std::to_string(eps) + ")*t2/2";
    Expr rho = parse("sin(" + half + ")/cos(" + half + ")");
    std::string ang = std::to_string(2 * degree) + "*3.141592653589793*t1";
    return tangent_lift(T, {rho * parse("cos(" + ang + ")"), rho * parse("sin(" + ang + ")")}, 2, N);
  };
  auto p = monodromy_period(AL, sigma, polar(1e-3, 256, 1));
  // area outside a polar cap of angular radius eps
  CHECK(std::abs(p.value[0] - 2 * kPi * (1 + std::cos(1e-3))) < 1e-3);
  CHECK(p.error_estimate < 1e-3);

  auto rep = monodromy_group(AL, sigma, {polar(1e-2, 64, 1), polar(1e-2, 64, 2)}, {"deg1", "deg2"});
  REQUIRE(rep.periods.size() == 2);
  CHECK_FALSE(rep.sphere_ok[0]);
  CHECK(rep.pairs.size() == 1);
  CHECK(rep.pairs[0].test.commensurable);
  CHECK(rep.pairs[0].test.p == 2);
  CHECK(rep.lattice_rank == 1);
  CHECK(rep.discrete);

  auto none = monodromy_group(AL, sigma, {});
  CHECK(none.periods.empty());
  CHECK(none.lattice_rank == 0);

  auto flat = monodromy_period(make_tangent(c), {{Expr(1.0), Expr()}, {Expr(), Expr(1.0)}}, polar(1e-2, 16, 1));
  CHECK(flat.value.size() == 0);
}

TEST_CASE("continued fractions") {
  auto a = commensurability(4 * kPi, 4 * kPi * std::sqrt(2.0), 1e-8);
  CHECK_FALSE(a.commensurable);
  auto b = commensurability(4 * kPi, -6 * kPi, 1e-8);
  CHECK(b.commensurable);
  CHECK(b.p == -3);
  CHECK(b.q == 2);
  CHECK(commensurability(1.0, 99.0 / 70.0, 1e-12).q == 70);
}

TEST_CASE("path decomposition") {
  Plane P;
  Algebroid::Matrix sig{{Expr(), Expr()}, {Expr(), Expr(1.0)}, {Expr(-1.0), Expr()}};
  auto mixed = [&](int N) {
    Cube hor = tangent_lift(P.total, {parse("0.5*sin(3.141592653589793*t1)"), parse("0.3*t1^2")}, 1, N, sig);
    std::vector<Eigen::MatrixXd> comps{hor.component(0)};
    for (int k = 0; k <= N; ++k) comps[0](k, 0) = 0.7 + std::sin(2.0 * k / N);
    return Cube(P.total, 1, N, hor.gamma(), comps);
  };
  const int N = 64;
  Cube a = mixed(N);
  auto d = decompose_path(P.F, a);
  CHECK(d.endpoint_gap < 1e-6);
  CHECK(d.k_projection_defect < 1e-3);
  CHECK(d.h_vertical_defect < 1e-12);
  CHECK(d.witness_boundary_defect < 1e-12);
  CHECK(cube_distance(face(d.witness, 2, 0), a) < 1e-12);
  CHECK(cube_distance(face(d.witness, 2, 1), d.reconstruction) < 1e-3);
  // the witness is a morphism up to the grid's second-order defect
  auto d2 = decompose_path(P.F, mixed(2 * N));
  CHECK(d.witness_residual / d2.witness_residual == doctest::Approx(4.0).epsilon(0.15));
  Cube hor = tangent_lift(P.total, {parse("0.5*sin(3.141592653589793*t1)"), parse("0.3*t1^2")}, 1, N, sig);

  auto dh = decompose_path(P.F, hor);
  CHECK(dh.k_path.component(0).norm() < 1e-3);

  // vertical path: nothing to transport
  std::vector<Eigen::MatrixXd> vc{Eigen::MatrixXd::Zero(N + 1, 3)};
  for (int k = 0; k <= N; ++k) vc[0](k, 0) = std::cos(3.0 * k / N);
  Eigen::MatrixXd g0 = Eigen::MatrixXd::Zero(N + 1, 2);
  Cube v(P.total, 1, N, g0, vc);
  auto dv = decompose_path(P.F, v);
  CHECK(dv.h_path.component(0).norm() == 0.0);
  CHECK(cube_distance(dv.k_path, v) < 1e-12);
}
