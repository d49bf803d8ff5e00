#include <doctest.h>

#include <cmath>
#include <numbers>

#include "lalg/cube.hpp"

using namespace lalg;

namespace {

const double pi = std::numbers::pi;

Chart plane(double half = 2.0) { return box_chart({"x", "y"}, -half, half); }

std::vector<Expr> bump_map() { return {parse("sin(3.141592653589793*t1)*sin(3.141592653589793*t2)"), parse("t1*t2*(1-t1)*(1-t2)")}; }

}  // namespace

TEST_CASE("tangent lift of a smooth map is a morphism at second order") {
  Algebroid T = make_tangent(plane());
  double r64 = morphism_residual(tangent_lift(T, bump_map(), 2, 64)).max();
  double r128 = morphism_residual(tangent_lift(T, bump_map(), 2, 128)).max();
  CHECK(r128 < r64);
  CHECK(r64 / r128 == doctest::Approx(4.0).epsilon(0.1));
  CHECK(is_sphere(tangent_lift(T, bump_map(), 2, 128), 1e-3));
  // structure part is exact for the tangent algebroid
  CHECK(morphism_residual(tangent_lift(T, bump_map(), 2, 64)).structure < 1e-9);
}

TEST_CASE("zero cube") {
  Algebroid T = make_tangent(plane());
  Cube z = zero_cube(T, 2, 16, Eigen::Vector2d(0.5, -0.5));
  CHECK(morphism_residual(z).max() == 0.0);
  CHECK(is_sphere(z, 1e-12));
  Cube f = face(z, 1, 1);
  CHECK(f.order() == 1);
  CHECK(cube_distance(f, zero_cube(T, 1, 16, Eigen::Vector2d(0.5, -0.5))) == 0.0);
}

TEST_CASE("constant so(3) components have the bracket as defect") {
  Algebroid g = make_lie_algebra(so3_constants());
  Eigen::Vector3d xi(1, 0.5, 0), eta(0, 2, 1);
  for (int N : {8, 32}) {
    Grid grid(2, N);
    std::vector<Eigen::MatrixXd> comps{xi.transpose().replicate(grid.size(), 1), eta.transpose().replicate(grid.size(), 1)};
    Cube c(g, 2, N, Eigen::MatrixXd(grid.size(), 0), comps);
    CHECK(morphism_residual(c).structure == doctest::Approx(xi.cross(eta).norm()).epsilon(1e-12));
    CHECK_FALSE(is_sphere(c, 1e-3));
  }
}

TEST_CASE("faces, degeneracies, reversal") {
  Algebroid T = make_tangent(plane());
  Cube c = tangent_lift(T, bump_map(), 2, 32);
  for (int p = 1; p <= 3; ++p) {
    Cube d = degeneracy(c, p);
    CHECK(d.order() == 3);
    CHECK(cube_distance(face(d, p, 0), c) == 0.0);
    CHECK(cube_distance(face(d, p, 1), c) == 0.0);
    CHECK(homotopy_boundary_defect(degeneracy(c, 3)) == 0.0);
  }
  CHECK(is_homotopy(degeneracy(c, 3), 1e-2));
  Eigen::Vector2d x0 = c.basepoint();
  for (int p = 1; p <= 2; ++p)
    for (int e = 0; e <= 1; ++e) CHECK(cube_distance(face(c, p, e), zero_cube(T, 1, 32, x0)) < 1e-12);
  CHECK(cube_distance(reverse(reverse(c, 1), 1), c) == 0.0);
  CHECK_THROWS_AS(face(c, 3, 0), ValidationError);
  CHECK_THROWS_AS(degeneracy(c, 4), ValidationError);
  // a homotopy whose last component is nonzero on t1 = 0
  CHECK_FALSE(is_homotopy(tangent_lift(T, {parse("t1"), parse("t2")}, 2, 16), 1e-3));
}

TEST_CASE("cutoff and reparametrization") {
  CHECK(cutoff(0.0) == 0.0);
  CHECK(cutoff(1.0) == 1.0);
  CHECK(cutoff(0.5) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(cutoff(0.3) + cutoff(0.7) == doctest::Approx(1.0).epsilon(1e-14));
  double h = 1e-6;
  CHECK((cutoff(0.3 + h) - cutoff(0.3 - h)) / (2 * h) == doctest::Approx(cutoff_derivative(0.3)).epsilon(1e-6));

  Algebroid T = make_tangent(plane());
  Cube c = tangent_lift(T, bump_map(), 2, 128);
  Cube rc = reparam_cutoff(c, 2);
  const Grid& g = rc.grid();
  double near_ends = 0.0;
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    int k = g.coord(idx, 1);
    if (k == 1 || k == 2 || k == 126 || k == 127) near_ends = std::max(near_ends, rc.component(1).row(idx).norm());
  }
  CHECK(near_ends < 1e-8);
  // residual preserved up to O(N^-2): the cutoff's steep derivatives make the constant large
  double r64 = morphism_residual(reparam_cutoff(tangent_lift(T, bump_map(), 2, 64), 2)).max();
  CHECK(r64 / morphism_residual(rc).max() == doctest::Approx(4.0).epsilon(0.15));
  CHECK(cube_distance(reparam_cutoff(zero_cube(T, 2, 16, Eigen::Vector2d::Zero()), 1), zero_cube(T, 2, 16, Eigen::Vector2d::Zero())) == 0.0);
}

TEST_CASE("concatenation") {
  Algebroid T = make_tangent(plane());
  Cube z = zero_cube(T, 2, 32, Eigen::Vector2d::Zero());
  CHECK(cube_distance(concat(z, z, 1), z) == 0.0);

  Cube c = tangent_lift(T, bump_map(), 2, 128);
  Cube cc = concat(c, c, 2);
  Cube c64 = tangent_lift(T, bump_map(), 2, 64);
  double ratio = morphism_residual(concat(c64, c64, 2)).max() / morphism_residual(cc).max();
  CHECK(ratio == doctest::Approx(4.0).epsilon(0.15));
  CHECK(cc.basepoint() == c.basepoint());
  // smoothness across the seam on the concatenation axis
  const Grid& g = cc.grid();
  double d1 = 0.0, d2 = 0.0;
  for (int i = 0; i <= 128; ++i) {
    auto at = [&](int k) { return g.index({i, k}); };
    for (const Eigen::MatrixXd* M : {&cc.gamma(), &cc.component(0), &cc.component(1)}) {
      d1 = std::max(d1, (M->row(at(65)) - M->row(at(64))).norm());
      d1 = std::max(d1, (M->row(at(64)) - M->row(at(63))).norm());
      d2 = std::max(d2, (M->row(at(65)) - 2 * M->row(at(64)) + M->row(at(63))).norm());
    }
  }
  CHECK(d1 < 1e-3);
  CHECK(d2 < 1e-3);

  Cube shifted = tangent_lift(T, {parse("t1 + 0.5"), parse("t2")}, 2, 16);
  CHECK_THROWS_AS(concat(shifted, tangent_lift(T, {parse("t1"), parse("t2")}, 2, 16), 2), ValidationError);
}

TEST_CASE("commutation residual of time-dependent sections") {
  Algebroid T = make_tangent(plane());
  TimeSections zero{T, 2, {zero_section(T), zero_section(T)}};
  CHECK(sections_commutation_residual(zero, 20) == 0.0);
  TimeSections cst{T, 2, {frame_section(T, 0), frame_section(T, 1)}};
  CHECK(sections_commutation_residual(cst, 20) == 0.0);
  Section kappa(T, {Expr(3.0), Expr(4.0)});
  TimeSections lin{T, 2, {Expr::variable("t2") * kappa, zero_section(T)}};
  CHECK(sections_commutation_residual(lin, 20) == doctest::Approx(5.0));
  TimeSections flow{T, 2, {Section(T, {parse("y"), Expr()}), Section(T, {parse("t1"), Expr(1.0)})}};
  CHECK(sections_commutation_residual(flow, 50) < 1e-14);
}

TEST_CASE("flow construction") {
  Algebroid T = make_tangent(plane(4.0));
  SUBCASE("linear flow") {
    TimeSections ts{T, 2, {frame_section(T, 0), frame_section(T, 1)}};
    Cube c = cube_from_sections(ts, Eigen::Vector2d(0.1, 0.2), 16);
    for (std::size_t idx = 0; idx < c.grid().size(); ++idx)
      CHECK((c.gamma().row(idx).transpose() - Eigen::Vector2d(0.1, 0.2) - c.grid().point(idx)).norm() < 1e-10);
  }
  SUBCASE("closed-form path with a time correction") {
    TimeSections ts{T, 2, {Section(T, {parse("y"), Expr()}), Section(T, {parse("t1"), Expr(1.0)})}};
    double x0 = 0.3, y0 = -0.4;
    Cube c = cube_from_sections(ts, Eigen::Vector2d(x0, y0), 256);
    Cube s = cube_from_sections(ts, Eigen::Vector2d(x0, y0), 256, {1, 0});
    double err = 0.0;
    for (std::size_t idx = 0; idx < c.grid().size(); ++idx) {
      Eigen::VectorXd t = c.grid().point(idx);
      Eigen::Vector2d exact(x0 + t[0] * (y0 + t[1]), y0 + t[1]);
      err = std::max(err, (c.gamma().row(idx).transpose() - exact).norm());
    }
    CHECK(err < 1e-8);
    CHECK((c.gamma() - s.gamma()).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("second-order convergence of the residual") {
    TimeSections ts{T, 2, {Section(T, {parse("x"), Expr()}), Section(T, {Expr(), parse("y")})}};
    double r1 = morphism_residual(cube_from_sections(ts, Eigen::Vector2d(0.5, 0.7), 64)).max();
    double r2 = morphism_residual(cube_from_sections(ts, Eigen::Vector2d(0.5, 0.7), 128)).max();
    CHECK(r1 / r2 >= 3.5);
    CHECK(r1 / r2 <= 4.5);
  }
  SUBCASE("escape is an error") {
    TimeSections ts{T, 1, {Section(T, {Expr(10.0), Expr()})}};
    CHECK_THROWS_AS(cube_from_sections(ts, Eigen::Vector2d(0, 0), 16), ChartEscape);
  }
}

TEST_CASE("flow on a Lie algebra keeps the point base") {
  Algebroid g = make_lie_algebra(so3_constants());
  TimeSections ts{g, 2, {frame_section(g, 0), Section(g, {Expr(), Expr(), Expr::variable("t1")})}};
  Cube c = cube_from_sections(ts, Eigen::VectorXd(0), 8);
  CHECK(c.gamma().cols() == 0);
  CHECK(c.component(1)(c.grid().index({8, 3}), 2) == 1.0);
}

TEST_CASE("completing along the last axis reproduces known cubes") {
  Algebroid T = make_tangent(plane());
  Cube c = tangent_lift(T, bump_map(), 2, 64);
  Cube init = face(c, 2, 0);
  const Grid& g = c.grid();
  Cube rebuilt = complete_along_last_axis(T, 2, 64, init.gamma(), init.components(),
                                          [&](std::size_t f, double s, const Eigen::VectorXd&) {
                                            return Eigen::VectorXd(line_interpolate(c.component(1), f * 65, 1, 64, s).transpose());
                                          });
  CHECK((rebuilt.gamma() - c.gamma()).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((rebuilt.component(0) - c.component(0)).cwiseAbs().maxCoeff() < 5e-3);
  CHECK(morphism_residual(rebuilt).max() < 5e-3);
  (void)g;
}

TEST_CASE("json round trip") {
  Algebroid T = make_tangent(plane());
  Cube c = tangent_lift(T, bump_map(), 2, 8);
  Cube d = cube_from_json(T, nlohmann::json::parse(cube_to_json(c).dump()));
  CHECK(cube_distance(c, d) == 0.0);
  auto j = cube_to_json(c);
  j["gamma"].erase(0);
  CHECK_THROWS_AS(cube_from_json(T, j), ValidationError);
}
