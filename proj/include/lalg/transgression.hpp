#ifndef LALG_TRANSGRESSION_HPP
#define LALG_TRANSGRESSION_HPP

#include <json.hpp>
#include <string>
#include <vector>

#include "lalg/cube.hpp"
#include "lalg/fibration.hpp"

namespace lalg {

/// A kernel-valued period at the basepoint. error_estimate is the Richardson
/// difference (v_N - v_{N/2}) / 3, floored at 1e-10 (1 + |v|).
struct TransgressionResult {
  Eigen::VectorXd value;
  std::string method;  // "formula", "lift" or "period"
  int N = 0;
  double error_estimate = 0.0;
};

/// Residuals of the two conditions that make the period well defined: an abelian
/// kernel, or a curvature that commutes with the kernel.
struct CentralityReport {
  double abelian = 0.0;
  double central = 0.0;
  bool pass = false;
};
CentralityReport kernel_centrality(const Fibration& F, double tol, int samples = 20, std::uint64_t seed = 42);

/// Trapezoid integral over the grid of Phi(s) <omega(gamma(s)), a1 ^ a2>, Phi the
/// transport back along the t1-line and then along the edge t1 = 0. S must be a
/// 2-sphere in the base and total and base must share the chart (q = 0).
TransgressionResult transgress2_formula(const Fibration& F, const Cube& S, double tol = 1e-6);

struct LiftTransgression {
  TransgressionResult result;
  /// Face t_n = 1 of the lift, an (n-1)-cube in the total algebroid.
  Cube face;
  /// Largest |pi(a)| on that face; it should be a kernel sphere.
  double projection_defect = 0.0;
};
/// Lift S from the zero cube at x0 (total-chart point; empty means S's basepoint,
/// q = 0) and integrate the kernel coordinates of the first component of the
/// face t_n = 1 over I^(n-1).
LiftTransgression transgress_lift(const Fibration& F, const Cube& S, Eigen::VectorXd x0 = {}, double tol = 1e-6);

/// Integral of sigma[X,Y] - [sigma X, sigma Y] over a 2-cube of the tangent
/// algebroid of A_L's chart, in a frame of ker(anchor). sigma is r x m.
TransgressionResult monodromy_period(const Algebroid& A_L, const Algebroid::Matrix& sigma, const Cube& S,
                                     double tol = 1e-6);

struct Commensurability {
  double ratio = 0.0;
  bool commensurable = false;
  long p = 0;
  long q = 0;
};
/// Continued-fraction test: is b / a within rel_tol of p / q with q <= max_q?
Commensurability commensurability(double a, double b, double rel_tol, long max_q = 100);

struct MonodromyReport {
  Eigen::VectorXd basepoint;
  std::vector<std::string> labels;
  std::vector<TransgressionResult> periods;
  std::vector<bool> sphere_ok;
  struct Pair {
    int i = 0;
    int j = 0;
    bool parallel = false;
    Commensurability test;
  };
  std::vector<Pair> pairs;
  /// Classes of nonzero periods that are pairwise parallel and commensurable.
  int lattice_rank = 0;
  /// Heuristic: lattice_rank does not exceed the linear rank of the periods.
  bool discrete = true;
};
MonodromyReport monodromy_group(const Algebroid& A_L, const Algebroid::Matrix& sigma,
                                const std::vector<Cube>& generators, std::vector<std::string> labels = {},
                                double tol = 1e-6);

/// A path in the total algebroid as a kernel path followed by a horizontal path,
/// and the 2-cube homotopy (rel endpoints) from the original path to them.
struct PathDecomposition {
  Cube k_path;
  Cube h_path;
  Cube witness;
  /// concat(h_path, k_path)
  Cube reconstruction;
  double input_residual = 0.0;
  double k_projection_defect = 0.0;
  double h_vertical_defect = 0.0;
  double endpoint_gap = 0.0;
  double witness_boundary_defect = 0.0;
  double witness_residual = 0.0;
};
PathDecomposition decompose_path(const Fibration& F, const Cube& a);

nlohmann::json to_json(const TransgressionResult& r);
nlohmann::json to_json(const MonodromyReport& r);

}  // namespace lalg

#endif  // LALG_TRANSGRESSION_HPP
