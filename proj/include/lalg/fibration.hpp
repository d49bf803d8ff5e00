#ifndef LALG_FIBRATION_HPP
#define LALG_FIBRATION_HPP

#include <string>
#include <vector>

#include "lalg/algebroid.hpp"
#include "lalg/cube.hpp"

namespace lalg {

/// Surjective algebroid morphism A_E -> A_B over the coordinate projection
/// (x, y) -> x, with a splitting and a frame of the kernel.
///
/// The base chart's coordinates are the first p coordinates of the total chart.
/// pi is r_B x r_E, sigma is r_E x r_B, kernel[s] holds the r_E coefficients of
/// the s-th kernel frame section; all entries are expressions in total-chart
/// coordinates.
struct Fibration {
  Algebroid total;
  Algebroid base;
  Algebroid::Matrix pi;
  Algebroid::Matrix sigma;
  Algebroid::Matrix kernel;

  int p() const { return base.dim(); }
  int q() const { return total.dim() - base.dim(); }
  int kernel_rank() const { return static_cast<int>(kernel.size()); }
};

/// Checks shapes and chart compatibility. An empty sigma defaults to the
/// pseudo-inverse of pi (constant pi only); an empty kernel defaults to
/// independent columns of Id - sigma pi, chosen at the chart centre.
Fibration make_fibration(Algebroid total, Algebroid base, Algebroid::Matrix pi, Algebroid::Matrix sigma = {},
                         Algebroid::Matrix kernel = {});
/// E x| A -> A for a representation extension with kernel rank d; sigma = (0, id).
Fibration extension_fibration(const Algebroid& extension, const Algebroid& base, int d);
/// A x K -> A, sigma = (id, 0).
Fibration product_fibration(const Algebroid& base, const Algebroid& lie_algebra);
/// Same fibration with a different splitting.
Fibration with_splitting(const Fibration& F, Algebroid::Matrix sigma);

struct ResidualItem {
  std::string name;
  double value = 0.0;
  bool pass = false;
};

struct FibrationReport {
  std::vector<ResidualItem> items;
  bool pass = true;
  double value(const std::string& name) const;
};

/// pi sigma = Id, pi kernel = 0, pi preserves brackets and anchors, at sampled points.
FibrationReport validate(const Fibration& F, double tol, int samples = 50, std::uint64_t seed = 42);

/// sigma(alpha) for a base section (coefficients in x) as a section of A_E.
Section horizontal(const Fibration& F, const Section& alpha);
/// Section of A_E from kernel-frame coordinates.
Section from_kernel_frame(const Fibration& F, const std::vector<Expr>& w);
/// Kernel-frame coordinates of a vertical section; throws if the non-kernel part
/// exceeds tol at sampled points.
std::vector<Expr> to_kernel_frame(const Fibration& F, const Section& v, double tol = 1e-8, int samples = 20);

/// d x r_E matrix taking a vertical vector to its kernel-frame coordinates.
Algebroid::Matrix kernel_coordinates(const Fibration& F);

/// D_alpha(kappa) = [sigma(alpha), kappa] in kernel-frame coordinates.
std::vector<Expr> covariant_derivative(const Fibration& F, const Section& alpha, const std::vector<Expr>& kappa,
                                       double tol = 1e-8);

/// omega(e_i, e_j) = [sigma e_i, sigma e_j] - sigma[e_i, e_j] in kernel-frame coordinates.
struct Curvature2Form {
  int base_rank = 0;
  int kernel_rank = 0;
  /// comps[i][j] for i < j, kernel_rank expressions.
  std::vector<std::vector<std::vector<Expr>>> comps;
  Expr component(int i, int j, int s) const;
};
Curvature2Form curvature(const Fibration& F, double tol = 1e-8);
/// The same 2-form as vertical sections of A_E: omega_sections(F)[i][j] for i < j.
std::vector<std::vector<Section>> curvature_sections(const Fibration& F);

struct IdentityReport {
  double curvature_identity = 0.0;  // Curv_D(a,b) k - [omega(a,b), k]
  double bianchi = 0.0;             // cyclic D_a omega(b,c) - omega([a,b],c)
  bool pass = false;
};
IdentityReport identity_residuals(const Fibration& F, int samples, double tol, std::uint64_t seed = 42);

/// Connection coefficients: G[i](u,s) = u-th kernel coordinate of D_{e_i} k_s.
std::vector<std::vector<std::vector<Expr>>> connection_coefficients(const Fibration& F, double tol = 1e-8);

/// Horizontal lift of a base cube with prescribed data on the face t_n = 0.
Cube lift_cube(const Fibration& F, const Cube& c, const Cube& init, double tol = 1e-6);

/// Parallel transport in the kernel along a base path, from gamma(1) back to gamma(0):
/// w' = -G(gamma, a) w integrated backwards with RK4. Needs q = 0.
Eigen::VectorXd parallel_transport(const Fibration& F, const Cube& path, const Eigen::VectorXd& v);

}  // namespace lalg

#endif  // LALG_FIBRATION_HPP
