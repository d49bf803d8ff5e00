#ifndef LALG_CUBE_HPP
#define LALG_CUBE_HPP

#include <functional>
#include <json.hpp>
#include <string>
#include <vector>

#include "lalg/algebroid.hpp"
#include "lalg/grid.hpp"

namespace lalg {

/// Grid-sampled bundle map T I^n -> A.
///
/// gamma is (nodes x m), component(k) is (nodes x r) for axis k (0-based).
/// Order 0 is a single point, which is what faces of paths are.
class Cube {
 public:
  Cube() = default;
  /// Checks shapes and that gamma stays in the chart box (ChartEscape otherwise).
  Cube(Algebroid A, int n, int N, Eigen::MatrixXd gamma, std::vector<Eigen::MatrixXd> comps);

  const Algebroid& algebroid() const { return A_; }
  int order() const { return grid_.order(); }
  int resolution() const { return grid_.resolution(); }
  const Grid& grid() const { return grid_; }
  Eigen::VectorXd basepoint() const { return gamma_.row(0).transpose(); }
  const Eigen::MatrixXd& gamma() const { return gamma_; }
  const Eigen::MatrixXd& component(int axis) const { return comps_[static_cast<std::size_t>(axis)]; }
  const std::vector<Eigen::MatrixXd>& components() const { return comps_; }

 private:
  Algebroid A_;
  Grid grid_;
  Eigen::MatrixXd gamma_;
  std::vector<Eigen::MatrixXd> comps_;
};

Cube zero_cube(const Algebroid& A, int n, int N, const Eigen::VectorXd& x0);

struct MorphismResidual {
  double structure = 0.0;
  double base = 0.0;
  double max() const { return std::max(structure, base); }
};

/// Max over interior nodes of |d a_i/dt_j - d a_j/dt_i - [a_i,a_j](gamma)| and of
/// |d gamma/dt_i - anchor(a_i)|, with central differences in t. Requires N >= 4.
MorphismResidual morphism_residual(const Cube& c);

/// Largest |a_k| on the faces {t_j in {0,1}}, j != k (the sphere boundary condition).
double sphere_boundary_defect(const Cube& c);
bool is_sphere(const Cube& c, double tol);
/// Largest |a_{n+1}| on {t_k in {0,1}}, k <= n.
double homotopy_boundary_defect(const Cube& h);
bool is_homotopy(const Cube& h, double tol);

/// Face t_p = eps (p is 1-based).
Cube face(const Cube& c, int p, int eps);
/// Insert a new trivial axis at position p (1-based, 1..n+1).
Cube degeneracy(const Cube& c, int p);
/// Compose with the cutoff along an axis (1-based).
Cube reparam_cutoff(const Cube& c, int axis);
/// c0 on the first half of the axis, then c1. Requires face(c0,axis,1) == face(c1,axis,0) within tol.
Cube concat(const Cube& c1, const Cube& c0, int axis, double tol = 1e-6);
/// t_axis -> 1 - t_axis.
Cube reverse(const Cube& c, int axis);
/// Every other node on every axis; N must be even.
Cube coarsen(const Cube& c);
/// Largest nodewise difference of gamma and components; shapes must agree.
double cube_distance(const Cube& a, const Cube& b);

/// Push a map I^n -> chart (m expressions in t1..tn) into A: a_k = sigma(gamma) d_k gamma.
/// sigma is r x m in chart coordinates; when empty, A must have rank m and sigma = Id.
Cube tangent_lift(const Algebroid& A, const std::vector<Expr>& map, int n, int N,
                  const Algebroid::Matrix& sigma = {});

std::vector<std::string> time_names(int n);

/// n time-dependent sections of one algebroid, in chart coordinates and t1..tn.
struct TimeSections {
  Algebroid algebroid;
  int n = 0;
  std::vector<Section> alphas;
};

/// Max over sampled (x, t) of |[a_i,a_j] - (d a_i/dt_j - d a_j/dt_i)|.
double sections_commutation_residual(const TimeSections& ts, int samples, std::uint64_t seed = 42);

/// Base path by composing the flows of the sections axis by axis in `axis_order`
/// (0-based, default 0..n-1), RK4 with N steps per unit time; a_i = alpha_i(gamma, t).
Cube cube_from_sections(const TimeSections& ts, const Eigen::VectorXd& x0, int N,
                        std::vector<int> axis_order = {});

/// Extend initial data on the face t_n = 0 to an n-cube, given the last component
/// as a function of (face node, position along the t_n line, point).
///
/// gamma along each t_n line solves d gamma/dt_n = anchor(last); a_n = last at the
/// nodes; a_i (i < n) solve d a_i/dt_n = d a_n/dt_i + [a_i, a_n](gamma).
/// init_gamma is (face nodes x m); init_comps holds n-1 (face nodes x r) blocks.
using LastComponent = std::function<Eigen::VectorXd(std::size_t face_node, double s, const Eigen::VectorXd& x)>;
Cube complete_along_last_axis(const Algebroid& A, int n, int N, const Eigen::MatrixXd& init_gamma,
                              const std::vector<Eigen::MatrixXd>& init_comps, const LastComponent& last);

nlohmann::json cube_to_json(const Cube& c);
Cube cube_from_json(const Algebroid& A, const nlohmann::json& j);
void save_cube(const Cube& c, const std::string& path);
Cube load_cube(const Algebroid& A, const std::string& path);

}  // namespace lalg

#endif  // LALG_CUBE_HPP
