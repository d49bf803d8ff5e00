#ifndef LALG_ALGEBROID_HPP
#define LALG_ALGEBROID_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "lalg/expr.hpp"

namespace lalg {

/// Malformed input: wrong dimensions, bad names, inconsistent data.
class ValidationError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A computed base point left the chart box.
class ChartEscape : public std::runtime_error {
 public:
  ChartEscape(const std::string& where, Eigen::VectorXd point);
  const Eigen::VectorXd& point() const { return point_; }

 private:
  Eigen::VectorXd point_;
};

struct Chart {
  std::vector<std::string> names;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  Chart() = default;
  Chart(std::vector<std::string> names, Eigen::VectorXd lo, Eigen::VectorXd hi);

  int dim() const { return static_cast<int>(names.size()); }
  bool contains(const Eigen::VectorXd& x) const;
  /// Throws ChartEscape when x is outside the (closed) box.
  void require(const Eigen::VectorXd& x, const std::string& where) const;
};

/// Zero-dimensional chart, the base of a Lie algebra.
Chart point_chart();
/// Chart with coordinates `names` on the cube [lo, hi]^m.
Chart box_chart(std::vector<std::string> names, double lo, double hi);

/// Uniform samples in the chart box (one empty point for a point chart).
std::vector<Eigen::VectorXd> sample_points(const Chart& chart, int n, std::uint64_t seed);

/// Lie algebroid on a single chart, in a fixed frame e_1..e_r.
///
/// The structure functions are stored for i<j only; structure(i,j,l) for
/// i>j returns the negated stored entry. Copies share the underlying data
/// and compiled evaluators.
class Algebroid {
 public:
  using Matrix = std::vector<std::vector<Expr>>;

  Algebroid() = default;
  /// anchor: r rows of m entries; structure[i][j] (i<j, other entries ignored): r entries.
  Algebroid(Chart chart, std::vector<std::string> frame, Matrix anchor,
            std::vector<std::vector<std::vector<Expr>>> structure);

  const Chart& chart() const;
  int rank() const;
  int dim() const { return chart().dim(); }
  const std::vector<std::string>& frame() const;
  const Expr& anchor(int i, int a) const;
  Expr structure(int i, int j, int l) const;

  bool same_as(const Algebroid& other) const { return impl_ == other.impl_; }
  explicit operator bool() const { return impl_ != nullptr; }

  // numeric evaluation at a chart point

  /// r x m matrix of anchor entries.
  Eigen::MatrixXd anchor_at(const Eigen::VectorXd& x) const;
  /// T[l](i,j) = c_{i,j}^l(x), antisymmetric in (i,j).
  std::vector<Eigen::MatrixXd> structure_at(const Eigen::VectorXd& x) const;
  /// Pointwise bracket sum_{i,j} a^i b^j c_{i,j}(x) (no derivative terms).
  Eigen::VectorXd bracket_at(const Eigen::VectorXd& x, const Eigen::VectorXd& a,
                             const Eigen::VectorXd& b) const;
  /// rho(x)^T a, the anchor of a fibre vector.
  Eigen::VectorXd anchor_vector(const Eigen::VectorXd& x, const Eigen::VectorXd& a) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

/// Section of an algebroid: r coefficient expressions in chart coordinates
/// and, for time-dependent families, time names t1..tn.
class Section {
 public:
  Section() = default;
  Section(Algebroid owner, std::vector<Expr> coeffs);

  const Algebroid& algebroid() const { return owner_; }
  const std::vector<Expr>& coeffs() const { return coeffs_; }
  const Expr& operator[](int i) const { return coeffs_[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(coeffs_.size()); }

  Eigen::VectorXd eval(const Env& env) const;

 private:
  Algebroid owner_;
  std::vector<Expr> coeffs_;
};

Section frame_section(const Algebroid& A, int i);
Section zero_section(const Algebroid& A);
Section operator+(const Section& x, const Section& y);
Section operator-(const Section& x, const Section& y);
Section operator*(const Expr& f, const Section& x);
/// Pointwise contraction sum_{i,j} x^i y^j c_{i,j}, no derivative terms.
Section pointwise_bracket(const Section& x, const Section& y);

/// Vector field as m coefficient expressions; applied to a function by sum_a V^a d_a f.
using VectorField = std::vector<Expr>;
Expr apply_field(const Chart& chart, const VectorField& v, const Expr& f);
VectorField commutator(const Chart& chart, const VectorField& v, const VectorField& w);

Section bracket(const Algebroid& A, const Section& x, const Section& y);
VectorField anchor_apply(const Algebroid& A, const Section& x);

struct AxiomReport {
  int samples = 0;
  double jacobi = 0.0;
  double anchor = 0.0;
  double tol = 0.0;
  bool pass = false;
  /// Sample point attaining the larger of the two residuals.
  Eigen::VectorXd witness;
};

AxiomReport check_axioms(const Algebroid& A, int n_samples, double tol, std::uint64_t seed = 42);

// example algebroids

Algebroid make_tangent(const Chart& chart);
/// consts[i][j][l] = c_{i,j}^l, antisymmetric in (i,j). The default chart is a point.
Algebroid make_lie_algebra(const std::vector<std::vector<std::vector<double>>>& consts,
                           const Chart& chart = point_chart());
/// Cotangent algebroid of the bivector Pi (m x m, antisymmetric), frame dx_1..dx_m.
/// Uses (Pi#alpha)(f) = Pi(alpha, df), so the anchor of dx_i is sum_a Pi_{ia} d_a.
Algebroid make_cotangent_poisson(const Chart& chart, const Algebroid::Matrix& pi);
/// R + T*M with the bracket twisted by Pi itself as a 2-cocycle of the trivial representation.
Algebroid make_jacobi_extension(const Chart& chart, const Algebroid::Matrix& pi);
/// E + A with bracket [(u,a),(v,b)] = (D_a v - D_b u + Lambda(a,b), [a,b]).
///
/// Frame order: kernel k_1..k_d first, then the frame of A.
/// action[i] is the d x d matrix G_i with D_{e_i} k_s = sum_u G_i(u,s) k_u.
/// lambda[i][j] (i<j) holds the d kernel components of Lambda(e_i, e_j).
Algebroid make_rep_extension(const Algebroid& A, const std::vector<Algebroid::Matrix>& action,
                             const std::vector<std::vector<std::vector<Expr>>>& lambda);
/// A x K for a Lie algebra K on a point chart. Frame: A's frame then K's.
Algebroid make_product(const Algebroid& A, const Algebroid& K);

/// so(3) with [e1,e2]=e3 cyclic.
std::vector<std::vector<std::vector<double>>> so3_constants();

}  // namespace lalg

#endif  // LALG_ALGEBROID_HPP
