#include "lalg/fibration.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace lalg {

namespace {

using Matrix = Algebroid::Matrix;

std::span<const double> as_span(const Eigen::VectorXd& x) {
  return {x.data(), static_cast<std::size_t>(x.size())};
}

Eigen::Index row(std::size_t idx) { return static_cast<Eigen::Index>(idx); }

bool all_const(const Matrix& M) {
  for (const auto& r : M)
    for (const auto& e : r)
      if (!e.is_const()) return false;
  return true;
}

Eigen::MatrixXd eval_matrix(const Matrix& M, const std::vector<std::string>& names, const Eigen::VectorXd& x) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(M.size()), M.empty() ? 0 : static_cast<Eigen::Index>(M[0].size()));
  Env env;
  for (std::size_t a = 0; a < names.size(); ++a) env[names[a]] = x[static_cast<Eigen::Index>(a)];
  for (std::size_t i = 0; i < M.size(); ++i)
    for (std::size_t j = 0; j < M[i].size(); ++j) out(row(i), row(j)) = eval(M[i][j], env);
  return out;
}

Matrix transpose(const Matrix& M) {
  if (M.empty()) return {};
  Matrix T(M[0].size(), std::vector<Expr>(M.size()));
  for (std::size_t i = 0; i < M.size(); ++i)
    for (std::size_t j = 0; j < M[i].size(); ++j) T[j][i] = M[i][j];
  return T;
}

Matrix multiply(const Matrix& A, const Matrix& B) {
  if (A.empty() || B.empty()) return Matrix(A.size(), std::vector<Expr>(B.empty() ? 0 : B[0].size()));
  Matrix C(A.size(), std::vector<Expr>(B[0].size()));
  for (std::size_t i = 0; i < A.size(); ++i)
    for (std::size_t j = 0; j < B[0].size(); ++j)
      for (std::size_t k = 0; k < B.size(); ++k)
        if (!A[i][k].is_zero() && !B[k][j].is_zero()) C[i][j] = C[i][j] + A[i][k] * B[k][j];
  return C;
}

Expr determinant(const Matrix& M) {
  const std::size_t n = M.size();
  if (n == 0) return Expr(1.0);
  if (n == 1) return M[0][0];
  if (n == 2) return M[0][0] * M[1][1] - M[0][1] * M[1][0];
  Expr det;
  for (std::size_t j = 0; j < n; ++j) {
    if (M[0][j].is_zero()) continue;
    Matrix minor;
    for (std::size_t i = 1; i < n; ++i) {
      std::vector<Expr> r;
      for (std::size_t k = 0; k < n; ++k)
        if (k != j) r.push_back(M[i][k]);
      minor.push_back(std::move(r));
    }
    Expr term = M[0][j] * determinant(minor);
    det = j % 2 ? det - term : det + term;
  }
  return det;
}

// Adjugate over determinant; entries fold to constants for constant input.
Matrix inverse(const Matrix& M) {
  const std::size_t n = M.size();
  Expr det = determinant(M);
  Matrix inv(n, std::vector<Expr>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Matrix minor;
      for (std::size_t a = 0; a < n; ++a) {
        if (a == j) continue;
        std::vector<Expr> r;
        for (std::size_t b = 0; b < n; ++b)
          if (b != i) r.push_back(M[a][b]);
        minor.push_back(std::move(r));
      }
      Expr cof = determinant(minor);
      if ((i + j) % 2) cof = -cof;
      inv[i][j] = cof / det;
    }
  return inv;
}

// Left inverse (K^T K)^{-1} K^T of the kernel frame, as a d x r_E matrix.
Matrix kernel_left_inverse(const Fibration& F) {
  Matrix K = transpose(F.kernel);  // r_E x d
  Matrix KtK = multiply(F.kernel, K);
  return multiply(inverse(KtK), F.kernel);
}

void require_shape(const Matrix& M, int rows, int cols, const std::string& what) {
  if (static_cast<int>(M.size()) != rows) throw ValidationError(what + " must have " + std::to_string(rows) + " rows");
  for (const auto& r : M)
    if (static_cast<int>(r.size()) != cols) throw ValidationError(what + " must have " + std::to_string(cols) + " columns");
}

void require_vars(const Matrix& M, const Chart& chart, const std::string& what) {
  for (const auto& r : M)
    for (const auto& e : r)
      for (const auto& v : variables(e))
        if (std::find(chart.names.begin(), chart.names.end(), v) == chart.names.end())
          throw ValidationError(what + " uses '" + v + "', which is not a total-chart coordinate");
}

Eigen::VectorXd chart_centre(const Chart& c) { return (c.lo + c.hi) / 2; }

double max_norm_over_samples(const std::vector<Expr>& exprs, int block, const Chart& chart, int samples,
                             std::uint64_t seed) {
  if (exprs.empty()) return 0.0;
  ProgramVector prog(exprs, chart.names);
  std::vector<double> v(exprs.size());
  double worst = 0.0;
  for (const auto& x : sample_points(chart, samples, seed)) {
    prog(as_span(x), v.data());
    for (std::size_t p = 0; p < v.size(); p += static_cast<std::size_t>(block)) {
      double s = 0.0;
      for (int k = 0; k < block && p + static_cast<std::size_t>(k) < v.size(); ++k) s += v[p + static_cast<std::size_t>(k)] * v[p + static_cast<std::size_t>(k)];
      worst = std::max(worst, std::sqrt(s));
    }
  }
  return worst;
}

}  // namespace

Fibration make_fibration(Algebroid total, Algebroid base, Matrix pi, Matrix sigma, Matrix kernel) {
  const Chart& E = total.chart();
  const Chart& B = base.chart();
  if (B.dim() > E.dim()) throw ValidationError("fibration: base chart has more coordinates than the total chart");
  for (int a = 0; a < B.dim(); ++a)
    if (B.names[a] != E.names[a])
      throw ValidationError("fibration: base coordinate '" + B.names[a] + "' must be total coordinate " + std::to_string(a + 1));
  const int rE = total.rank(), rB = base.rank(), d = rE - rB;
  if (d < 0) throw ValidationError("fibration: base rank exceeds total rank");
  require_shape(pi, rB, rE, "projection");
  require_vars(pi, E, "projection");
  if (sigma.empty()) {
    if (!all_const(pi)) throw ValidationError("fibration: a splitting must be given when the projection is not constant");
    Eigen::MatrixXd P = eval_matrix(pi, {}, Eigen::VectorXd(0));
    Eigen::MatrixXd S = P.completeOrthogonalDecomposition().pseudoInverse();
    sigma.assign(static_cast<std::size_t>(rE), std::vector<Expr>(static_cast<std::size_t>(rB)));
    for (int i = 0; i < rE; ++i)
      for (int j = 0; j < rB; ++j) sigma[i][j] = Expr(std::abs(S(i, j)) < 1e-15 ? 0.0 : S(i, j));
  }
  require_shape(sigma, rE, rB, "splitting");
  require_vars(sigma, E, "splitting");
  if (kernel.empty() && d > 0) {
    // columns of Id - sigma pi span the kernel; pick d independent ones at the chart centre
    Matrix proj = multiply(sigma, pi);
    for (int i = 0; i < rE; ++i)
      for (int j = 0; j < rE; ++j) proj[i][j] = (i == j ? Expr(1.0) : Expr()) - proj[i][j];
    Eigen::MatrixXd P = eval_matrix(proj, E.names, chart_centre(E));
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(P);
    if (qr.rank() < d) throw ValidationError("fibration: could not find a kernel frame (projection not surjective?)");
    for (int s = 0; s < d; ++s) {
      int col = static_cast<int>(qr.colsPermutation().indices()[s]);
      std::vector<Expr> k;
      for (int i = 0; i < rE; ++i) k.push_back(proj[i][col]);
      kernel.push_back(std::move(k));
    }
  }
  require_shape(kernel, d, rE, "kernel frame");
  require_vars(kernel, E, "kernel frame");
  return Fibration{std::move(total), std::move(base), std::move(pi), std::move(sigma), std::move(kernel)};
}

Fibration extension_fibration(const Algebroid& extension, const Algebroid& base, int d) {
  const int rB = base.rank(), rE = extension.rank();
  if (rE != rB + d) throw ValidationError("extension fibration: rank mismatch");
  Matrix pi(static_cast<std::size_t>(rB), std::vector<Expr>(static_cast<std::size_t>(rE)));
  Matrix sigma(static_cast<std::size_t>(rE), std::vector<Expr>(static_cast<std::size_t>(rB)));
  Matrix kernel(static_cast<std::size_t>(d), std::vector<Expr>(static_cast<std::size_t>(rE)));
  for (int i = 0; i < rB; ++i) {
    pi[i][d + i] = Expr(1.0);
    sigma[d + i][i] = Expr(1.0);
  }
  for (int s = 0; s < d; ++s) kernel[s][s] = Expr(1.0);
  return make_fibration(extension, base, std::move(pi), std::move(sigma), std::move(kernel));
}

Fibration product_fibration(const Algebroid& base, const Algebroid& lie_algebra) {
  Algebroid total = make_product(base, lie_algebra);
  const int rB = base.rank(), rE = total.rank(), d = rE - rB;
  Matrix pi(static_cast<std::size_t>(rB), std::vector<Expr>(static_cast<std::size_t>(rE)));
  Matrix sigma(static_cast<std::size_t>(rE), std::vector<Expr>(static_cast<std::size_t>(rB)));
  Matrix kernel(static_cast<std::size_t>(d), std::vector<Expr>(static_cast<std::size_t>(rE)));
  for (int i = 0; i < rB; ++i) pi[i][i] = sigma[i][i] = Expr(1.0);
  for (int s = 0; s < d; ++s) kernel[s][rB + s] = Expr(1.0);
  return make_fibration(std::move(total), base, std::move(pi), std::move(sigma), std::move(kernel));
}

Fibration with_splitting(const Fibration& F, Matrix sigma) {
  return make_fibration(F.total, F.base, F.pi, std::move(sigma), F.kernel);
}

double FibrationReport::value(const std::string& name) const {
  for (const auto& it : items)
    if (it.name == name) return it.value;
  throw std::out_of_range("no report item '" + name + "'");
}

FibrationReport validate(const Fibration& F, double tol, int samples, std::uint64_t seed) {
  const Chart& E = F.total.chart();
  const int rE = F.total.rank(), rB = F.base.rank(), d = F.kernel_rank(), p = F.p();
  FibrationReport rep;
  auto add = [&](const std::string& name, double v, bool pass) {
    rep.items.push_back({name, v, pass});
    rep.pass = rep.pass && pass;
  };

  Matrix ps = multiply(F.pi, F.sigma);
  std::vector<Expr> ps_defect;
  for (int i = 0; i < rB; ++i)
    for (int j = 0; j < rB; ++j) ps_defect.push_back(ps[i][j] - Expr(i == j ? 1.0 : 0.0));
  double v = max_norm_over_samples(ps_defect, std::max(1, rB * rB), E, samples, seed);
  add("pi_sigma", v, v < tol);

  std::vector<Expr> pk;
  for (int s = 0; s < d; ++s)
    for (int l = 0; l < rB; ++l) {
      Expr e;
      for (int k = 0; k < rE; ++k) e = e + F.pi[l][k] * F.kernel[s][k];
      pk.push_back(e);
    }
  v = max_norm_over_samples(pk, std::max(1, rB), E, samples, seed);
  add("pi_kernel", v, v < tol);

  // kernel frame must be independent: smallest singular value over the samples
  double smin = d == 0 ? 1.0 : 1e300;
  for (const auto& x : sample_points(E, samples, seed)) {
    if (d == 0) break;
    Eigen::MatrixXd K = eval_matrix(F.kernel, E.names, x);
    smin = std::min(smin, Eigen::JacobiSVD<Eigen::MatrixXd>(K).singularValues().minCoeff());
  }
  add("kernel_independence", smin, smin > tol);

  // pi [e_i, e_j]_E = pullback of the base bracket
  std::vector<Expr> br_defect;
  std::vector<VectorField> anch;
  for (int i = 0; i < rE; ++i) anch.push_back(anchor_apply(F.total, frame_section(F.total, i)));
  for (int i = 0; i < rE; ++i)
    for (int j = i + 1; j < rE; ++j) {
      Section b = bracket(F.total, frame_section(F.total, i), frame_section(F.total, j));
      for (int l = 0; l < rB; ++l) {
        Expr lhs;
        for (int k = 0; k < rE; ++k) lhs = lhs + F.pi[l][k] * b[k];
        Expr rhs = apply_field(E, anch[i], F.pi[l][j]) - apply_field(E, anch[j], F.pi[l][i]);
        for (int k = 0; k < rB; ++k)
          for (int m = 0; m < rB; ++m) {
            Expr c = F.base.structure(k, m, l);
            if (!c.is_zero()) rhs = rhs + F.pi[k][i] * F.pi[m][j] * c;
          }
        br_defect.push_back(lhs - rhs);
      }
    }
  v = max_norm_over_samples(br_defect, std::max(1, rB), E, samples, seed);
  add("bracket_morphism", v, v < tol);

  std::vector<Expr> an_defect;
  for (int i = 0; i < rE; ++i)
    for (int a = 0; a < p; ++a) {
      Expr e = F.total.anchor(i, a);
      for (int l = 0; l < rB; ++l) e = e - F.pi[l][i] * F.base.anchor(l, a);
      an_defect.push_back(e);
    }
  v = max_norm_over_samples(an_defect, std::max(1, p), E, samples, seed);
  add("anchor_morphism", v, v < tol);
  return rep;
}

Matrix kernel_coordinates(const Fibration& F) { return kernel_left_inverse(F); }

Section horizontal(const Fibration& F, const Section& alpha) {
  if (!alpha.algebroid().same_as(F.base)) throw ValidationError("horizontal lift of a section from another algebroid");
  std::vector<Expr> c(static_cast<std::size_t>(F.total.rank()));
  for (int k = 0; k < F.total.rank(); ++k)
    for (int l = 0; l < F.base.rank(); ++l)
      if (!F.sigma[k][l].is_zero() && !alpha[l].is_zero()) c[k] = c[k] + F.sigma[k][l] * alpha[l];
  return Section(F.total, std::move(c));
}

Section from_kernel_frame(const Fibration& F, const std::vector<Expr>& w) {
  if (static_cast<int>(w.size()) != F.kernel_rank()) throw ValidationError("kernel coordinates have the wrong length");
  std::vector<Expr> c(static_cast<std::size_t>(F.total.rank()));
  for (int k = 0; k < F.total.rank(); ++k)
    for (int s = 0; s < F.kernel_rank(); ++s)
      if (!w[s].is_zero() && !F.kernel[s][k].is_zero()) c[k] = c[k] + w[s] * F.kernel[s][k];
  return Section(F.total, std::move(c));
}

std::vector<Expr> to_kernel_frame(const Fibration& F, const Section& v, double tol, int samples) {
  Matrix L = kernel_left_inverse(F);
  std::vector<Expr> w(static_cast<std::size_t>(F.kernel_rank()));
  for (int s = 0; s < F.kernel_rank(); ++s)
    for (int k = 0; k < F.total.rank(); ++k)
      if (!L[s][k].is_zero() && !v[k].is_zero()) w[s] = w[s] + L[s][k] * v[k];
  Section back = from_kernel_frame(F, w);
  std::vector<Expr> defect;
  for (int k = 0; k < F.total.rank(); ++k) defect.push_back(v[k] - back[k]);
  // time-dependent sections are checked at t = 0 only through the chart variables
  bool chart_only = true;
  for (const auto& e : defect)
    for (const auto& name : variables(e))
      if (std::find(F.total.chart().names.begin(), F.total.chart().names.end(), name) == F.total.chart().names.end())
        chart_only = false;
  if (chart_only) {
    double res = max_norm_over_samples(defect, std::max(1, F.total.rank()), F.total.chart(), samples, 7);
    if (res > tol)
      throw ValidationError("section has a non-kernel component of size " + std::to_string(res) +
                            " (splitting and projection inconsistent?)");
  }
  return w;
}

std::vector<Expr> covariant_derivative(const Fibration& F, const Section& alpha, const std::vector<Expr>& kappa,
                                       double tol) {
  Section k = from_kernel_frame(F, kappa);
  return to_kernel_frame(F, bracket(F.total, horizontal(F, alpha), k), tol);
}

Expr Curvature2Form::component(int i, int j, int s) const {
  if (i == j) return Expr();
  if (i < j) return comps[i][j][s];
  return -comps[j][i][s];
}

std::vector<std::vector<Section>> curvature_sections(const Fibration& F) {
  const int rB = F.base.rank();
  std::vector<Section> h;
  for (int i = 0; i < rB; ++i) h.push_back(horizontal(F, frame_section(F.base, i)));
  std::vector<std::vector<Section>> out(static_cast<std::size_t>(rB), std::vector<Section>(static_cast<std::size_t>(rB)));
  for (int i = 0; i < rB; ++i)
    for (int j = i + 1; j < rB; ++j) {
      Section hb = horizontal(F, bracket(F.base, frame_section(F.base, i), frame_section(F.base, j)));
      out[i][j] = bracket(F.total, h[i], h[j]) - hb;
    }
  return out;
}

Curvature2Form curvature(const Fibration& F, double tol) {
  const int rB = F.base.rank();
  Curvature2Form w;
  w.base_rank = rB;
  w.kernel_rank = F.kernel_rank();
  auto sec = curvature_sections(F);
  w.comps.assign(static_cast<std::size_t>(rB), std::vector<std::vector<Expr>>(static_cast<std::size_t>(rB)));
  for (int i = 0; i < rB; ++i)
    for (int j = i + 1; j < rB; ++j) w.comps[i][j] = to_kernel_frame(F, sec[i][j], tol);
  return w;
}

IdentityReport identity_residuals(const Fibration& F, int samples, double tol, std::uint64_t seed) {
  const int rB = F.base.rank(), d = F.kernel_rank(), rE = F.total.rank();
  const Algebroid& E = F.total;
  std::vector<Section> h, kap;
  for (int i = 0; i < rB; ++i) h.push_back(horizontal(F, frame_section(F.base, i)));
  for (int s = 0; s < d; ++s) kap.push_back(Section(E, F.kernel[s]));
  auto omega = curvature_sections(F);
  auto om = [&](int i, int j) -> Section {
    if (i == j) return zero_section(E);
    if (i < j) return omega[i][j];
    return zero_section(E) - omega[j][i];
  };
  auto D = [&](int i, const Section& k) { return bracket(E, h[i], k); };

  std::vector<Expr> curv, bianchi;
  for (int i = 0; i < rB; ++i)
    for (int j = i + 1; j < rB; ++j) {
      Section hb = horizontal(F, bracket(F.base, frame_section(F.base, i), frame_section(F.base, j)));
      for (int s = 0; s < d; ++s) {
        Section lhs = D(i, D(j, kap[s])) - D(j, D(i, kap[s])) - bracket(E, hb, kap[s]);
        Section res = lhs - bracket(E, om(i, j), kap[s]);
        curv.insert(curv.end(), res.coeffs().begin(), res.coeffs().end());
      }
    }
  for (int i = 0; i < rB; ++i)
    for (int j = i + 1; j < rB; ++j)
      for (int k = j + 1; k < rB; ++k) {
        Section total = zero_section(E);
        for (auto [a, b, c] : {std::array<int, 3>{i, j, k}, std::array<int, 3>{j, k, i}, std::array<int, 3>{k, i, j}}) {
          total = total + D(a, om(b, c));
          for (int l = 0; l < rB; ++l) {
            Expr cab = F.base.structure(a, b, l);
            if (!cab.is_zero()) total = total - cab * om(l, c);
          }
        }
        bianchi.insert(bianchi.end(), total.coeffs().begin(), total.coeffs().end());
      }
  IdentityReport rep;
  rep.curvature_identity = max_norm_over_samples(curv, std::max(1, rE), E.chart(), samples, seed);
  rep.bianchi = max_norm_over_samples(bianchi, std::max(1, rE), E.chart(), samples, seed);
  rep.pass = rep.curvature_identity < tol && rep.bianchi < tol;
  return rep;
}

std::vector<std::vector<std::vector<Expr>>> connection_coefficients(const Fibration& F, double tol) {
  const int rB = F.base.rank(), d = F.kernel_rank();
  std::vector<std::vector<std::vector<Expr>>> G(static_cast<std::size_t>(rB),
                                                std::vector<std::vector<Expr>>(static_cast<std::size_t>(d), std::vector<Expr>(static_cast<std::size_t>(d))));
  for (int i = 0; i < rB; ++i) {
    Section hi = horizontal(F, frame_section(F.base, i));
    for (int s = 0; s < d; ++s) {
      auto w = to_kernel_frame(F, bracket(F.total, hi, Section(F.total, F.kernel[s])), tol);
      for (int u = 0; u < d; ++u) G[i][u][s] = w[u];
    }
  }
  return G;
}

Cube lift_cube(const Fibration& F, const Cube& c, const Cube& init, double tol) {
  if (!c.algebroid().same_as(F.base)) throw ValidationError("lift_cube: cube is not in the base algebroid");
  if (!init.algebroid().same_as(F.total)) throw ValidationError("lift_cube: initial face is not in the total algebroid");
  const int n = c.order(), N = c.resolution(), rB = F.base.rank(), rE = F.total.rank(), p = F.p();
  if (n < 1) throw ValidationError("lift_cube: cube order must be >= 1");
  if (init.order() != n - 1 || init.resolution() != N)
    throw ValidationError("lift_cube: initial face must have order n-1 and the same resolution");

  const Chart& E = F.total.chart();
  std::vector<Expr> flat_pi, flat_sigma;
  for (const auto& r : F.pi) flat_pi.insert(flat_pi.end(), r.begin(), r.end());
  for (const auto& r : F.sigma) flat_sigma.insert(flat_sigma.end(), r.begin(), r.end());
  ProgramVector pip(flat_pi, E.names), sgp(flat_sigma, E.names);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> P(rB, rE), S(rE, rB);

  // pi(init) must match the base face
  Cube bf = face(c, n, 0);
  double gap = 0.0;
  for (std::size_t f = 0; f < init.grid().size(); ++f) {
    Eigen::VectorXd x = init.gamma().row(row(f)).transpose();
    gap = std::max(gap, (x.head(p) - bf.gamma().row(row(f)).transpose()).norm());
    pip(as_span(x), P.data());
    for (int k = 0; k < n - 1; ++k)
      gap = std::max(gap, (P * init.component(k).row(row(f)).transpose() - bf.component(k).row(row(f)).transpose()).norm());
  }
  if (gap > tol) throw ValidationError("lift_cube: projection of the initial face differs from the base face by " + std::to_string(gap));

  const Eigen::MatrixXd& an = c.component(n - 1);
  LastComponent last = [&](std::size_t f, double s, const Eigen::VectorXd& x) {
    Eigen::VectorXd b = line_interpolate(an, f * static_cast<std::size_t>(N + 1), 1, N, s).transpose();
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Sx(rE, rB);
    sgp(as_span(x), Sx.data());
    return Eigen::VectorXd(Sx * b);
  };
  return complete_along_last_axis(F.total, n, N, init.gamma(), init.components(), last);
}

Eigen::VectorXd parallel_transport(const Fibration& F, const Cube& path, const Eigen::VectorXd& v) {
  if (F.q() != 0) throw ValidationError("parallel_transport: needs total and base on the same chart");
  if (!path.algebroid().same_as(F.base) || path.order() != 1)
    throw ValidationError("parallel_transport: path must be an order-1 cube in the base algebroid");
  const int d = F.kernel_rank(), rB = F.base.rank(), N = path.resolution();
  if (v.size() != d) throw ValidationError("parallel_transport: vector must have kernel rank");
  auto G = connection_coefficients(F);
  std::vector<Expr> flat;
  bool trivial = true;
  for (int i = 0; i < rB; ++i)
    for (int u = 0; u < d; ++u)
      for (int s = 0; s < d; ++s) {
        flat.push_back(G[i][u][s]);
        trivial = trivial && G[i][u][s].is_zero();
      }
  if (trivial) return v;
  ProgramVector prog(flat, F.total.chart().names);
  std::vector<double> vals(flat.size());
  auto field = [&](double t, const Eigen::VectorXd& w) {
    Eigen::VectorXd x = line_interpolate(path.gamma(), 0, 1, N, t).transpose();
    Eigen::VectorXd a = line_interpolate(path.component(0), 0, 1, N, t).transpose();
    prog(as_span(x), vals.data());
    Eigen::MatrixXd Gam = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < rB; ++i)
      for (int u = 0; u < d; ++u)
        for (int s = 0; s < d; ++s) Gam(u, s) += a[i] * vals[static_cast<std::size_t>((i * d + u) * d + s)];
    return Eigen::VectorXd(-Gam * w);
  };
  Eigen::VectorXd w = v;
  const double h = 1.0 / N;
  for (int k = N; k > 0; --k) w = rk4_step(field, k * h, w, -h);
  return w;
}

}  // namespace lalg
