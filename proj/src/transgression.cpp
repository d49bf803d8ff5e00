#include "lalg/transgression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lalg {

namespace {

using Matrix = Algebroid::Matrix;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::span<const double> as_span(const Eigen::VectorXd& x) {
  return {x.data(), static_cast<std::size_t>(x.size())};
}

Eigen::Index row(std::size_t idx) { return static_cast<Eigen::Index>(idx); }

// A matrix of expressions compiled once, evaluated into a row-major buffer.
class MatrixProgram {
 public:
  MatrixProgram(const Matrix& M, const std::vector<std::string>& names)
      : rows_(static_cast<Eigen::Index>(M.size())), cols_(M.empty() ? 0 : static_cast<Eigen::Index>(M[0].size())) {
    std::vector<Expr> flat;
    for (const auto& r : M) flat.insert(flat.end(), r.begin(), r.end());
    prog_ = ProgramVector(flat, names);
  }
  RowMatrix operator()(const Eigen::VectorXd& x) const {
    RowMatrix out(rows_, cols_);
    if (out.size() > 0) prog_(as_span(x), out.data());
    return out;
  }

 private:
  Eigen::Index rows_, cols_;
  ProgramVector prog_;
};

double richardson(const Eigen::VectorXd& fine, const Eigen::VectorXd& coarse) {
  double floor = 1e-10 * (1.0 + fine.norm());
  if (coarse.size() != fine.size()) return floor;
  return std::max((fine - coarse).norm() / 3.0, floor);
}

bool can_coarsen(const Cube& c) { return c.resolution() % 2 == 0 && c.resolution() / 2 >= 4; }

void require_sphere(const Cube& S, double tol, const char* what) {
  double d = sphere_boundary_defect(S);
  if (d > tol) throw ValidationError(std::string(what) + ": cube is not a sphere (boundary defect " + std::to_string(d) + ")");
}

// omega(e_i, e_j) for i < j, flattened as pair-major blocks of d entries.
struct OmegaProgram {
  int rB = 0, d = 0;
  ProgramVector prog;
  std::vector<double> buf;

  OmegaProgram(const Fibration& F, double sign) : rB(F.base.rank()), d(F.kernel_rank()) {
    Curvature2Form w = curvature(F);
    std::vector<Expr> flat;
    for (int i = 0; i < rB; ++i)
      for (int j = i + 1; j < rB; ++j)
        for (int s = 0; s < d; ++s) flat.push_back(sign == 1.0 ? w.component(i, j, s) : -w.component(i, j, s));
    prog = ProgramVector(flat, F.total.chart().names);
    buf.resize(flat.size());
  }

  // sum_{i<j} omega_ij(x) (a_i b_j - a_j b_i)
  Eigen::VectorXd pair(const Eigen::VectorXd& x, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
    if (buf.empty()) return out;
    prog(as_span(x), buf.data());
    std::size_t p = 0;
    for (int i = 0; i < rB; ++i)
      for (int j = i + 1; j < rB; ++j) {
        double wedge = a[i] * b[j] - a[j] * b[i];
        for (int s = 0; s < d; ++s) out[s] += buf[p++] * wedge;
      }
    return out;
  }
};

// Gamma(x, a) = sum_i a_i G_i(x), the connection matrix along a direction.
struct ConnectionProgram {
  int rB = 0, d = 0;
  bool trivial = true;
  ProgramVector prog;
  std::vector<double> buf;

  explicit ConnectionProgram(const Fibration& F) : rB(F.base.rank()), d(F.kernel_rank()) {
    auto G = connection_coefficients(F);
    std::vector<Expr> flat;
    for (int i = 0; i < rB; ++i)
      for (int u = 0; u < d; ++u)
        for (int s = 0; s < d; ++s) {
          flat.push_back(G[i][u][s]);
          trivial = trivial && G[i][u][s].is_zero();
        }
    prog = ProgramVector(flat, F.total.chart().names);
    buf.resize(flat.size());
  }

  Eigen::MatrixXd operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& a) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d, d);
    prog(as_span(x), buf.data());
    for (int i = 0; i < rB; ++i)
      for (int u = 0; u < d; ++u)
        for (int s = 0; s < d; ++s) out(u, s) += a[i] * buf[static_cast<std::size_t>((i * d + u) * d + s)];
    return out;
  }
};

// Transport matrices back to the start of one grid line: Phi' = Phi Gamma, Phi(0) = I.
std::vector<Eigen::MatrixXd> line_transport(ConnectionProgram& conn, const Cube& c, int axis, std::size_t base) {
  const int N = c.resolution(), d = conn.d;
  const std::size_t stride = c.grid().stride(axis);
  const Eigen::MatrixXd& gam = c.gamma();
  const Eigen::MatrixXd& comp = c.component(axis);
  auto field = [&](double t, const Eigen::MatrixXd& Phi) {
    Eigen::VectorXd x = line_interpolate(gam, base, stride, N, t).transpose();
    Eigen::VectorXd a = line_interpolate(comp, base, stride, N, t).transpose();
    return Eigen::MatrixXd(Phi * conn(x, a));
  };
  std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(N + 1));
  Eigen::MatrixXd Phi = Eigen::MatrixXd::Identity(d, d);
  const double h = 1.0 / N;
  out[0] = Phi;
  for (int k = 0; k < N; ++k) {
    Phi = rk4_step(field, k * h, Phi, h);
    out[static_cast<std::size_t>(k + 1)] = Phi;
  }
  return out;
}

Eigen::VectorXd formula_value(const Fibration& F, const Cube& S, OmegaProgram& omega, ConnectionProgram& conn) {
  const Grid& g = S.grid();
  const int N = S.resolution();
  const auto line = static_cast<std::size_t>(N + 1);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(F.kernel_rank());
  std::vector<Eigen::MatrixXd> edge;
  if (!conn.trivial) edge = line_transport(conn, S, 1, 0);
  for (int k2 = 0; k2 <= N; ++k2) {
    std::vector<Eigen::MatrixXd> rowphi;
    if (!conn.trivial) rowphi = line_transport(conn, S, 0, static_cast<std::size_t>(k2));
    for (int k1 = 0; k1 <= N; ++k1) {
      std::size_t idx = static_cast<std::size_t>(k1) * line + static_cast<std::size_t>(k2);
      Eigen::VectorXd x = S.gamma().row(row(idx)).transpose();
      Eigen::VectorXd w = omega.pair(x, S.component(0).row(row(idx)).transpose(), S.component(1).row(row(idx)).transpose());
      if (!conn.trivial) w = edge[static_cast<std::size_t>(k2)] * (rowphi[static_cast<std::size_t>(k1)] * w);
      total += trapezoid_weight(g, idx) * w;
    }
  }
  return total;
}

void require_centrality(const Fibration& F, double tol, const char* what) {
  CentralityReport c = kernel_centrality(F, tol);
  if (!c.pass)
    throw ValidationError(std::string(what) + ": kernel is not abelian (" + std::to_string(c.abelian) +
                          ") and curvature is not central (" + std::to_string(c.central) + ")");
}

Eigen::VectorXd lift_value(const Fibration& F, const Cube& S, const Eigen::VectorXd& x0, const MatrixProgram& L,
                           const MatrixProgram& P, Cube* face_out, double* defect_out) {
  const int n = S.order(), N = S.resolution();
  Cube init = zero_cube(F.total, n - 1, N, x0);
  Cube lifted = lift_cube(F, S, init);
  Cube top = face(lifted, n, 1);
  Eigen::VectorXd value = Eigen::VectorXd::Zero(F.kernel_rank());
  double defect = 0.0;
  for (std::size_t f = 0; f < top.grid().size(); ++f) {
    Eigen::VectorXd x = top.gamma().row(row(f)).transpose();
    RowMatrix Px = P(x);
    for (int k = 0; k < n - 1; ++k)
      defect = std::max(defect, (Px * top.component(k).row(row(f)).transpose()).norm());
    value += trapezoid_weight(top.grid(), f) * (L(x) * top.component(0).row(row(f)).transpose());
  }
  if (face_out) *face_out = std::move(top);
  if (defect_out) *defect_out = defect;
  return value;
}

Matrix anchor_transpose(const Algebroid& A) {
  Matrix pi(static_cast<std::size_t>(A.dim()), std::vector<Expr>(static_cast<std::size_t>(A.rank())));
  for (int i = 0; i < A.rank(); ++i)
    for (int a = 0; a < A.dim(); ++a) pi[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)] = A.anchor(i, a);
  return pi;
}

bool is_tangent_of(const Algebroid& T, const Chart& chart) {
  if (T.dim() != chart.dim() || T.rank() != T.dim() || T.chart().names != chart.names) return false;
  for (int i = 0; i < T.rank(); ++i)
    for (int a = 0; a < T.dim(); ++a) {
      const Expr& e = T.anchor(i, a);
      if (!e.is_const() || e.value() != (i == a ? 1.0 : 0.0)) return false;
      for (int j = i + 1; j < T.rank(); ++j)
        if (!T.structure(i, j, a).is_zero()) return false;
    }
  return true;
}

Eigen::VectorXd period_value(const Cube& S, OmegaProgram& omega) {
  Eigen::VectorXd total = Eigen::VectorXd::Zero(omega.d);
  for (std::size_t idx = 0; idx < S.grid().size(); ++idx) {
    Eigen::VectorXd x = S.gamma().row(row(idx)).transpose();
    total += trapezoid_weight(S.grid(), idx) *
             omega.pair(x, S.component(0).row(row(idx)).transpose(), S.component(1).row(row(idx)).transpose());
  }
  return total;
}

}  // namespace

CentralityReport kernel_centrality(const Fibration& F, double tol, int samples, std::uint64_t seed) {
  CentralityReport rep;
  const int d = F.kernel_rank(), rB = F.base.rank();
  const auto& names = F.total.chart().names;
  MatrixProgram K(F.kernel, names);
  auto omega = curvature_sections(F);
  Matrix wflat;
  for (int i = 0; i < rB; ++i)
    for (int j = i + 1; j < rB; ++j) wflat.push_back(omega[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].coeffs());
  MatrixProgram W(wflat, names);
  for (const auto& x : sample_points(F.total.chart(), samples, seed)) {
    RowMatrix k = K(x), w = W(x);
    for (int s = 0; s < d; ++s) {
      Eigen::VectorXd ks = k.row(s).transpose();
      for (int u = s + 1; u < d; ++u) rep.abelian = std::max(rep.abelian, F.total.bracket_at(x, ks, k.row(u).transpose()).norm());
      for (Eigen::Index p = 0; p < w.rows(); ++p)
        rep.central = std::max(rep.central, F.total.bracket_at(x, w.row(p).transpose(), ks).norm());
    }
  }
  rep.pass = rep.abelian <= tol || rep.central <= tol;
  return rep;
}

TransgressionResult transgress2_formula(const Fibration& F, const Cube& S, double tol) {
  if (!S.algebroid().same_as(F.base)) throw ValidationError("transgress2_formula: sphere is not in the base algebroid");
  if (S.order() != 2) throw ValidationError("transgress2_formula: needs a 2-cube");
  if (F.q() != 0) throw ValidationError("transgress2_formula: total and base must share the chart");
  if (S.resolution() < 3) throw ValidationError("transgress2_formula: needs N >= 3");
  require_sphere(S, tol, "transgress2_formula");
  require_centrality(F, tol, "transgress2_formula");
  OmegaProgram omega(F, 1.0);
  ConnectionProgram conn(F);
  TransgressionResult r;
  r.method = "formula";
  r.N = S.resolution();
  r.value = formula_value(F, S, omega, conn);
  Eigen::VectorXd coarse;
  if (can_coarsen(S)) coarse = formula_value(F, coarsen(S), omega, conn);
  r.error_estimate = richardson(r.value, coarse);
  return r;
}

LiftTransgression transgress_lift(const Fibration& F, const Cube& S, Eigen::VectorXd x0, double tol) {
  if (!S.algebroid().same_as(F.base)) throw ValidationError("transgress_lift: sphere is not in the base algebroid");
  if (S.order() < 2) throw ValidationError("transgress_lift: needs order >= 2");
  require_sphere(S, tol, "transgress_lift");
  if (x0.size() == 0) {
    if (F.q() != 0) throw ValidationError("transgress_lift: fibre coordinates of the basepoint are required");
    x0 = S.basepoint();
  }
  if (x0.size() != F.total.dim()) throw ValidationError("transgress_lift: basepoint has the wrong dimension");
  if ((x0.head(F.p()) - S.basepoint()).norm() > tol)
    throw ValidationError("transgress_lift: basepoint does not lie over the sphere's basepoint");
  const auto& names = F.total.chart().names;
  MatrixProgram L(kernel_coordinates(F), names), P(F.pi, names);

  LiftTransgression out;
  out.result.method = "lift";
  out.result.N = S.resolution();
  out.result.value = lift_value(F, S, x0, L, P, &out.face, &out.projection_defect);
  Eigen::VectorXd coarse;
  if (can_coarsen(S)) coarse = lift_value(F, coarsen(S), x0, L, P, nullptr, nullptr);
  out.result.error_estimate = richardson(out.result.value, coarse);
  return out;
}

TransgressionResult monodromy_period(const Algebroid& A_L, const Matrix& sigma, const Cube& S, double tol) {
  if (S.order() != 2) throw ValidationError("monodromy_period: needs a 2-cube");
  if (!is_tangent_of(S.algebroid(), A_L.chart()))
    throw ValidationError("monodromy_period: cube must lie in the tangent algebroid of the leaf chart");
  Fibration F = make_fibration(A_L, S.algebroid(), anchor_transpose(A_L), sigma);
  FibrationReport v = validate(F, tol);
  if (!v.pass) throw ValidationError("monodromy_period: sigma is not a splitting of the anchor");
  require_centrality(F, tol, "monodromy_period");
  // sigma[X,Y] - [sigma X, sigma Y] is minus the curvature
  OmegaProgram omega(F, -1.0);
  TransgressionResult r;
  r.method = "period";
  r.N = S.resolution();
  r.value = period_value(S, omega);
  Eigen::VectorXd coarse;
  if (can_coarsen(S)) coarse = period_value(coarsen(S), omega);
  r.error_estimate = richardson(r.value, coarse);
  return r;
}

Commensurability commensurability(double a, double b, double rel_tol, long max_q) {
  Commensurability c;
  if (a == 0.0) return c;
  c.ratio = b / a;
  const double x = std::abs(c.ratio);
  // convergents h/k of the continued fraction of x
  long h0 = 1, h1 = static_cast<long>(std::floor(x)), k0 = 0, k1 = 1;
  double rest = x - std::floor(x);
  for (int it = 0; it < 64 && k1 <= max_q; ++it) {
    if (std::abs(x - static_cast<double>(h1) / static_cast<double>(k1)) <= rel_tol * std::max(x, 1e-300)) {
      c.commensurable = true;
      c.p = c.ratio < 0 ? -h1 : h1;
      c.q = k1;
      return c;
    }
    if (rest < 1e-15) break;
    double inv = 1.0 / rest;
    auto digit = static_cast<long>(std::floor(inv));
    rest = inv - std::floor(inv);
    long h2 = digit * h1 + h0, k2 = digit * k1 + k0;
    h0 = h1;
    h1 = h2;
    k0 = k1;
    k1 = k2;
  }
  return c;
}

MonodromyReport monodromy_group(const Algebroid& A_L, const Matrix& sigma, const std::vector<Cube>& generators,
                                std::vector<std::string> labels, double tol) {
  MonodromyReport rep;
  if (labels.empty())
    for (std::size_t k = 0; k < generators.size(); ++k) labels.push_back("g" + std::to_string(k + 1));
  if (labels.size() != generators.size()) throw ValidationError("monodromy_group: one label per generator");
  rep.labels = labels;
  if (generators.empty()) return rep;
  rep.basepoint = generators.front().basepoint();
  for (const auto& g : generators) {
    rep.periods.push_back(monodromy_period(A_L, sigma, g, tol));
    rep.sphere_ok.push_back(is_sphere(g, tol));
  }

  const std::size_t n = generators.size();
  std::vector<bool> nonzero(n);
  for (std::size_t k = 0; k < n; ++k)
    nonzero[k] = rep.periods[k].value.norm() > std::max(3.0 * rep.periods[k].error_estimate, 1e-8);

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t k) {
    while (parent[k] != k) k = parent[k] = parent[parent[k]];
    return k;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!nonzero[i] || !nonzero[j]) continue;
      const Eigen::VectorXd& a = rep.periods[i].value;
      const Eigen::VectorXd& b = rep.periods[j].value;
      double rel = rep.periods[i].error_estimate / a.norm() + rep.periods[j].error_estimate / b.norm() + 1e-9;
      MonodromyReport::Pair pr;
      pr.i = static_cast<int>(i);
      pr.j = static_cast<int>(j);
      double proj = a.dot(b) / a.squaredNorm();
      pr.parallel = (b - proj * a).norm() <= rel * b.norm();
      // ratio b/a along a
      pr.test = commensurability(1.0, proj, rel);
      if (pr.parallel && pr.test.commensurable) parent[find(j)] = find(i);
      rep.pairs.push_back(pr);
    }
  Eigen::MatrixXd M(rep.periods.front().value.size(), 0);
  for (std::size_t k = 0; k < n; ++k)
    if (nonzero[k]) {
      if (find(k) == k) ++rep.lattice_rank;
      M.conservativeResize(Eigen::NoChange, M.cols() + 1);
      M.col(M.cols() - 1) = rep.periods[k].value;
    }
  long linear = 0;
  if (M.cols() > 0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    lu.setThreshold(1e-6);
    linear = lu.rank();
  }
  rep.discrete = rep.lattice_rank <= linear;
  return rep;
}

PathDecomposition decompose_path(const Fibration& F, const Cube& a) {
  if (!a.algebroid().same_as(F.total)) throw ValidationError("decompose_path: path is not in the total algebroid");
  if (a.order() != 1) throw ValidationError("decompose_path: needs a path (order 1)");
  const int N = a.resolution(), rB = F.base.rank();
  if (N < 4) throw ValidationError("decompose_path: needs N >= 4");
  const auto& names = F.total.chart().names;
  MatrixProgram P(F.pi, names), Sg(F.sigma, names);

  PathDecomposition out;
  out.input_residual = morphism_residual(a).max();

  // base component b(t) = pi(a(t)) at the nodes
  Eigen::MatrixXd b(N + 1, rB);
  for (int k = 0; k <= N; ++k) {
    Eigen::VectorXd x = a.gamma().row(k).transpose();
    b.row(k) = (P(x) * a.component(0).row(k).transpose()).transpose();
  }
  // lambda(t1, t2): a on t2 = 0, last component -t1 sigma b(t1 (1 - t2))
  LastComponent last = [&](std::size_t f, double s, const Eigen::VectorXd& x) {
    const double t1 = static_cast<double>(f) / N;
    Eigen::VectorXd bv = line_interpolate(b, 0, 1, N, t1 * (1.0 - s)).transpose();
    return Eigen::VectorXd(-t1 * (Sg(x) * bv));
  };
  Cube lambda = complete_along_last_axis(F.total, 2, N, a.gamma(), {a.component(0)}, last);

  out.k_path = face(lambda, 2, 1);
  out.h_path = reverse(face(lambda, 1, 1), 1);
  out.reconstruction = concat(out.h_path, out.k_path, 1);
  for (std::size_t k = 0; k <= static_cast<std::size_t>(N); ++k) {
    Eigen::VectorXd x = out.k_path.gamma().row(row(k)).transpose();
    out.k_projection_defect = std::max(out.k_projection_defect, (P(x) * out.k_path.component(0).row(row(k)).transpose()).norm());
    Eigen::VectorXd y = out.h_path.gamma().row(row(k)).transpose();
    Eigen::VectorXd ah = out.h_path.component(0).row(row(k)).transpose();
    out.h_vertical_defect = std::max(out.h_vertical_defect, (ah - Sg(y) * (P(y) * ah)).norm());
  }
  const Eigen::MatrixXd& rg = out.reconstruction.gamma();
  out.endpoint_gap = std::max((rg.row(0) - a.gamma().row(0)).norm(), (rg.row(N) - a.gamma().row(N)).norm());

  // witness = lambda o Psi, Psi(t, s) = (1 - s)(t, 0) + s T(t), T running along the
  // top edge and then down the right edge with the concatenation's cutoff
  Grid g(2, N);
  const int r = F.total.rank();
  Eigen::MatrixXd wg(row(g.size()), F.total.dim());
  std::vector<Eigen::MatrixXd> wc(2, Eigen::MatrixXd(row(g.size()), r));
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    const double t = g.coord(idx, 0) * g.h(), s = g.coord(idx, 1) * g.h();
    Eigen::Vector2d T, dT;
    if (2 * g.coord(idx, 0) <= N) {
      T << cutoff(2 * t), 1.0;
      dT << 2 * cutoff_derivative(2 * t), 0.0;
    } else {
      T << 1.0, 1.0 - cutoff(2 * t - 1);
      dT << 0.0, -2 * cutoff_derivative(2 * t - 1);
    }
    Eigen::Vector2d base(t, 0.0);
    Eigen::Vector2d psi = (1 - s) * base + s * T;
    Eigen::Vector2d dpsi_t = (1 - s) * Eigen::Vector2d(1.0, 0.0) + s * dT;
    Eigen::Vector2d dpsi_s = T - base;
    wg.row(row(idx)) = bicubic(lambda.gamma(), lambda.grid(), psi[0], psi[1]);
    Eigen::RowVectorXd l1 = bicubic(lambda.component(0), lambda.grid(), psi[0], psi[1]);
    Eigen::RowVectorXd l2 = bicubic(lambda.component(1), lambda.grid(), psi[0], psi[1]);
    wc[0].row(row(idx)) = dpsi_t[0] * l1 + dpsi_t[1] * l2;
    wc[1].row(row(idx)) = dpsi_s[0] * l1 + dpsi_s[1] * l2;
  }
  out.witness = Cube(F.total, 2, N, std::move(wg), std::move(wc));
  out.witness_boundary_defect = homotopy_boundary_defect(out.witness);
  out.witness_residual = morphism_residual(out.witness).max();
  return out;
}

nlohmann::json to_json(const TransgressionResult& r) {
  return {{"value", std::vector<double>(r.value.data(), r.value.data() + r.value.size())},
          {"method", r.method},
          {"N", r.N},
          {"error_estimate", r.error_estimate}};
}

nlohmann::json to_json(const MonodromyReport& r) {
  nlohmann::json j;
  j["basepoint"] = std::vector<double>(r.basepoint.data(), r.basepoint.data() + r.basepoint.size());
  j["labels"] = r.labels;
  j["periods"] = nlohmann::json::array();
  for (std::size_t k = 0; k < r.periods.size(); ++k) {
    nlohmann::json p = to_json(r.periods[k]);
    p["label"] = r.labels[k];
    p["sphere_ok"] = static_cast<bool>(r.sphere_ok[k]);
    j["periods"].push_back(p);
  }
  j["pairs"] = nlohmann::json::array();
  for (const auto& p : r.pairs)
    j["pairs"].push_back({{"i", r.labels[static_cast<std::size_t>(p.i)]},
                          {"j", r.labels[static_cast<std::size_t>(p.j)]},
                          {"parallel", p.parallel},
                          {"ratio", p.test.ratio},
                          {"commensurable", p.test.commensurable},
                          {"p", p.test.p},
                          {"q", p.test.q}});
  j["lattice_rank"] = r.lattice_rank;
  j["discrete"] = r.discrete;
  return j;
}

}  // namespace lalg
