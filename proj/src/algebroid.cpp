#include "lalg/algebroid.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace lalg {

namespace {

std::string format_point(const Eigen::VectorXd& x) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ')';
  return os.str();
}

std::span<const double> as_span(const Eigen::VectorXd& x) {
  return {x.data(), static_cast<std::size_t>(x.size())};
}

}  // namespace

ChartEscape::ChartEscape(const std::string& where, Eigen::VectorXd point)
    : std::runtime_error(where + ": point " + format_point(point) + " left the chart box"),
      point_(std::move(point)) {}

Chart::Chart(std::vector<std::string> names_, Eigen::VectorXd lo_, Eigen::VectorXd hi_)
    : names(std::move(names_)), lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != dim() || hi.size() != dim()) throw ValidationError("chart bounds do not match its dimension");
  std::set<std::string> seen;
  for (int a = 0; a < dim(); ++a) {
    if (!(lo[a] < hi[a])) throw ValidationError("chart bound lo >= hi for coordinate '" + names[a] + "'");
    if (!seen.insert(names[a]).second) throw ValidationError("duplicate coordinate name '" + names[a] + "'");
  }
}

bool Chart::contains(const Eigen::VectorXd& x) const {
  if (x.size() != dim()) return false;
  for (int a = 0; a < dim(); ++a)
    if (!(x[a] >= lo[a] && x[a] <= hi[a])) return false;
  return true;
}

void Chart::require(const Eigen::VectorXd& x, const std::string& where) const {
  if (!contains(x)) throw ChartEscape(where, x);
}

Chart point_chart() { return Chart({}, Eigen::VectorXd(0), Eigen::VectorXd(0)); }

Chart box_chart(std::vector<std::string> names, double lo, double hi) {
  auto m = static_cast<Eigen::Index>(names.size());
  return Chart(std::move(names), Eigen::VectorXd::Constant(m, lo), Eigen::VectorXd::Constant(m, hi));
}

std::vector<Eigen::VectorXd> sample_points(const Chart& chart, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Eigen::VectorXd> out;
  int count = chart.dim() == 0 ? 1 : n;
  for (int k = 0; k < count; ++k) {
    Eigen::VectorXd x(chart.dim());
    for (int a = 0; a < chart.dim(); ++a) x[a] = chart.lo[a] + (chart.hi[a] - chart.lo[a]) * u(rng);
    out.push_back(std::move(x));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct Algebroid::Impl {
  Chart chart;
  std::vector<std::string> frame;
  Matrix anchor;                                          // r x m
  std::vector<std::vector<std::vector<Expr>>> structure;  // [i][j][l], i<j filled
  ProgramVector anchor_prog;                              // row-major r*m
  ProgramVector structure_prog;                           // (pair index)*r + l
  std::vector<std::pair<int, int>> pairs;                 // i<j with some nonzero entry
};

Algebroid::Algebroid(Chart chart, std::vector<std::string> frame, Matrix anchor,
                     std::vector<std::vector<std::vector<Expr>>> structure) {
  auto impl = std::make_shared<Impl>();
  const int r = static_cast<int>(frame.size());
  const int m = chart.dim();
  if (static_cast<int>(anchor.size()) != r) throw ValidationError("anchor must have one row per frame element");
  for (const auto& row : anchor)
    if (static_cast<int>(row.size()) != m) throw ValidationError("anchor rows must have one entry per coordinate");
  std::set<std::string> allowed(chart.names.begin(), chart.names.end());
  auto check_vars = [&](const Expr& e, const std::string& what) {
    for (const auto& v : variables(e))
      if (!allowed.count(v)) throw ValidationError(what + " uses '" + v + "', which is not a chart coordinate");
  };
  impl->structure.assign(static_cast<std::size_t>(r),
                         std::vector<std::vector<Expr>>(static_cast<std::size_t>(r), std::vector<Expr>(static_cast<std::size_t>(r))));
  if (!structure.empty()) {
    if (static_cast<int>(structure.size()) != r) throw ValidationError("structure must be r x r x r");
    for (int i = 0; i < r; ++i) {
      if (static_cast<int>(structure[i].size()) != r) throw ValidationError("structure must be r x r x r");
      for (int j = i + 1; j < r; ++j) {
        const auto& v = structure[i][j];
        if (v.empty()) continue;
        if (static_cast<int>(v.size()) != r) throw ValidationError("structure must be r x r x r");
        for (int l = 0; l < r; ++l) {
          check_vars(v[l], "structure function");
          impl->structure[i][j][l] = v[l];
        }
      }
    }
  }
  std::vector<Expr> flat_anchor;
  for (const auto& row : anchor)
    for (const auto& e : row) {
      check_vars(e, "anchor entry");
      flat_anchor.push_back(e);
    }
  std::vector<Expr> flat_struct;
  for (int i = 0; i < r; ++i)
    for (int j = i + 1; j < r; ++j) {
      const auto& v = impl->structure[i][j];
      if (std::all_of(v.begin(), v.end(), [](const Expr& e) { return e.is_zero(); })) continue;
      impl->pairs.emplace_back(i, j);
      flat_struct.insert(flat_struct.end(), v.begin(), v.end());
    }
  impl->anchor_prog = ProgramVector(flat_anchor, chart.names);
  impl->structure_prog = ProgramVector(flat_struct, chart.names);
  impl->chart = std::move(chart);
  impl->frame = std::move(frame);
  impl->anchor = std::move(anchor);
  impl_ = std::move(impl);
}

const Chart& Algebroid::chart() const { return impl_->chart; }
int Algebroid::rank() const { return static_cast<int>(impl_->frame.size()); }
const std::vector<std::string>& Algebroid::frame() const { return impl_->frame; }
const Expr& Algebroid::anchor(int i, int a) const { return impl_->anchor[i][a]; }

Expr Algebroid::structure(int i, int j, int l) const {
  if (i == j) return Expr();
  if (i < j) return impl_->structure[i][j][l];
  return -impl_->structure[j][i][l];
}

Eigen::MatrixXd Algebroid::anchor_at(const Eigen::VectorXd& x) const {
  const int r = rank(), m = dim();
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(r, m);
  if (r * m > 0) impl_->anchor_prog(as_span(x), out.data());
  return out;
}

std::vector<Eigen::MatrixXd> Algebroid::structure_at(const Eigen::VectorXd& x) const {
  const int r = rank();
  std::vector<Eigen::MatrixXd> T(static_cast<std::size_t>(r), Eigen::MatrixXd::Zero(r, r));
  std::vector<double> vals(impl_->structure_prog.size());
  if (!vals.empty()) impl_->structure_prog(as_span(x), vals.data());
  for (std::size_t p = 0; p < impl_->pairs.size(); ++p) {
    auto [i, j] = impl_->pairs[p];
    for (int l = 0; l < r; ++l) {
      double c = vals[p * static_cast<std::size_t>(r) + static_cast<std::size_t>(l)];
      T[l](i, j) = c;
      T[l](j, i) = -c;
    }
  }
  return T;
}

Eigen::VectorXd Algebroid::bracket_at(const Eigen::VectorXd& x, const Eigen::VectorXd& a,
                                      const Eigen::VectorXd& b) const {
  const int r = rank();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(r);
  if (impl_->pairs.empty()) return out;
  thread_local std::vector<double> vals;
  vals.resize(impl_->structure_prog.size());
  impl_->structure_prog(as_span(x), vals.data());
  for (std::size_t p = 0; p < impl_->pairs.size(); ++p) {
    auto [i, j] = impl_->pairs[p];
    double w = a[i] * b[j] - a[j] * b[i];
    if (w == 0.0) continue;
    for (int l = 0; l < r; ++l) out[l] += w * vals[p * static_cast<std::size_t>(r) + static_cast<std::size_t>(l)];
  }
  return out;
}

Eigen::VectorXd Algebroid::anchor_vector(const Eigen::VectorXd& x, const Eigen::VectorXd& a) const {
  return anchor_at(x).transpose() * a;
}

// ---------------------------------------------------------------------------

Section::Section(Algebroid owner, std::vector<Expr> coeffs) : owner_(std::move(owner)), coeffs_(std::move(coeffs)) {
  if (static_cast<int>(coeffs_.size()) != owner_.rank())
    throw ValidationError("section needs " + std::to_string(owner_.rank()) + " coefficients");
}

Eigen::VectorXd Section::eval(const Env& env) const {
  Eigen::VectorXd out(rank());
  for (int i = 0; i < rank(); ++i) out[i] = lalg::eval(coeffs_[i], env);
  return out;
}

Section frame_section(const Algebroid& A, int i) {
  std::vector<Expr> c(static_cast<std::size_t>(A.rank()));
  c.at(static_cast<std::size_t>(i)) = Expr(1.0);
  return Section(A, std::move(c));
}

Section zero_section(const Algebroid& A) { return Section(A, std::vector<Expr>(static_cast<std::size_t>(A.rank()))); }

namespace {

void require_same(const Section& x, const Section& y) {
  if (!x.algebroid().same_as(y.algebroid())) throw ValidationError("sections belong to different algebroids");
}

}  // namespace

Section operator+(const Section& x, const Section& y) {
  require_same(x, y);
  std::vector<Expr> c;
  for (int i = 0; i < x.rank(); ++i) c.push_back(x[i] + y[i]);
  return Section(x.algebroid(), std::move(c));
}

Section operator-(const Section& x, const Section& y) {
  require_same(x, y);
  std::vector<Expr> c;
  for (int i = 0; i < x.rank(); ++i) c.push_back(x[i] - y[i]);
  return Section(x.algebroid(), std::move(c));
}

Section operator*(const Expr& f, const Section& x) {
  std::vector<Expr> c;
  for (int i = 0; i < x.rank(); ++i) c.push_back(f * x[i]);
  return Section(x.algebroid(), std::move(c));
}

Section pointwise_bracket(const Section& x, const Section& y) {
  require_same(x, y);
  const Algebroid& A = x.algebroid();
  const int r = A.rank();
  std::vector<Expr> c(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    if (x[i].is_zero()) continue;
    for (int j = 0; j < r; ++j) {
      if (i == j || y[j].is_zero()) continue;
      Expr w = x[i] * y[j];
      for (int l = 0; l < r; ++l) {
        Expr s = A.structure(i, j, l);
        if (!s.is_zero()) c[l] = c[l] + w * s;
      }
    }
  }
  return Section(A, std::move(c));
}

Expr apply_field(const Chart& chart, const VectorField& v, const Expr& f) {
  Expr out;
  for (int a = 0; a < chart.dim(); ++a) {
    if (v[a].is_zero()) continue;
    Expr d = diff(f, chart.names[a]);
    if (!d.is_zero()) out = out + v[a] * d;
  }
  return out;
}

VectorField commutator(const Chart& chart, const VectorField& v, const VectorField& w) {
  VectorField out;
  for (int a = 0; a < chart.dim(); ++a) out.push_back(apply_field(chart, v, w[a]) - apply_field(chart, w, v[a]));
  return out;
}

VectorField anchor_apply(const Algebroid& A, const Section& x) {
  if (!x.algebroid().same_as(A)) throw ValidationError("section does not belong to this algebroid");
  VectorField out(static_cast<std::size_t>(A.dim()));
  for (int i = 0; i < A.rank(); ++i) {
    if (x[i].is_zero()) continue;
    for (int a = 0; a < A.dim(); ++a)
      if (!A.anchor(i, a).is_zero()) out[a] = out[a] + x[i] * A.anchor(i, a);
  }
  return out;
}

Section bracket(const Algebroid& A, const Section& x, const Section& y) {
  if (!x.algebroid().same_as(A) || !y.algebroid().same_as(A))
    throw ValidationError("bracket of sections from mismatched algebroids");
  Section out = pointwise_bracket(x, y);
  VectorField vx = anchor_apply(A, x), vy = anchor_apply(A, y);
  std::vector<Expr> c = out.coeffs();
  for (int k = 0; k < A.rank(); ++k) c[k] = c[k] + apply_field(A.chart(), vx, y[k]) - apply_field(A.chart(), vy, x[k]);
  return Section(A, std::move(c));
}

AxiomReport check_axioms(const Algebroid& A, int n_samples, double tol, std::uint64_t seed) {
  if (n_samples < 1) throw ValidationError("check_axioms needs at least one sample");
  const int r = A.rank();
  const Chart& chart = A.chart();
  std::vector<Section> e;
  for (int i = 0; i < r; ++i) e.push_back(frame_section(A, i));
  std::vector<std::vector<Section>> br(static_cast<std::size_t>(r), std::vector<Section>(static_cast<std::size_t>(r)));
  for (int i = 0; i < r; ++i)
    for (int j = i + 1; j < r; ++j) br[i][j] = bracket(A, e[i], e[j]);

  std::vector<Expr> jacobi;  // flattened components of the cyclic sums
  for (int i = 0; i < r; ++i)
    for (int j = i + 1; j < r; ++j)
      for (int k = j + 1; k < r; ++k) {
        // [[e_i,e_j],e_k] + [[e_j,e_k],e_i] + [[e_k,e_i],e_j]
        Section s = bracket(A, br[i][j], e[k]) + bracket(A, br[j][k], e[i]) - bracket(A, br[i][k], e[j]);
        jacobi.insert(jacobi.end(), s.coeffs().begin(), s.coeffs().end());
      }
  std::vector<Expr> anchor_defect;
  std::vector<VectorField> fields;
  for (int i = 0; i < r; ++i) fields.push_back(anchor_apply(A, e[i]));
  for (int i = 0; i < r; ++i)
    for (int j = i + 1; j < r; ++j) {
      VectorField lhs = anchor_apply(A, br[i][j]);
      VectorField rhs = commutator(chart, fields[i], fields[j]);
      for (int a = 0; a < chart.dim(); ++a) anchor_defect.push_back(lhs[a] - rhs[a]);
    }

  ProgramVector jp(jacobi, chart.names), ap(anchor_defect, chart.names);
  AxiomReport rep;
  rep.tol = tol;
  double worst = -1.0;
  std::vector<double> jv(jp.size()), av(ap.size());
  for (const auto& x : sample_points(chart, n_samples, seed)) {
    ++rep.samples;
    jp(as_span(x), jv.data());
    ap(as_span(x), av.data());
    double jmax = 0.0, amax = 0.0;
    // norms per triple / pair, max over them
    for (std::size_t t = 0; t < jv.size(); t += static_cast<std::size_t>(r)) {
      double s = 0.0;
      for (int l = 0; l < r; ++l) s += jv[t + static_cast<std::size_t>(l)] * jv[t + static_cast<std::size_t>(l)];
      jmax = std::max(jmax, std::sqrt(s));
    }
    const auto m = static_cast<std::size_t>(std::max(chart.dim(), 1));
    for (std::size_t t = 0; t < av.size(); t += m) {
      double s = 0.0;
      for (std::size_t a = 0; a < m && t + a < av.size(); ++a) s += av[t + a] * av[t + a];
      amax = std::max(amax, std::sqrt(s));
    }
    rep.jacobi = std::max(rep.jacobi, jmax);
    rep.anchor = std::max(rep.anchor, amax);
    if (std::max(jmax, amax) > worst) {
      worst = std::max(jmax, amax);
      rep.witness = x;
    }
  }
  rep.pass = rep.jacobi < tol && rep.anchor < tol;
  return rep;
}

// ---------------------------------------------------------------------------

namespace {

using Tensor3 = std::vector<std::vector<std::vector<Expr>>>;

Tensor3 empty_structure(int r) {
  return Tensor3(static_cast<std::size_t>(r), std::vector<std::vector<Expr>>(static_cast<std::size_t>(r)));
}

std::vector<Expr> zeros(int n) { return std::vector<Expr>(static_cast<std::size_t>(n)); }

}  // namespace

Algebroid make_tangent(const Chart& chart) {
  const int m = chart.dim();
  Algebroid::Matrix anchor(static_cast<std::size_t>(m), zeros(m));
  std::vector<std::string> frame;
  for (int a = 0; a < m; ++a) {
    anchor[a][a] = Expr(1.0);
    frame.push_back("d_" + chart.names[a]);
  }
  return Algebroid(chart, std::move(frame), std::move(anchor), empty_structure(m));
}

Algebroid make_lie_algebra(const std::vector<std::vector<std::vector<double>>>& consts, const Chart& chart) {
  const int r = static_cast<int>(consts.size());
  Tensor3 c = empty_structure(r);
  std::vector<std::string> frame;
  for (int i = 0; i < r; ++i) {
    frame.push_back("e" + std::to_string(i + 1));
    if (static_cast<int>(consts[i].size()) != r) throw ValidationError("structure constants must be r x r x r");
    for (int j = 0; j < r; ++j) {
      if (static_cast<int>(consts[i][j].size()) != r) throw ValidationError("structure constants must be r x r x r");
      for (int l = 0; l < r; ++l)
        if (consts[i][j][l] != -consts[j][i][l])
          throw ValidationError("structure constants are not antisymmetric");
    }
    for (int j = i + 1; j < r; ++j) {
      c[i][j] = zeros(r);
      for (int l = 0; l < r; ++l) c[i][j][l] = Expr(consts[i][j][l]);
    }
  }
  Algebroid::Matrix anchor(static_cast<std::size_t>(r), zeros(chart.dim()));
  return Algebroid(chart, std::move(frame), std::move(anchor), std::move(c));
}

namespace {

void require_antisymmetric(const Chart& chart, const Algebroid::Matrix& pi, const std::string& what) {
  const int m = chart.dim();
  if (static_cast<int>(pi.size()) != m) throw ValidationError(what + " must be m x m");
  for (const auto& row : pi)
    if (static_cast<int>(row.size()) != m) throw ValidationError(what + " must be m x m");
  std::vector<Expr> sums;
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) sums.push_back(pi[i][j] + pi[j][i]);
  ProgramVector prog(sums, chart.names);
  std::vector<double> v(sums.size());
  for (const auto& x : sample_points(chart, 8, 1)) {
    prog(as_span(x), v.data());
    for (double s : v)
      if (std::abs(s) > 1e-12) throw ValidationError(what + " is not antisymmetric");
  }
}

}  // namespace

Algebroid make_cotangent_poisson(const Chart& chart, const Algebroid::Matrix& pi) {
  const int m = chart.dim();
  require_antisymmetric(chart, pi, "Poisson bivector");
  Algebroid::Matrix anchor(static_cast<std::size_t>(m), zeros(m));
  Tensor3 c = empty_structure(m);
  std::vector<std::string> frame;
  for (int i = 0; i < m; ++i) {
    frame.push_back("d" + chart.names[i]);
    for (int a = 0; a < m; ++a) anchor[i][a] = pi[i][a];
    for (int j = i + 1; j < m; ++j) {
      c[i][j] = zeros(m);
      for (int l = 0; l < m; ++l) c[i][j][l] = diff(pi[i][j], chart.names[l]);
    }
  }
  return Algebroid(chart, std::move(frame), std::move(anchor), std::move(c));
}

Algebroid make_jacobi_extension(const Chart& chart, const Algebroid::Matrix& pi) {
  Algebroid base = make_cotangent_poisson(chart, pi);
  const int m = chart.dim();
  std::vector<Algebroid::Matrix> action(static_cast<std::size_t>(m), Algebroid::Matrix(1, zeros(1)));
  Tensor3 lambda = empty_structure(m);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) lambda[i][j] = {pi[i][j]};
  return make_rep_extension(base, action, lambda);
}

Algebroid make_rep_extension(const Algebroid& A, const std::vector<Algebroid::Matrix>& action, const Tensor3& lambda) {
  const int r = A.rank();
  const int m = A.dim();
  const int d = action.empty() ? 0 : static_cast<int>(action.front().size());
  if (static_cast<int>(action.size()) != r) throw ValidationError("representation needs one matrix per frame element");
  for (const auto& g : action) {
    if (static_cast<int>(g.size()) != d) throw ValidationError("representation matrices must be d x d");
    for (const auto& row : g)
      if (static_cast<int>(row.size()) != d) throw ValidationError("representation matrices must be d x d");
  }
  if (!lambda.empty() && static_cast<int>(lambda.size()) != r) throw ValidationError("cocycle must be r x r");
  const int R = d + r;
  std::vector<std::string> frame;
  for (int s = 0; s < d; ++s) frame.push_back("k" + std::to_string(s + 1));
  for (const auto& n : A.frame()) frame.push_back(n);

  Algebroid::Matrix anchor(static_cast<std::size_t>(R), zeros(m));
  for (int i = 0; i < r; ++i)
    for (int a = 0; a < m; ++a) anchor[d + i][a] = A.anchor(i, a);

  Tensor3 c = empty_structure(R);
  for (int s = 0; s < d; ++s)
    for (int i = 0; i < r; ++i) {
      // [k_s, e_i] = -D_{e_i} k_s
      auto& v = c[s][d + i] = zeros(R);
      for (int u = 0; u < d; ++u) v[u] = -action[i][u][s];
    }
  for (int i = 0; i < r; ++i)
    for (int j = i + 1; j < r; ++j) {
      auto& v = c[d + i][d + j] = zeros(R);
      if (!lambda.empty() && !lambda[i][j].empty()) {
        if (static_cast<int>(lambda[i][j].size()) != d) throw ValidationError("cocycle entries need d components");
        for (int u = 0; u < d; ++u) v[u] = lambda[i][j][u];
      }
      for (int l = 0; l < r; ++l) v[d + l] = A.structure(i, j, l);
    }
  return Algebroid(A.chart(), std::move(frame), std::move(anchor), std::move(c));
}

Algebroid make_product(const Algebroid& A, const Algebroid& K) {
  if (K.dim() != 0) throw ValidationError("product factor must be a Lie algebra on a point chart");
  const int r = A.rank(), k = K.rank(), R = r + k, m = A.dim();
  std::vector<std::string> frame = A.frame();
  for (const auto& n : K.frame()) frame.push_back(n);
  Algebroid::Matrix anchor(static_cast<std::size_t>(R), zeros(m));
  for (int i = 0; i < r; ++i)
    for (int a = 0; a < m; ++a) anchor[i][a] = A.anchor(i, a);
  Tensor3 c = empty_structure(R);
  for (int i = 0; i < r; ++i)
    for (int j = i + 1; j < r; ++j) {
      c[i][j] = zeros(R);
      for (int l = 0; l < r; ++l) c[i][j][l] = A.structure(i, j, l);
    }
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) {
      c[r + i][r + j] = zeros(R);
      for (int l = 0; l < k; ++l) c[r + i][r + j][r + l] = K.structure(i, j, l);
    }
  return Algebroid(A.chart(), std::move(frame), std::move(anchor), std::move(c));
}

std::vector<std::vector<std::vector<double>>> so3_constants() {
  std::vector<std::vector<std::vector<double>>> c(3, std::vector<std::vector<double>>(3, std::vector<double>(3, 0.0)));
  for (int i = 0; i < 3; ++i) {
    int j = (i + 1) % 3, k = (i + 2) % 3;
    c[i][j][k] = 1.0;
    c[j][i][k] = -1.0;
  }
  return c;
}

}  // namespace lalg
