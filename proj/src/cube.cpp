#include "lalg/cube.hpp"

#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace lalg {

namespace {

std::span<const double> as_span(const Eigen::VectorXd& x) {
  return {x.data(), static_cast<std::size_t>(x.size())};
}

Eigen::Index row(std::size_t idx) { return static_cast<Eigen::Index>(idx); }

void require_axis(const Cube& c, int p, int max, const char* what) {
  if (p < 1 || p > max) throw ValidationError(std::string(what) + ": axis " + std::to_string(p) + " out of range 1.." + std::to_string(max) + " for a cube of order " + std::to_string(c.order()));
}

}  // namespace

Cube::Cube(Algebroid A, int n, int N, Eigen::MatrixXd gamma, std::vector<Eigen::MatrixXd> comps)
    : A_(std::move(A)), grid_(n, N), gamma_(std::move(gamma)), comps_(std::move(comps)) {
  const auto nodes = row(grid_.size());
  if (gamma_.rows() != nodes || gamma_.cols() != A_.dim()) throw ValidationError("cube base path has the wrong shape");
  if (static_cast<int>(comps_.size()) != n) throw ValidationError("cube needs one component block per axis");
  for (const auto& c : comps_)
    if (c.rows() != nodes || c.cols() != A_.rank()) throw ValidationError("cube component has the wrong shape");
  for (Eigen::Index i = 0; i < nodes; ++i) A_.chart().require(gamma_.row(i).transpose(), "cube base path");
}

Cube zero_cube(const Algebroid& A, int n, int N, const Eigen::VectorXd& x0) {
  Grid g(n, N);
  Eigen::MatrixXd gamma = x0.transpose().replicate(row(g.size()), 1);
  std::vector<Eigen::MatrixXd> comps(static_cast<std::size_t>(n), Eigen::MatrixXd::Zero(row(g.size()), A.rank()));
  return Cube(A, n, N, std::move(gamma), std::move(comps));
}

MorphismResidual morphism_residual(const Cube& c) {
  if (c.resolution() < 4) throw ValidationError("morphism residual needs N >= 4");
  const Grid& g = c.grid();
  const Algebroid& A = c.algebroid();
  const int n = c.order();
  MorphismResidual res;
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    if (!g.interior(idx)) continue;
    Eigen::VectorXd x = c.gamma().row(row(idx)).transpose();
    Eigen::MatrixXd rho = A.anchor_at(x);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd ai = c.component(i).row(row(idx)).transpose();
      Eigen::VectorXd dg = axis_derivative(c.gamma(), g, idx, i).transpose();
      res.base = std::max(res.base, (dg - rho.transpose() * ai).norm());
      for (int j = i + 1; j < n; ++j) {
        Eigen::VectorXd aj = c.component(j).row(row(idx)).transpose();
        Eigen::VectorXd dai = axis_derivative(c.component(i), g, idx, j).transpose();
        Eigen::VectorXd daj = axis_derivative(c.component(j), g, idx, i).transpose();
        res.structure = std::max(res.structure, (dai - daj - A.bracket_at(x, ai, aj)).norm());
      }
    }
  }
  return res;
}

double sphere_boundary_defect(const Cube& c) {
  const Grid& g = c.grid();
  const int n = c.order(), N = c.resolution();
  double worst = 0.0;
  for (std::size_t idx = 0; idx < g.size(); ++idx)
    for (int k = 0; k < n; ++k) {
      bool on_face = false;
      for (int j = 0; j < n && !on_face; ++j) {
        int t = g.coord(idx, j);
        on_face = j != k && (t == 0 || t == N);
      }
      if (on_face) worst = std::max(worst, c.component(k).row(row(idx)).norm());
    }
  return worst;
}

bool is_sphere(const Cube& c, double tol) {
  if (sphere_boundary_defect(c) >= tol) return false;
  return c.resolution() < 4 || morphism_residual(c).max() < tol;
}

double homotopy_boundary_defect(const Cube& h) {
  const Grid& g = h.grid();
  const int n = h.order() - 1, N = h.resolution();
  if (n < 0) throw ValidationError("a homotopy has order at least 1");
  double worst = 0.0;
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    bool on_face = false;
    for (int k = 0; k < n && !on_face; ++k) {
      int t = g.coord(idx, k);
      on_face = t == 0 || t == N;
    }
    if (on_face) worst = std::max(worst, h.component(n).row(row(idx)).norm());
  }
  return worst;
}

bool is_homotopy(const Cube& h, double tol) {
  if (homotopy_boundary_defect(h) >= tol) return false;
  return h.resolution() < 4 || morphism_residual(h).max() < tol;
}

Cube face(const Cube& c, int p, int eps) {
  require_axis(c, p, c.order(), "face");
  if (eps != 0 && eps != 1) throw ValidationError("face: eps must be 0 or 1");
  const int n = c.order(), N = c.resolution(), ax = p - 1;
  Grid fg(n - 1, N);
  Eigen::MatrixXd gamma(row(fg.size()), c.gamma().cols());
  std::vector<Eigen::MatrixXd> comps;
  for (int k = 0; k < n; ++k)
    if (k != ax) comps.emplace_back(row(fg.size()), c.algebroid().rank());
  for (std::size_t f = 0; f < fg.size(); ++f) {
    std::vector<int> k = fg.multi(f);
    k.insert(k.begin() + ax, eps * N);
    std::size_t idx = c.grid().index(k);
    gamma.row(row(f)) = c.gamma().row(row(idx));
    int out = 0;
    for (int a = 0; a < n; ++a)
      if (a != ax) comps[static_cast<std::size_t>(out++)].row(row(f)) = c.component(a).row(row(idx));
  }
  return Cube(c.algebroid(), n - 1, N, std::move(gamma), std::move(comps));
}

Cube degeneracy(const Cube& c, int p) {
  require_axis(c, p, c.order() + 1, "degeneracy");
  const int n = c.order(), N = c.resolution(), ax = p - 1;
  Grid dg(n + 1, N);
  Eigen::MatrixXd gamma(row(dg.size()), c.gamma().cols());
  std::vector<Eigen::MatrixXd> comps(static_cast<std::size_t>(n + 1), Eigen::MatrixXd::Zero(row(dg.size()), c.algebroid().rank()));
  for (std::size_t idx = 0; idx < dg.size(); ++idx) {
    std::vector<int> k = dg.multi(idx);
    k.erase(k.begin() + ax);
    std::size_t src = c.grid().index(k);
    gamma.row(row(idx)) = c.gamma().row(row(src));
    int in = 0;
    for (int a = 0; a < n + 1; ++a)
      if (a != ax) comps[static_cast<std::size_t>(a)].row(row(idx)) = c.component(in++).row(row(src));
  }
  return Cube(c.algebroid(), n + 1, N, std::move(gamma), std::move(comps));
}

namespace {

// Resample a cube along one axis: output nodes with axis coordinate k read the
// source at parameter u[k] and scale the axis component by scale[k].
void resample_axis(const Cube& src, int ax, std::size_t out_idx, double u, double scale,
                   Eigen::MatrixXd& gamma, std::vector<Eigen::MatrixXd>& comps) {
  const Grid& g = src.grid();
  const int N = g.resolution();
  std::size_t base = out_idx - static_cast<std::size_t>(g.coord(out_idx, ax)) * g.stride(ax);
  gamma.row(row(out_idx)) = line_interpolate(src.gamma(), base, g.stride(ax), N, u);
  for (int a = 0; a < src.order(); ++a) {
    Eigen::RowVectorXd v = line_interpolate(src.component(a), base, g.stride(ax), N, u);
    comps[static_cast<std::size_t>(a)].row(row(out_idx)) = a == ax ? Eigen::RowVectorXd(scale * v) : v;
  }
}

}  // namespace

Cube reparam_cutoff(const Cube& c, int axis) {
  require_axis(c, axis, c.order(), "reparam_cutoff");
  const int ax = axis - 1, N = c.resolution();
  const Grid& g = c.grid();
  std::vector<double> u(static_cast<std::size_t>(N + 1)), scale(u.size());
  for (int k = 0; k <= N; ++k) {
    u[k] = cutoff(k * g.h());
    scale[k] = cutoff_derivative(k * g.h());
  }
  Eigen::MatrixXd gamma(c.gamma().rows(), c.gamma().cols());
  std::vector<Eigen::MatrixXd> comps(c.components().size(), Eigen::MatrixXd(row(g.size()), c.algebroid().rank()));
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    int k = g.coord(idx, ax);
    resample_axis(c, ax, idx, u[k], scale[k], gamma, comps);
  }
  return Cube(c.algebroid(), c.order(), c.resolution(), std::move(gamma), std::move(comps));
}

double cube_distance(const Cube& a, const Cube& b) {
  if (a.order() != b.order() || a.resolution() != b.resolution() || a.gamma().cols() != b.gamma().cols() ||
      a.algebroid().rank() != b.algebroid().rank())
    throw ValidationError("cube_distance: cubes have different shapes");
  double d = a.gamma().rows() ? (a.gamma() - b.gamma()).cwiseAbs().maxCoeff() : 0.0;
  if (a.gamma().cols() == 0) d = 0.0;
  for (int k = 0; k < a.order(); ++k)
    if (a.component(k).size()) d = std::max(d, (a.component(k) - b.component(k)).cwiseAbs().maxCoeff());
  return d;
}

Cube concat(const Cube& c1, const Cube& c0, int axis, double tol) {
  require_axis(c0, axis, c0.order(), "concat");
  if (c1.order() != c0.order() || c1.resolution() != c0.resolution() || !c1.algebroid().same_as(c0.algebroid()))
    throw ValidationError("concat: cubes differ in order, resolution or algebroid");
  double gap = cube_distance(face(c0, axis, 1), face(c1, axis, 0));
  if (gap > tol)
    throw ValidationError("concat: cubes are not composable (face mismatch " + std::to_string(gap) + ")");
  const int ax = axis - 1;
  const Grid& g = c0.grid();
  Eigen::MatrixXd gamma(c0.gamma().rows(), c0.gamma().cols());
  std::vector<Eigen::MatrixXd> comps(c0.components().size(), Eigen::MatrixXd(row(g.size()), c0.algebroid().rank()));
  const int N = g.resolution();
  std::vector<double> u(static_cast<std::size_t>(N + 1)), scale(u.size());
  for (int k = 0; k <= N; ++k) {
    double s = 2 * k * g.h() - (2 * k <= N ? 0.0 : 1.0);
    u[k] = cutoff(s);
    scale[k] = 2 * cutoff_derivative(s);
  }
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    int k = g.coord(idx, ax);
    resample_axis(2 * k <= N ? c0 : c1, ax, idx, u[k], scale[k], gamma, comps);
  }
  return Cube(c0.algebroid(), c0.order(), c0.resolution(), std::move(gamma), std::move(comps));
}

Cube reverse(const Cube& c, int axis) {
  require_axis(c, axis, c.order(), "reverse");
  const int ax = axis - 1, N = c.resolution();
  const Grid& g = c.grid();
  Eigen::MatrixXd gamma(c.gamma().rows(), c.gamma().cols());
  std::vector<Eigen::MatrixXd> comps(c.components().size(), Eigen::MatrixXd(row(g.size()), c.algebroid().rank()));
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    int k = g.coord(idx, ax);
    std::size_t src = idx + static_cast<std::size_t>(N - 2 * k) * g.stride(ax);
    gamma.row(row(idx)) = c.gamma().row(row(src));
    for (int a = 0; a < c.order(); ++a)
      comps[static_cast<std::size_t>(a)].row(row(idx)) = (a == ax ? -1.0 : 1.0) * c.component(a).row(row(src));
  }
  return Cube(c.algebroid(), c.order(), N, std::move(gamma), std::move(comps));
}

Cube coarsen(const Cube& c) {
  const int n = c.order(), N = c.resolution();
  if (N % 2) throw ValidationError("coarsen: resolution must be even");
  Grid cg(n, N / 2);
  Eigen::MatrixXd gamma(row(cg.size()), c.gamma().cols());
  std::vector<Eigen::MatrixXd> comps(static_cast<std::size_t>(n), Eigen::MatrixXd(row(cg.size()), c.algebroid().rank()));
  for (std::size_t idx = 0; idx < cg.size(); ++idx) {
    std::vector<int> k = cg.multi(idx);
    for (int& v : k) v *= 2;
    std::size_t src = c.grid().index(k);
    gamma.row(row(idx)) = c.gamma().row(row(src));
    for (int a = 0; a < n; ++a) comps[static_cast<std::size_t>(a)].row(row(idx)) = c.component(a).row(row(src));
  }
  return Cube(c.algebroid(), n, N / 2, std::move(gamma), std::move(comps));
}

std::vector<std::string> time_names(int n) {
  std::vector<std::string> out;
  for (int k = 1; k <= n; ++k) out.push_back("t" + std::to_string(k));
  return out;
}

Cube tangent_lift(const Algebroid& A, const std::vector<Expr>& map, int n, int N, const Algebroid::Matrix& sigma) {
  const int m = A.dim(), r = A.rank();
  if (static_cast<int>(map.size()) != m) throw ValidationError("tangent_lift: map needs one expression per chart coordinate");
  if (sigma.empty() && r != m) throw ValidationError("tangent_lift: a splitting is required when rank != dimension");
  if (!sigma.empty()) {
    if (static_cast<int>(sigma.size()) != r) throw ValidationError("tangent_lift: splitting must be r x m");
    for (const auto& rw : sigma)
      if (static_cast<int>(rw.size()) != m) throw ValidationError("tangent_lift: splitting must be r x m");
  }
  auto tn = time_names(n);
  std::vector<Expr> derivs;
  for (int k = 0; k < n; ++k)
    for (const auto& e : map) derivs.push_back(diff(e, tn[k]));
  ProgramVector gp(map, tn), dp(derivs, tn);
  std::vector<Expr> flat_sigma;
  for (const auto& rw : sigma) flat_sigma.insert(flat_sigma.end(), rw.begin(), rw.end());
  ProgramVector sp(flat_sigma, A.chart().names);

  Grid g(n, N);
  Eigen::MatrixXd gamma(row(g.size()), m);
  std::vector<Eigen::MatrixXd> comps(static_cast<std::size_t>(n), Eigen::MatrixXd(row(g.size()), r));
  Eigen::VectorXd x(m), d(static_cast<Eigen::Index>(n) * m);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> S(r, m);
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    Eigen::VectorXd t = g.point(idx);
    gp(as_span(t), x.data());
    dp(as_span(t), d.data());
    gamma.row(row(idx)) = x.transpose();
    if (!sigma.empty()) sp(as_span(x), S.data());
    for (int k = 0; k < n; ++k) {
      Eigen::VectorXd dk = d.segment(static_cast<Eigen::Index>(k) * m, m);
      if (sigma.empty())
        comps[static_cast<std::size_t>(k)].row(row(idx)) = dk.transpose();
      else
        comps[static_cast<std::size_t>(k)].row(row(idx)) = (S * dk).transpose();
    }
  }
  return Cube(A, n, N, std::move(gamma), std::move(comps));
}

namespace {

std::vector<std::string> section_layout(const TimeSections& ts) {
  std::vector<std::string> layout = ts.algebroid.chart().names;
  for (const auto& t : time_names(ts.n)) {
    if (std::find(layout.begin(), layout.end(), t) != layout.end())
      throw ValidationError("time name '" + t + "' clashes with a chart coordinate");
    layout.push_back(t);
  }
  return layout;
}

void check_sections(const TimeSections& ts) {
  if (static_cast<int>(ts.alphas.size()) != ts.n) throw ValidationError("time sections: need one section per axis");
  for (const auto& s : ts.alphas)
    if (!s.algebroid().same_as(ts.algebroid)) throw ValidationError("time sections: section from another algebroid");
}

}  // namespace

double sections_commutation_residual(const TimeSections& ts, int samples, std::uint64_t seed) {
  check_sections(ts);
  auto layout = section_layout(ts);
  auto tn = time_names(ts.n);
  const Algebroid& A = ts.algebroid;
  std::vector<Expr> defects;
  for (int i = 0; i < ts.n; ++i)
    for (int j = i + 1; j < ts.n; ++j) {
      Section br = bracket(A, ts.alphas[i], ts.alphas[j]);
      for (int l = 0; l < A.rank(); ++l)
        defects.push_back(br[l] - (diff(ts.alphas[i][l], tn[j]) - diff(ts.alphas[j][l], tn[i])));
    }
  if (defects.empty()) return 0.0;
  ProgramVector prog(defects, layout);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> in(layout.size()), out(defects.size());
  double worst = 0.0;
  for (const auto& x : sample_points(A.chart(), samples, seed)) {
    std::copy(x.data(), x.data() + x.size(), in.begin());
    for (int k = 0; k < ts.n; ++k) in[static_cast<std::size_t>(A.dim() + k)] = u(rng);
    prog(in, out.data());
    for (std::size_t p = 0; p < out.size(); p += static_cast<std::size_t>(A.rank())) {
      double s = 0.0;
      for (int l = 0; l < A.rank(); ++l) s += out[p + static_cast<std::size_t>(l)] * out[p + static_cast<std::size_t>(l)];
      worst = std::max(worst, std::sqrt(s));
    }
  }
  return worst;
}

Cube cube_from_sections(const TimeSections& ts, const Eigen::VectorXd& x0, int N, std::vector<int> axis_order) {
  check_sections(ts);
  const Algebroid& A = ts.algebroid;
  const int n = ts.n, m = A.dim(), r = A.rank();
  if (x0.size() != m) throw ValidationError("cube_from_sections: basepoint has the wrong dimension");
  A.chart().require(x0, "cube_from_sections basepoint");
  if (axis_order.empty()) {
    axis_order.resize(static_cast<std::size_t>(n));
    std::iota(axis_order.begin(), axis_order.end(), 0);
  }
  {
    std::set<int> seen(axis_order.begin(), axis_order.end());
    if (static_cast<int>(axis_order.size()) != n || static_cast<int>(seen.size()) != n || *seen.begin() != 0 ||
        *seen.rbegin() != n - 1)
      throw ValidationError("cube_from_sections: axis order must be a permutation of the axes");
  }
  auto layout = section_layout(ts);
  std::vector<ProgramVector> progs;
  for (const auto& s : ts.alphas) progs.emplace_back(s.coeffs(), layout);
  std::vector<double> in(layout.size());
  auto alpha = [&](int k, const Eigen::VectorXd& x, const Eigen::VectorXd& t) {
    std::copy(x.data(), x.data() + m, in.begin());
    std::copy(t.data(), t.data() + n, in.begin() + m);
    Eigen::VectorXd a(r);
    progs[static_cast<std::size_t>(k)](in, a.data());
    return a;
  };

  Grid g(n, N);
  Eigen::MatrixXd gamma(row(g.size()), m);
  gamma.row(0) = x0.transpose();
  std::vector<bool> done_axis(static_cast<std::size_t>(n), false);
  for (int k : axis_order) {
    // start nodes: t_k = 0 and t_j = 0 for every axis not yet processed
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
      bool start = g.coord(idx, k) == 0;
      for (int j = 0; j < n && start; ++j)
        if (j != k && !done_axis[static_cast<std::size_t>(j)] && g.coord(idx, j) != 0) start = false;
      if (!start) continue;
      Eigen::VectorXd t = g.point(idx);
      Eigen::VectorXd x = gamma.row(row(idx)).transpose();
      auto field = [&](double s, const Eigen::VectorXd& y) {
        Eigen::VectorXd ts_ = t;
        ts_[k] = s;
        return Eigen::VectorXd(A.anchor_vector(y, alpha(k, y, ts_)));
      };
      for (int step = 0; step < N; ++step) {
        x = rk4_step(field, step * g.h(), x, g.h());
        A.chart().require(x, "flow of section " + std::to_string(k + 1));
        gamma.row(row(idx + static_cast<std::size_t>(step + 1) * g.stride(k))) = x.transpose();
      }
    }
    done_axis[static_cast<std::size_t>(k)] = true;
  }
  std::vector<Eigen::MatrixXd> comps(static_cast<std::size_t>(n), Eigen::MatrixXd(row(g.size()), r));
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    Eigen::VectorXd x = gamma.row(row(idx)).transpose();
    Eigen::VectorXd t = g.point(idx);
    for (int k = 0; k < n; ++k) comps[static_cast<std::size_t>(k)].row(row(idx)) = alpha(k, x, t).transpose();
  }
  return Cube(A, n, N, std::move(gamma), std::move(comps));
}

Cube complete_along_last_axis(const Algebroid& A, int n, int N, const Eigen::MatrixXd& init_gamma,
                              const std::vector<Eigen::MatrixXd>& init_comps, const LastComponent& last) {
  if (n < 1) throw ValidationError("complete_along_last_axis: order must be >= 1");
  const int m = A.dim(), r = A.rank(), lines = n - 1;
  Grid fg(n - 1, N), g(n, N);
  if (init_gamma.rows() != row(fg.size()) || init_gamma.cols() != m)
    throw ValidationError("complete_along_last_axis: initial base data has the wrong shape");
  if (static_cast<int>(init_comps.size()) != lines) throw ValidationError("complete_along_last_axis: need n-1 initial components");
  for (const auto& c : init_comps)
    if (c.rows() != row(fg.size()) || c.cols() != r) throw ValidationError("complete_along_last_axis: initial component has the wrong shape");

  const auto line_len = static_cast<std::size_t>(N + 1);
  const double h = g.h();
  Eigen::MatrixXd gamma(row(g.size()), m);
  Eigen::MatrixXd an(row(g.size()), r);

  // base path and last component along every t_n line
  for (std::size_t f = 0; f < fg.size(); ++f) {
    const std::size_t base = f * line_len;
    Eigen::VectorXd x = init_gamma.row(row(f)).transpose();
    A.chart().require(x, "lift initial face");
    gamma.row(row(base)) = x.transpose();
    auto field = [&](double s, const Eigen::VectorXd& y) { return Eigen::VectorXd(A.anchor_vector(y, last(f, s, y))); };
    for (int k = 0; k < N; ++k) {
      x = rk4_step(field, k * h, x, h);
      A.chart().require(x, "lifted base path");
      gamma.row(row(base + static_cast<std::size_t>(k + 1))) = x.transpose();
    }
    for (int k = 0; k <= N; ++k) {
      Eigen::VectorXd y = gamma.row(row(base + static_cast<std::size_t>(k))).transpose();
      an.row(row(base + static_cast<std::size_t>(k))) = last(f, k * h, y).transpose();
    }
  }

  std::vector<Eigen::MatrixXd> comps(static_cast<std::size_t>(n), Eigen::MatrixXd(row(g.size()), r));
  comps.back() = an;
  if (lines > 0) {
    // d a_n / d t_i on the full grid
    std::vector<Eigen::MatrixXd> dan(static_cast<std::size_t>(lines), Eigen::MatrixXd(row(g.size()), r));
    for (std::size_t idx = 0; idx < g.size(); ++idx)
      for (int i = 0; i < lines; ++i) dan[static_cast<std::size_t>(i)].row(row(idx)) = axis_derivative4(an, g, idx, i);

    for (std::size_t f = 0; f < fg.size(); ++f) {
      const std::size_t base = f * line_len;
      auto at = [&](const Eigen::MatrixXd& data, double s) {
        return Eigen::VectorXd(line_interpolate(data, base, 1, N, s).transpose());
      };
      auto field = [&](double s, const Eigen::MatrixXd& Y) {
        Eigen::VectorXd x = at(gamma, s), a = at(an, s);
        Eigen::MatrixXd out(r, lines);
        for (int i = 0; i < lines; ++i)
          out.col(i) = at(dan[static_cast<std::size_t>(i)], s) + A.bracket_at(x, Y.col(i), a);
        return out;
      };
      Eigen::MatrixXd Y(r, lines);
      for (int i = 0; i < lines; ++i) Y.col(i) = init_comps[static_cast<std::size_t>(i)].row(row(f)).transpose();
      for (int k = 0;; ++k) {
        for (int i = 0; i < lines; ++i) comps[static_cast<std::size_t>(i)].row(row(base + static_cast<std::size_t>(k))) = Y.col(i).transpose();
        if (k == N) break;
        Y = rk4_step(field, k * h, Y, h);
      }
    }
  }
  return Cube(A, n, N, std::move(gamma), std::move(comps));
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> flatten(const Eigen::MatrixXd& M) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(M.size()));
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) out.push_back(M(i, j));
  return out;
}

Eigen::MatrixXd unflatten(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) throw ValidationError(std::string("cube file: ") + what + " has the wrong length");
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = v[static_cast<std::size_t>(i * cols + j)];
  return M;
}

}  // namespace

nlohmann::json cube_to_json(const Cube& c) {
  nlohmann::json j;
  j["n"] = c.order();
  j["N"] = c.resolution();
  j["r"] = c.algebroid().rank();
  j["m"] = c.algebroid().dim();
  Eigen::VectorXd bp = c.basepoint();
  j["basepoint"] = std::vector<double>(bp.data(), bp.data() + bp.size());
  j["gamma"] = flatten(c.gamma());
  nlohmann::json a = nlohmann::json::array();
  for (const auto& comp : c.components()) a.push_back(flatten(comp));
  j["a"] = a;
  return j;
}

Cube cube_from_json(const Algebroid& A, const nlohmann::json& j) {
  try {
    int n = j.at("n").get<int>(), N = j.at("N").get<int>();
    if (j.at("r").get<int>() != A.rank() || j.at("m").get<int>() != A.dim())
      throw ValidationError("cube file: rank or dimension does not match the algebroid");
    Grid g(n, N);
    auto rows = static_cast<Eigen::Index>(g.size());
    Eigen::MatrixXd gamma = unflatten(j.at("gamma").get<std::vector<double>>(), rows, A.dim(), "gamma");
    std::vector<Eigen::MatrixXd> comps;
    const auto& a = j.at("a");
    if (!a.is_array() || static_cast<int>(a.size()) != n) throw ValidationError("cube file: need one component array per axis");
    for (const auto& block : a) comps.push_back(unflatten(block.get<std::vector<double>>(), rows, A.rank(), "component"));
    if (j.contains("basepoint")) {
      auto bp = j.at("basepoint").get<std::vector<double>>();
      for (int k = 0; k < A.dim(); ++k)
        if (static_cast<int>(bp.size()) != A.dim() || bp[static_cast<std::size_t>(k)] != gamma(0, k))
          throw ValidationError("cube file: basepoint differs from gamma at the origin");
    }
    return Cube(A, n, N, std::move(gamma), std::move(comps));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("cube file: ") + e.what());
  }
}

void save_cube(const Cube& c, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << cube_to_json(c).dump() << '\n';
}

Cube load_cube(const Algebroid& A, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read cube file " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("cube file " + path + ": " + e.what());
  }
  return cube_from_json(A, j);
}

}  // namespace lalg
