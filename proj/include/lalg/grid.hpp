#ifndef LALG_GRID_HPP
#define LALG_GRID_HPP

// Uniform tensor grids on [0,1]^n, the cutoff reparametrization, and the
// small numerical kernels (interpolation, RK4, stencils) shared by cubes,
// lifts and transport.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace lalg {

/// Node layout of an n-cube sampled at t = k/N on every axis, row-major with
/// the last axis fastest.
class Grid {
 public:
  Grid() = default;
  Grid(int n, int N) : n_(n), N_(N) {
    if (n < 0 || N < 1) throw std::invalid_argument("grid needs n >= 0 and N >= 1");
    strides_.assign(static_cast<std::size_t>(n), 1);
    for (int k = n - 2; k >= 0; --k) strides_[k] = strides_[k + 1] * static_cast<std::size_t>(N + 1);
    size_ = n == 0 ? 1 : strides_[0] * static_cast<std::size_t>(N + 1);
  }

  int order() const { return n_; }
  int resolution() const { return N_; }
  std::size_t size() const { return size_; }
  std::size_t stride(int axis) const { return strides_[static_cast<std::size_t>(axis)]; }
  double h() const { return 1.0 / N_; }

  std::size_t index(const std::vector<int>& k) const {
    std::size_t idx = 0;
    for (int a = 0; a < n_; ++a) idx += strides_[a] * static_cast<std::size_t>(k[a]);
    return idx;
  }
  std::vector<int> multi(std::size_t idx) const {
    std::vector<int> k(static_cast<std::size_t>(n_));
    for (int a = 0; a < n_; ++a) {
      k[a] = static_cast<int>(idx / strides_[a]);
      idx %= strides_[a];
    }
    return k;
  }
  int coord(std::size_t idx, int axis) const {
    return static_cast<int>((idx / strides_[axis]) % static_cast<std::size_t>(N_ + 1));
  }
  Eigen::VectorXd point(std::size_t idx) const {
    Eigen::VectorXd t(n_);
    for (int a = 0; a < n_; ++a) t[a] = coord(idx, a) * h();
    return t;
  }
  bool interior(std::size_t idx) const {
    for (int a = 0; a < n_; ++a) {
      int c = coord(idx, a);
      if (c == 0 || c == N_) return false;
    }
    return true;
  }

 private:
  int n_ = 0;
  int N_ = 1;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 1;
};

/// Grid-axis derivative of row data (one row per node) at one node: central in
/// the interior, one-sided second order at the ends.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> axis_derivative(const Eigen::MatrixBase<Derived>& data,
                                                                            const Grid& g, std::size_t idx, int axis) {
  const int k = g.coord(idx, axis);
  const auto s = static_cast<Eigen::Index>(g.stride(axis));
  const auto i = static_cast<Eigen::Index>(idx);
  const typename Derived::Scalar inv = typename Derived::Scalar(g.resolution());
  if (k == 0) return (-3.0 * data.row(i) + 4.0 * data.row(i + s) - data.row(i + 2 * s)) * (inv / 2);
  if (k == g.resolution()) return (3.0 * data.row(i) - 4.0 * data.row(i - s) + data.row(i - 2 * s)) * (inv / 2);
  return (data.row(i + s) - data.row(i - s)) * (inv / 2);
}

/// Five-point version of axis_derivative (fourth order); falls back to it for N < 4.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> axis_derivative4(const Eigen::MatrixBase<Derived>& data,
                                                                             const Grid& g, std::size_t idx, int axis) {
  const int N = g.resolution();
  if (N < 4) return axis_derivative(data, g, idx, axis);
  const int k = g.coord(idx, axis);
  const auto s = static_cast<Eigen::Index>(g.stride(axis));
  const auto i = static_cast<Eigen::Index>(idx);
  const typename Derived::Scalar c = typename Derived::Scalar(N) / 12;
  auto f = [&](int off) { return data.row(i + off * s); };
  if (k == 0) return (-25.0 * f(0) + 48.0 * f(1) - 36.0 * f(2) + 16.0 * f(3) - 3.0 * f(4)) * c;
  if (k == 1) return (-3.0 * f(-1) - 10.0 * f(0) + 18.0 * f(1) - 6.0 * f(2) + f(3)) * c;
  if (k == N) return (25.0 * f(0) - 48.0 * f(-1) + 36.0 * f(-2) - 16.0 * f(-3) + 3.0 * f(-4)) * c;
  if (k == N - 1) return (3.0 * f(1) + 10.0 * f(0) - 18.0 * f(-1) + 6.0 * f(-2) - f(-3)) * c;
  return (f(-2) - 8.0 * f(-1) + 8.0 * f(1) - f(2)) * c;
}

/// Smooth monotone step, 0 for t <= 0 and 1 for t >= 1, with every derivative
/// zero at both ends: the normalized integral of exp(-1/(s(1-s))).
double cutoff(double t);
double cutoff_derivative(double t);

/// Cubic Lagrange weights for evaluating uniformly sampled data (N+1 samples on
/// [0,1]) at s. Returns the first stencil index; the four weights go to w.
template <class Scalar>
int lagrange_stencil(Scalar s, int N, std::array<Scalar, 4>& w) {
  if (N < 3) throw std::invalid_argument("cubic interpolation needs N >= 3");
  Scalar x = s * Scalar(N);
  int i0 = static_cast<int>(std::floor(static_cast<double>(x))) - 1;
  if (i0 < 0) i0 = 0;
  if (i0 > N - 3) i0 = N - 3;
  for (int a = 0; a < 4; ++a) {
    Scalar num(1);
    Scalar den(1);
    for (int b = 0; b < 4; ++b) {
      if (b == a) continue;
      num *= x - Scalar(i0 + b);
      den *= Scalar(a - b);
    }
    w[static_cast<std::size_t>(a)] = num / den;
  }
  return i0;
}

/// Interpolate along one grid line: rows base + k*stride, k = 0..N, at parameter s.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> line_interpolate(const Eigen::MatrixBase<Derived>& data,
                                                                             std::size_t base, std::size_t stride, int N,
                                                                             typename Derived::Scalar s) {
  std::array<typename Derived::Scalar, 4> w;
  int i0 = lagrange_stencil(s, N, w);
  Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> out =
      Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic>::Zero(data.cols());
  for (int a = 0; a < 4; ++a)
    out += w[static_cast<std::size_t>(a)] *
           data.row(static_cast<Eigen::Index>(base + static_cast<std::size_t>(i0 + a) * stride));
  return out;
}

/// Tensor-product cubic interpolation of node data on a 2-grid at (s1, s2).
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> bicubic(const Eigen::MatrixBase<Derived>& data,
                                                                    const Grid& g, typename Derived::Scalar s1,
                                                                    typename Derived::Scalar s2) {
  std::array<typename Derived::Scalar, 4> w1, w2;
  const int N = g.resolution();
  const auto i0 = static_cast<std::size_t>(lagrange_stencil(s1, N, w1));
  const auto j0 = static_cast<std::size_t>(lagrange_stencil(s2, N, w2));
  const std::size_t si = g.stride(0);
  Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> out =
      Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic>::Zero(data.cols());
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      out += (w1[static_cast<std::size_t>(a)] * w2[static_cast<std::size_t>(b)]) *
             data.row(static_cast<Eigen::Index>((i0 + static_cast<std::size_t>(a)) * si + j0 + static_cast<std::size_t>(b)));
  return out;
}

/// One classical fourth-order Runge-Kutta step of y' = f(t, y).
template <class State, class F>
State rk4_step(F&& f, double t, const State& y, double h) {
  State k1 = f(t, y);
  State k2 = f(t + h / 2, State(y + (h / 2) * k1));
  State k3 = f(t + h / 2, State(y + (h / 2) * k2));
  State k4 = f(t + h, State(y + h * k3));
  return State(y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4));
}

/// Composite trapezoid weight of node idx on the grid (product of 1D weights).
inline double trapezoid_weight(const Grid& g, std::size_t idx) {
  double w = 1.0;
  for (int a = 0; a < g.order(); ++a) {
    int c = g.coord(idx, a);
    w *= (c == 0 || c == g.resolution()) ? g.h() / 2 : g.h();
  }
  return w;
}

}  // namespace lalg

#endif  // LALG_GRID_HPP
