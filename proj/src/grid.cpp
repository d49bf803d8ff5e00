#include "lalg/grid.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <vector>

namespace lalg {

namespace {

double bump(double s) { return (s <= 0.0 || s >= 1.0) ? 0.0 : std::exp(-1.0 / (s * (1.0 - s))); }

using Rule = boost::math::quadrature::gauss_kronrod<double, 31>;
constexpr int kCells = 1024;  // on [0, 1/2]

// Cumulative integrals of the bump at the cell boundaries of [0, 1/2].
const std::vector<double>& bump_table() {
  static const std::vector<double> table = [] {
    std::vector<double> t(kCells + 1, 0.0);
    const double h = 0.5 / kCells;
    for (int k = 0; k < kCells; ++k) t[k + 1] = t[k] + Rule::integrate(bump, k * h, (k + 1) * h, 0);
    return t;
  }();
  return table;
}

// integral of the bump over [0, t], t <= 1/2
double bump_integral(double t) {
  const auto& table = bump_table();
  const double h = 0.5 / kCells;
  int k = std::min(static_cast<int>(t / h), kCells);
  double rest = t - k * h;
  return table[static_cast<std::size_t>(k)] + (rest > 0.0 ? Rule::integrate(bump, k * h, t, 0) : 0.0);
}

double normalizer() {
  static const double z = 2.0 * bump_table().back();
  return z;
}

}  // namespace

double cutoff(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  // integrate from the nearer end; the bump is symmetric about 1/2
  if (t > 0.5) return 1.0 - bump_integral(1.0 - t) / normalizer();
  return bump_integral(t) / normalizer();
}

double cutoff_derivative(double t) { return bump(t) / normalizer(); }

}  // namespace lalg
