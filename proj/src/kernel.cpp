#include "tvcov/kernel.hpp"

#include <cmath>
#include <limits>

#include "tvcov/errors.hpp"

namespace tvcov {

namespace {

// Guards floor/ceil of T*h against representation error, e.g. 100 * 0.57.
constexpr double kProductSlack = 1e-9;

double simpson(double fa, double fm, double fb, double a, double b) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double simpson_recurse(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                       double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(fa, flm, fm, a, m);
  const double right = simpson(fm, frm, fb, m, b);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

std::string to_string(BoundaryFlag flag) {
  switch (flag) {
    case BoundaryFlag::left_boundary: return "left-boundary";
    case BoundaryFlag::interior: return "interior";
    case BoundaryFlag::right_boundary: return "right-boundary";
  }
  return "unknown";
}

double epanechnikov(double u) { return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0; }

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol) {
  if (a == b) return 0.0;
  if (a > b) return -adaptive_simpson(f, b, a, tol);
  const double fa = f(a);
  const double fb = f(b);
  const double m = 0.5 * (a + b);
  const double fm = f(m);
  return simpson_recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 50);
}

KernelWeights boundary_weights(int T, int r, double h, const KernelFunction& kernel) {
  if (!(h > 0.0 && h < 1.0)) throw ParameterError("bandwidth h must lie in (0, 1), got " + std::to_string(h));
  const double Th = static_cast<double>(T) * h;
  if (Th + kProductSlack < 2.0) throw ParameterError("bandwidth too small: T*h = " + std::to_string(Th) + " < 2");
  if (r < 1 || r > T) throw ParameterError("anchor r=" + std::to_string(r) + " outside 1.." + std::to_string(T));

  KernelWeights w;
  w.anchor = r;
  w.bandwidth = h;
  w.weights.resize(T);

  const int reach = static_cast<int>(std::ceil(Th - kProductSlack));
  const bool left = r < reach;
  const bool right = (T + 1 - r) < reach;
  double normalizer = 1.0;
  if (left || right) {
    const double lo = std::max(-1.0, (0.5 - r) / Th);
    const double hi = std::min(1.0, (T + 0.5 - r) / Th);
    normalizer = adaptive_simpson(kernel, lo, hi, 1e-12);
    w.boundary_flag = (r - 1) <= (T - r) ? BoundaryFlag::left_boundary : BoundaryFlag::right_boundary;
  }
  for (int t = 1; t <= T; ++t) {
    const double d = static_cast<double>(t - r);
    w.weights(t - 1) = std::abs(d) > Th ? 0.0 : kernel(d / Th) / (h * normalizer);
  }
  return w;
}

KernelWeights uniform_weights(int T, int anchor) {
  if (T < 1) throw ParameterError("uniform weights need T >= 1");
  KernelWeights w;
  w.weights = Eigen::VectorXd::Ones(T);
  w.anchor = anchor;
  w.bandwidth = std::numeric_limits<double>::infinity();
  w.boundary_flag = BoundaryFlag::interior;
  return w;
}

std::pair<int, int> interior_region(int T, double h) {
  const int lo = static_cast<int>(std::floor(static_cast<double>(T) * h + kProductSlack));
  return {lo, T - lo};
}

}  // namespace tvcov
