#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>

namespace tvcov {

using KernelFunction = std::function<double(double)>;

enum class BoundaryFlag { left_boundary, interior, right_boundary };

std::string to_string(BoundaryFlag flag);

//! 0.75 (1 - u^2) on [-1, 1], zero elsewhere.
double epanechnikov(double u);

//! Adaptive Simpson quadrature of f on [a, b] to absolute tolerance tol.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol = 1e-10);

/// Boundary-corrected kernel weights k_{h,tr}, t = 1..T, around anchor r.
///
/// Interior anchors use h^-1 K((t - r)/(T h)). Anchors within ceil(T h) periods of
/// either end divide by the integral of K over the part of [-1, 1] covered by the
/// sample, where period t occupies the cell [t - 1/2, t + 1/2]. With this the
/// average (1/T) sum_t k_{h,tr} stays within 0.1/(T h) of one at every anchor.
struct KernelWeights {
  Eigen::VectorXd weights;
  int anchor = 0;
  double bandwidth = 0.0;
  BoundaryFlag boundary_flag = BoundaryFlag::interior;

  int T() const { return static_cast<int>(weights.size()); }
  double mean() const { return weights.sum() / static_cast<double>(weights.size()); }
};

KernelWeights boundary_weights(int T, int r, double h, const KernelFunction& kernel = epanechnikov);

//! All-ones weights: the time-invariant limit h -> infinity used by static estimators.
KernelWeights uniform_weights(int T, int anchor);

//! (floor(T h), T - floor(T h)): anchors where the full smoothing-bias rate holds.
std::pair<int, int> interior_region(int T, double h);

}  // namespace tvcov
