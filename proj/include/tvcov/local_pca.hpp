#pragma once

#include <Eigen/Dense>
#include <string>

#include "tvcov/kernel.hpp"
#include "tvcov/panel_io.hpp"

namespace tvcov {

enum class Method { local_pca, local_ppca };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

/// Factor-model fit at one anchor r.
///
/// `factors` is the T x R matrix of kernel-weighted factors with F'F/T = I,
/// `loadings` the N x R loadings for period r - 1 and `residuals` the weighted
/// residuals Y^(r) - loadings * factors' (zero in periods with zero weight).
struct LocalFactorEstimate {
  int anchor = 0;
  Eigen::MatrixXd factors;
  Eigen::MatrixXd loadings;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd factor_cov;
  Eigen::MatrixXd residuals;
  Method method = Method::local_pca;
  double bandwidth = 0.0;
  BoundaryFlag boundary_flag = BoundaryFlag::interior;
};

//! Column t scaled by sqrt(w[t]).
Eigen::MatrixXd weight_panel(const Eigen::MatrixXd& Y, const KernelWeights& w);

/// Local PCA at anchor r with Epanechnikov boundary weights of bandwidth h.
/// Requires 1 <= R <= min(N, floor(T h)).
LocalFactorEstimate estimate_local_pca(const PanelData& panel, int r, double h, int R);

//! Same estimator for a precomputed weight vector (uniform weights give global PCA).
LocalFactorEstimate estimate_local_pca(const Eigen::MatrixXd& Y, const KernelWeights& w, int R);

//! (1/T) sum_t f_t f_t'.
Eigen::MatrixXd factor_covariance(const LocalFactorEstimate& est);

namespace detail {

//! Indices with positive weight.
std::vector<Eigen::Index> support_of(const KernelWeights& w);

/// Top-R eigenvectors of the T x T matrix Y1' Y2 (Y1 = Y2 for PCA, Y1 = P Y2 for
/// projected PCA). Periods outside `support` have zero columns, so the
/// eigenproblem is solved on the support and the eigenvectors embedded back
/// with zeros; the result is the eigenbasis of the full T x T matrix.
/// Returns sqrt(T) * eigenvectors in `factors` and eigenvalues / (N T).
void top_factors(const Eigen::MatrixXd& Y1, const Eigen::MatrixXd& Y2, const std::vector<Eigen::Index>& support,
                 int R, Eigen::MatrixXd& factors, Eigen::VectorXd& eigenvalues);

}  // namespace detail

}  // namespace tvcov
