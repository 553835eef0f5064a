#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace tvcov {

//! Top-k eigenpairs, values descending, each column's largest-magnitude entry nonnegative.
struct EigenPairs {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

EigenPairs sym_eigen_topk(const Eigen::MatrixXd& M, int k);

//! Flip column signs so the first entry of largest magnitude is nonnegative.
void fix_column_signs(Eigen::MatrixXd& vectors);

//! Default eigenvalue floor for nearest_spd: 1e-8 * max(1, lambda_max).
double default_spd_floor(double lambda_max);

/// Nearest symmetric positive-definite matrix by eigenvalue clipping.
///
/// Symmetrises M, and if any eigenvalue is below `floor` (default
/// default_spd_floor) clips it and reassembles. Inputs already above the floor are
/// returned symmetrised without an eigendecomposition.
Eigen::MatrixXd nearest_spd(const Eigen::MatrixXd& M, std::optional<double> floor = std::nullopt);

//! Inverse of an SPD matrix through its Cholesky factor; NumericError carrying lambda_min otherwise.
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& M);

//! Smallest eigenvalue of the symmetric part of M.
double min_eigenvalue(const Eigen::MatrixXd& M);

/// Inverse of L Sf L' + Su given Su^-1:
///   Su^-1 - Su^-1 L (Sf^-1 + L' Su^-1 L)^-1 L' Su^-1.
/// Only R x R systems are factorised.
Eigen::MatrixXd woodbury_inverse(const Eigen::MatrixXd& L, const Eigen::MatrixXd& Sf,
                                 const Eigen::MatrixXd& Su_inv);

double soft_threshold(double z, double tau);

//! Natural cubic spline through (x_k, y_k).
class NaturalCubicSpline {
public:
  NaturalCubicSpline(std::vector<double> x, std::vector<double> y);

  //! Throws ParameterError for queries outside [x_front, x_back].
  double operator()(double q) const;

  const std::vector<double>& knots() const { return x_; }

private:
  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> m_;  // second derivatives at the knots
};

std::vector<double> cubic_spline_interpolate(const std::vector<double>& knots_x,
                                             const std::vector<double>& knots_y,
                                             const std::vector<double>& query_x);

/// Spline evaluation as a linear map: row q holds the weights that knot values
/// receive at query q. Natural splines are linear in the knot values, so
/// interpolating many series on one grid is a single product Y * W'.
Eigen::MatrixXd spline_weight_matrix(const std::vector<double>& knots_x, const std::vector<double>& query_x);

struct ProcrustesAlignment {
  Eigen::MatrixXd aligned;
  Eigen::MatrixXd rotation;
};

//! Orthogonal Q minimising ||A Q - B||_F (SVD of A'B); aligned = A Q.
ProcrustesAlignment procrustes_align(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

}  // namespace tvcov
