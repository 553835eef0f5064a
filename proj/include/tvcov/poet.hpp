#pragma once

#include <Eigen/Dense>
#include <vector>

namespace tvcov {

enum class Rate { delta, omega };

//! Multipliers tried, in order, when PD repair needs a larger threshold.
const std::vector<double>& default_escalation_ladder();

struct ThresholdConfig {
  double C = 0.5;
  Rate rate = Rate::delta;
  double eta = 2.0;
  //! Increasing, starting at C.
  std::vector<double> escalation_grid;

  //! escalation_grid = {C} followed by every ladder value above C.
  static ThresholdConfig with_default_grid(double C, Rate rate = Rate::delta, double eta = 2.0);
  void validate() const;
};

struct ResidualMoments {
  Eigen::MatrixXd sigma_hat;
  Eigen::MatrixXd theta_hat;
};

struct ResidualCovariance {
  Eigen::MatrixXd sigma_hat;
  Eigen::MatrixXd theta_hat;
  Eigen::MatrixXd thresholded;
  //! Multiplier actually used after escalation.
  double applied_C = 0.0;
  //! Fraction of off-diagonal entries set to zero.
  double zero_fraction = 0.0;
  //! Diagonal shift added when the escalation grid was exhausted (0 otherwise).
  double jitter = 0.0;
};

/// sigma_ij = (1/T) sum_t u_it u_jt and
/// theta_ij = (1/T) sum_t (u_it u_jt - sigma_ij)^2 over all T columns.
ResidualMoments residual_moments(const Eigen::MatrixXd& residuals);

//! 1/sqrt(N) + sqrt(ln(N T) / (T h)) + h^2 ln T.
double rate_delta(int N, int T, double h);
//! rate_delta + J^-eta.
double rate_omega(int N, int T, double h, int J, double eta = 2.0);
//! Time-invariant analogue 1/sqrt(N) + sqrt(ln(N T) / T), used with uniform weights.
double rate_static(int N, int T);

/// Entry-adaptive soft thresholding of the off-diagonal of sigma_hat with
/// tau_ij = C * rate_value * sqrt(theta_ij); the diagonal is kept. If the result
/// fails Cholesky, C advances along the escalation grid; past its end the last
/// matrix is shifted by (|lambda_min| + 1e-8) I.
ResidualCovariance apply_threshold(const ResidualMoments& moments, const ThresholdConfig& cfg, double rate_value);

//! max_i sum_j |s_ij|^q, or the maximal count of nonzeros per row when q = 0.
double sparsity_measure(const Eigen::MatrixXd& Sigma_u, double q = 0.0);

}  // namespace tvcov
