#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "tvcov/local_pca.hpp"
#include "tvcov/poet.hpp"
#include "tvcov/sieve_ppca.hpp"

namespace tvcov {

struct EstimatorConfig {
  Method method = Method::local_pca;
  double h = 0.1;
  double C = 0.5;
  int R = 2;
  int J = 4;
  double eta = 2.0;
  bool intercept = true;
  std::optional<double> ridge;

  void validate() const;
};

nlohmann::json to_json(const EstimatorConfig& cfg);

struct CovarianceEstimate {
  int anchor = 0;
  Eigen::MatrixXd sigma_y;
  Eigen::MatrixXd sigma_y_inv;
  Eigen::MatrixXd loadings;
  Eigen::MatrixXd factor_cov;
  Eigen::MatrixXd sigma_u;
  EstimatorConfig config;
  //! interior iff the anchor lies in interior_region(T, h).
  BoundaryFlag boundary_flag = BoundaryFlag::interior;
  double applied_C = 0.0;
  double jitter = 0.0;
  double zero_fraction = 0.0;
};

/// sigma_y = L Sf L' + Su with the inverse by Woodbury from a Cholesky inverse of Su.
CovarianceEstimate assemble(const LocalFactorEstimate& est, const ResidualCovariance& rc);

//! Threshold rate for a method: delta_NT for local PCA, omega_NT for local PPCA.
double threshold_rate(Method method, int N, int T, double h, int J, double eta);

//! Flag for a path estimate: interior iff lo <= r <= hi of interior_region(T, h).
BoundaryFlag region_flag(int T, double h, int r);

/// Factors at one anchor under cfg. Local PPCA needs chars.
LocalFactorEstimate fit_factors(const PanelData& panel, const CharacteristicsPanel* chars, int r,
                                const EstimatorConfig& cfg);

//! Full estimate at one anchor.
CovarianceEstimate estimate_at(const PanelData& panel, const CharacteristicsPanel* chars, int r,
                               const EstimatorConfig& cfg);

struct AnchorFailure {
  int anchor = 0;
  std::string message;
};

struct PathResult {
  std::vector<CovarianceEstimate> estimates;
  std::vector<AnchorFailure> failures;
};

/// One estimate per anchor, in anchor order. The method is local PPCA when chars
/// is given and local PCA otherwise. Errors are collected per anchor.
PathResult estimate_path(const PanelData& panel, const CharacteristicsPanel* chars, const std::vector<int>& anchors,
                         const EstimatorConfig& cfg, unsigned threads = 1);

struct TuneResult {
  int anchor = 0;
  double h = 0.0;
  double C = 0.0;
  double error = 0.0;
  bool ok = false;
  std::string message;
  //! Loadings of the winning fit (N x R).
  Eigen::MatrixXd loadings;
};

/// Per-anchor grid argmin of ||hat Sigma_y^-1 - Sigma_y^-1||_F against known truth.
/// Ties go to the smaller h, then the smaller C. Method follows cfg.method.
std::vector<TuneResult> tune_oracle(const PanelData& panel, const CharacteristicsPanel* chars,
                                    const std::vector<int>& anchors, const std::vector<Eigen::MatrixXd>& truth_inv,
                                    const std::vector<double>& h_grid, const std::vector<double>& C_grid,
                                    const EstimatorConfig& base, unsigned threads = 1);

struct RateDiagnostics {
  double delta_NT = 0.0;
  double b_NT = 0.0;
  double a_NT = 0.0;
  std::optional<double> omega_NT;
  std::optional<double> J_term;
};

/// delta_NT, b_NT = 1/sqrt(T h) and
/// a_NT = max_i ||phi_i|| sqrt(J) (1/N + 1/(T h) + h (1/sqrt(N) + 1/sqrt(T h))),
/// with max ||phi_i|| = 1 when no basis norm is supplied.
RateDiagnostics rate_diagnostics(int N, int T, double h, std::optional<int> J = std::nullopt,
                                 std::optional<double> eta = std::nullopt,
                                 std::optional<double> max_basis_row_norm = std::nullopt);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& M);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CovarianceEstimate& est);
nlohmann::json to_json(const RateDiagnostics& d);

//! CSV with an index header row and index labels, values at 17 significant digits.
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& M,
                      const std::vector<std::string>& row_labels = {},
                      const std::vector<std::string>& col_labels = {});

}  // namespace tvcov
