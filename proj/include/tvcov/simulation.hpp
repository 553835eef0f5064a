#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tvcov/engine.hpp"
#include "tvcov/panel_io.hpp"
#include "tvcov/random.hpp"

namespace tvcov {

//! Number of pre-interpolation periods in the data-generating design.
inline constexpr int kKnotPeriods = 51;

enum class Regime { smooth, structural_break };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

struct SimulationConfig {
  int N = 100;
  int T = 151;
  int R = 2;
  int replications = 100;
  Regime regime = Regime::smooth;
  std::uint64_t seed = 1;

  //! Cross-sectional means of size and momentum.
  Eigen::Vector2d char_mean = Eigen::Vector2d::Zero();
  //! N x N covariances of size and momentum; empty means unit variances, correlation char_corr.
  std::array<Eigen::MatrixXd, 2> char_cov;
  double char_corr = 0.2;

  std::vector<double> h_grid{0.05, 0.1, 0.2, 0.3};
  std::vector<double> C_grid{0.1, 0.4, 0.8, 1.2};
  int J = 4;
  double eta = 2.0;
  bool intercept = true;
  std::optional<double> ridge;

  //! Evaluation anchors; empty means interior_region(T, anchor_h).
  std::vector<int> anchors;
  double anchor_h = 0.1;
  //! Horizon in the break regime's 2 cos(4 pi t / horizon + i) loading.
  double break_cos_horizon = kKnotPeriods;

  void validate() const;
  std::vector<int> evaluation_anchors() const;
  //! Char covariance l (0 = size, 1 = momentum), resolved to an N x N matrix.
  Eigen::MatrixXd resolved_char_cov(int l) const;
};

struct LoadingCurves {
  Eigen::MatrixXd g1;  // N x periods
  Eigen::MatrixXd g2;
};

/// Raw loading curves on the knot grid t = 1..periods, entity i = 1..N.
LoadingCurves gen_loading_curves(int N, Regime regime, int periods = kKnotPeriods,
                                 double break_cos_horizon = kKnotPeriods);

/// Sample covariances of 30-draw AR(1) paths (coefficients 0.6 and 0.3,
/// innovation variances 0.64 and 0.91), one per knot period. Each path starts
/// from its stationary law and discards 100 burn-in draws.
std::vector<Eigen::MatrixXd> gen_factor_covs(Rng& rng, int periods = kKnotPeriods);

/// Unrepaired error covariance: U(0.9, 1.2) diagonal and N distinct off-diagonal
/// pairs set to U(0.1, 0.3), mirrored.
Eigen::MatrixXd draw_sparse_error_cov(int N, Rng& rng);

//! draw_sparse_error_cov per knot period, each passed through nearest_spd.
std::vector<Eigen::MatrixXd> gen_error_covs(int N, Rng& rng, int periods = kKnotPeriods);

/// Independent N(mean_l 1, cov_l) draws per knot period; element l is N x periods.
std::array<Eigen::MatrixXd, 2> gen_characteristics(int N, Rng& rng, const Eigen::Vector2d& mean,
                                                   const std::array<Eigen::MatrixXd, 2>& cov,
                                                   int periods = kKnotPeriods);

struct KnotData {
  LoadingCurves curves;
  std::vector<Eigen::MatrixXd> factor_cov;
  std::vector<Eigen::MatrixXd> error_cov;
  std::array<Eigen::MatrixXd, 2> chars;
};

struct PeriodData {
  LoadingCurves curves;  // N x T
  std::vector<Eigen::MatrixXd> factor_cov;
  std::vector<Eigen::MatrixXd> error_cov;
  std::array<Eigen::MatrixXd, 2> chars;  // N x T
};

//! Knot abscissae 1..periods mapped onto a uniform grid of T query points.
std::vector<double> interpolation_grid(int periods, int T);

/// Natural cubic spline of every scalar series onto T periods; covariance
/// matrices are repaired by nearest_spd afterwards.
PeriodData interpolate_all(const KnotData& knots, int T);

struct LoadingSurface {
  Eigen::MatrixXd alpha;  // 5 x T: 1, xs, xs^2, xm, xm^2
  Eigen::MatrixXd beta;   // 7 x T: 1, xs, xs^2, xs^3, xm, xm^2, xm^3
  std::vector<Eigen::MatrixXd> loadings;  // per period, N x 2
};

//! Design matrices of the two loading functions at one cross-section.
Eigen::MatrixXd loading_design_g1(const Eigen::VectorXd& xs, const Eigen::VectorXd& xm);
Eigen::MatrixXd loading_design_g2(const Eigen::VectorXd& xs, const Eigen::VectorXd& xm);

/// Cross-sectional OLS per period of g1 and g2 on their polynomial designs; the
/// fitted values are the true loadings.
LoadingSurface fit_loading_surface(const LoadingCurves& curves, const Eigen::MatrixXd& xs, const Eigen::MatrixXd& xm);

struct GroundTruth {
  std::vector<Eigen::MatrixXd> loadings;    // Lambda_t, t = 1..T
  std::vector<Eigen::MatrixXd> factor_cov;  // Sigma_f_t
  std::vector<Eigen::MatrixXd> error_cov;   // Sigma_u_t

  int T() const { return static_cast<int>(loadings.size()); }
  //! Lambda_{t-1}, with Lambda_0 taken as Lambda_1.
  const Eigen::MatrixXd& lagged_loadings(int t) const;
  //! Lambda_{t-1} Sigma_f_t Lambda_{t-1}' + Sigma_u_t.
  Eigen::MatrixXd sigma_y(int t) const;
  Eigen::MatrixXd sigma_y_inv(int t) const;
};

struct SimulatedDataset {
  PanelData panel;
  CharacteristicsPanel chars;
  GroundTruth truth;
  Eigen::MatrixXd factors;  // 2 x T
  LoadingSurface surface;
};

std::vector<std::string> numbered_labels(const std::string& prefix, int n);

/// y_t = Lambda_{t-1} f_t + u_t with f_t ~ N(0, Sigma_f_t), u_t ~ N(0, Sigma_u_t).
SimulatedDataset draw_panel(const GroundTruth& truth, const CharacteristicsPanel& chars, Rng& rng);

//! Full pipeline for one replication; streams derive from (cfg.seed, replication).
SimulatedDataset simulate_dataset(const SimulationConfig& cfg, int replication);

struct MonteCarloRow {
  int replication = 0;
  int anchor = 0;
  Method method = Method::local_pca;
  double loading_error_aligned = 0.0;
  double loading_error_raw = 0.0;
  double inv_cov_error = 0.0;
  double h_star = 0.0;
  double C_star = 0.0;
};

struct MonteCarloSummaryRow {
  int anchor = 0;
  double pca_inv_error = 0.0;
  double ppca_inv_error = 0.0;
  double pca_loading_error_aligned = 0.0;
  double ppca_loading_error_aligned = 0.0;
  double pca_loading_error_raw = 0.0;
  double ppca_loading_error_raw = 0.0;
  //! ppca_inv_error / pca_inv_error.
  double ratio = 0.0;
};

struct MonteCarloResult {
  std::vector<MonteCarloRow> rows;
  std::vector<MonteCarloSummaryRow> summary;
  int completed = 0;
  int failed = 0;
  std::vector<std::string> failure_messages;
};

MonteCarloResult run_monte_carlo(const SimulationConfig& cfg, unsigned threads = 1);

void write_monte_carlo_csv(const std::string& path, const MonteCarloResult& result);
void write_monte_carlo_summary_csv(const std::string& path, const MonteCarloResult& result);

}  // namespace tvcov
