#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "tvcov/panel_io.hpp"

namespace tvcov {

enum class EstimatorKind { sample, observed_factor, static_pca, static_ppca, local_pca, local_ppca };

std::string to_string(EstimatorKind k);
EstimatorKind estimator_from_string(const std::string& s);

struct BacktestConfig {
  int initial_training = 102;
  int holding_length = 26;
  EstimatorKind estimator = EstimatorKind::sample;
  int R = 2;
  double h = 0.1;
  double C = 0.5;
  int J = 4;
  double eta = 2.0;
  bool intercept = true;
  std::optional<double> ridge;
  int annualization = 52;
  //! Let weights drift with realised returns inside a holding window.
  bool drift = false;

  void validate() const;
};

//! Periods are 1-based and inclusive.
struct RebalanceWindow {
  int train_end = 0;
  int hold_start = 0;
  int hold_end = 0;
};

struct Schedule {
  std::vector<RebalanceWindow> windows;
  std::vector<std::string> warnings;
};

/// Recursive schedule: every estimation uses periods 1..train_end, with a
/// rebalance every holding_length periods; the last window may be partial.
Schedule build_schedule(int T, const BacktestConfig& cfg);

//! sigma_inv 1 / (1' sigma_inv 1).
Eigen::VectorXd gmv_weights(const Eigen::MatrixXd& sigma_inv);

//! Unbiased sample covariance of the columns of an N x T matrix (rows are variables).
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& Y);

/// Time-series OLS of every asset on an intercept and K factors:
/// B cov(f) B' + diag(residual variances), residual variances over T - K - 1.
Eigen::MatrixXd observed_factor_covariance(const Eigen::MatrixXd& returns, const Eigen::MatrixXd& factors);

//! Loadings B (N x K) from the same regression.
Eigen::MatrixXd observed_factor_loadings(const Eigen::MatrixXd& returns, const Eigen::MatrixXd& factors);

/// Sigma_y^-1 from the training slice (all periods of the inputs) under cfg.
/// Time-varying estimators anchor at the last training period.
Eigen::MatrixXd estimate_precision(const PanelData& train, const CharacteristicsPanel* chars,
                                   const Eigen::MatrixXd* factors, const BacktestConfig& cfg);

struct BacktestResult {
  EstimatorKind estimator = EstimatorKind::sample;
  Schedule schedule;
  std::vector<Eigen::VectorXd> weights;
  Eigen::VectorXd portfolio_returns;
  //! Period index (1-based) of every entry of portfolio_returns.
  std::vector<int> periods;
  double ex_post_std_annualized_pct = 0.0;
};

//! Sample sd * sqrt(annualization) * 100; zero for fewer than two returns.
double annualized_std_pct(const Eigen::VectorXd& returns, int annualization);

BacktestResult run_backtest(const PanelData& panel, const CharacteristicsPanel* chars, const FactorSeries* factors,
                            const BacktestConfig& cfg);

//! Independent configurations evaluated in parallel; results in input order.
std::vector<BacktestResult> run_backtests(const PanelData& panel, const CharacteristicsPanel* chars,
                                          const FactorSeries* factors, const std::vector<BacktestConfig>& cfgs,
                                          unsigned threads = 1);

struct BacktestTuning {
  BacktestConfig best;
  BacktestResult result;
  //! h-major table of ex-post std over the grid; NaN where a configuration failed.
  Eigen::MatrixXd grid_std;
};

/// Fixed (h, C_NT) minimising the ex-post standard deviation of a time-varying
/// estimator. Ties go to the smaller h, then the smaller C_NT.
BacktestTuning tune_backtest(const PanelData& panel, const CharacteristicsPanel* chars, const FactorSeries* factors,
                             const BacktestConfig& base, const std::vector<double>& h_grid,
                             const std::vector<double>& C_grid, unsigned threads = 1);

void write_backtest_summary_csv(const std::string& path, const std::vector<BacktestResult>& results,
                                const std::vector<std::string>& labels, const std::string& period_label);
void write_backtest_returns_csv(const std::string& path, const std::vector<BacktestResult>& results,
                                const std::vector<std::string>& labels, const PanelData& panel);
void write_backtest_weights_csv(const std::string& path, const BacktestResult& result, const PanelData& panel);

}  // namespace tvcov
