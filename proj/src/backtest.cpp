#include "tvcov/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>

#include "tvcov/engine.hpp"
#include "tvcov/errors.hpp"
#include "tvcov/numerics.hpp"
#include "tvcov/parallel.hpp"
#include "tvcov/poet.hpp"
#include "tvcov/sieve_ppca.hpp"

namespace tvcov {

namespace {

struct KindName {
  EstimatorKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {EstimatorKind::sample, "sample"},         {EstimatorKind::observed_factor, "observed-factor"},
    {EstimatorKind::static_pca, "static-pca"}, {EstimatorKind::static_ppca, "static-ppca"},
    {EstimatorKind::local_pca, "local-pca"},   {EstimatorKind::local_ppca, "local-ppca"},
};

Eigen::MatrixXd factor_design(const Eigen::MatrixXd& factors) {
  Eigen::MatrixXd X(factors.cols(), factors.rows() + 1);
  X.col(0).setOnes();
  X.rightCols(factors.rows()) = factors.transpose();
  return X;
}

// Coefficients (K+1) x N of returns' on [1, f'].
Eigen::MatrixXd factor_regression(const Eigen::MatrixXd& returns, const Eigen::MatrixXd& factors) {
  if (returns.cols() != factors.cols()) {
    throw ParameterError("observed factors cover " + std::to_string(factors.cols()) + " periods, returns " +
                         std::to_string(returns.cols()));
  }
  const Eigen::Index K = factors.rows();
  if (returns.cols() <= K + 1) throw ParameterError("observed-factor regression needs more than K + 1 periods");
  const Eigen::MatrixXd X = factor_design(factors);
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols()) throw NumericError("observed-factor regression: factor Gram matrix is singular");
  return qr.solve(returns.transpose());
}

EstimatorConfig engine_config(const BacktestConfig& cfg, Method method) {
  EstimatorConfig e;
  e.method = method;
  e.h = cfg.h;
  e.C = cfg.C;
  e.R = cfg.R;
  e.J = cfg.J;
  e.eta = cfg.eta;
  e.intercept = cfg.intercept;
  e.ridge = cfg.ridge;
  return e;
}

Eigen::MatrixXd static_precision(const LocalFactorEstimate& est, const BacktestConfig& cfg, int N, int T) {
  const Rate rate = est.method == Method::local_ppca ? Rate::omega : Rate::delta;
  double rv = rate_static(N, T);
  if (est.method == Method::local_ppca) rv += std::pow(static_cast<double>(cfg.J), -cfg.eta);
  const auto rc = apply_threshold(residual_moments(est.residuals), ThresholdConfig::with_default_grid(cfg.C, rate, cfg.eta), rv);
  return assemble(est, rc).sigma_y_inv;
}

}  // namespace

std::string to_string(EstimatorKind k) {
  for (const auto& kn : kKindNames)
    if (kn.kind == k) return kn.name;
  return "unknown";
}

EstimatorKind estimator_from_string(const std::string& s) {
  for (const auto& kn : kKindNames)
    if (s == kn.name) return kn.kind;
  throw ParameterError("unknown estimator '" + s +
                       "' (expected sample, observed-factor, static-pca, static-ppca, local-pca or local-ppca)");
}

void BacktestConfig::validate() const {
  if (initial_training < 2) throw ParameterError("initial_training: must be >= 2");
  if (holding_length < 1) throw ParameterError("holding_length: must be >= 1");
  if (annualization < 1) throw ParameterError("annualization: must be >= 1");
  if (R < 1) throw ParameterError("R: must be >= 1");
  if (!(h > 0.0 && h < 1.0)) throw ParameterError("h: must lie in (0, 1)");
  if (!(C >= 0.0)) throw ParameterError("C_NT: must be nonnegative");
  if (J < 1) throw ParameterError("J: must be >= 1");
  if (eta < 2.0) throw ParameterError("eta: must be >= 2");
  if (ridge && *ridge < 0.0) throw ParameterError("ridge: must be nonnegative");
}

Schedule build_schedule(int T, const BacktestConfig& cfg) {
  cfg.validate();
  Schedule s;
  if (T < cfg.initial_training) {
    throw ParameterError("initial_training=" + std::to_string(cfg.initial_training) + " exceeds T=" + std::to_string(T));
  }
  if (T == cfg.initial_training) {
    s.warnings.push_back("no periods left to hold after the initial training window");
    return s;
  }
  for (int end = cfg.initial_training; end < T; end += cfg.holding_length) {
    s.windows.push_back({end, end + 1, std::min(end + cfg.holding_length, T)});
  }
  return s;
}

Eigen::VectorXd gmv_weights(const Eigen::MatrixXd& sigma_inv) {
  if (sigma_inv.rows() != sigma_inv.cols() || sigma_inv.rows() == 0) throw ParameterError("gmv_weights: need a square matrix");
  const Eigen::VectorXd v = sigma_inv * Eigen::VectorXd::Ones(sigma_inv.rows());
  const double denom = v.sum();
  if (!(denom > 0.0) || !std::isfinite(denom)) {
    throw NumericError("gmv_weights: 1' Sigma^-1 1 = " + format_double(denom) + " is not positive");
  }
  return v / denom;
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& Y) {
  if (Y.cols() < 2) throw ParameterError("sample_covariance: need at least two periods");
  const Eigen::MatrixXd centred = Y.colwise() - Y.rowwise().mean();
  return centred * centred.transpose() / static_cast<double>(Y.cols() - 1);
}

Eigen::MatrixXd observed_factor_loadings(const Eigen::MatrixXd& returns, const Eigen::MatrixXd& factors) {
  return factor_regression(returns, factors).bottomRows(factors.rows()).transpose();
}

Eigen::MatrixXd observed_factor_covariance(const Eigen::MatrixXd& returns, const Eigen::MatrixXd& factors) {
  const Eigen::MatrixXd coef = factor_regression(returns, factors);
  const Eigen::Index K = factors.rows();
  const Eigen::Index T = returns.cols();
  const Eigen::MatrixXd B = coef.bottomRows(K).transpose();
  const Eigen::MatrixXd resid = returns - (factor_design(factors) * coef).transpose();
  const Eigen::VectorXd resid_var = resid.rowwise().squaredNorm() / static_cast<double>(T - K - 1);
  Eigen::MatrixXd S = B * sample_covariance(factors) * B.transpose();
  S.diagonal() += resid_var;
  return 0.5 * (S + S.transpose());
}

Eigen::MatrixXd estimate_precision(const PanelData& train, const CharacteristicsPanel* chars,
                                   const Eigen::MatrixXd* factors, const BacktestConfig& cfg) {
  const int N = train.N();
  const int T = train.T();
  switch (cfg.estimator) {
    case EstimatorKind::sample:
      return spd_inverse(sample_covariance(train.values));
    case EstimatorKind::observed_factor:
      if (!factors) throw ParameterError("observed-factor estimator requires factor series");
      return spd_inverse(observed_factor_covariance(train.values, *factors));
    case EstimatorKind::static_pca: {
      const LocalFactorEstimate est = estimate_local_pca(train.values, uniform_weights(T, T), cfg.R);
      return static_precision(est, cfg, N, T);
    }
    case EstimatorKind::static_ppca: {
      if (!chars) throw ParameterError("static-ppca estimator requires characteristics");
      const SieveBasis basis = build_basis(chars->slice(T), cfg.J, cfg.intercept, chars->names);
      const SieveProjector projector(basis, cfg.ridge);
      const LocalFactorEstimate est = estimate_local_ppca(train.values, uniform_weights(T, T), projector, cfg.R);
      return static_precision(est, cfg, N, T);
    }
    case EstimatorKind::local_pca:
      return estimate_at(train, nullptr, T, engine_config(cfg, Method::local_pca)).sigma_y_inv;
    case EstimatorKind::local_ppca:
      if (!chars) throw ParameterError("local-ppca estimator requires characteristics");
      return estimate_at(train, chars, T, engine_config(cfg, Method::local_ppca)).sigma_y_inv;
  }
  throw ParameterError("unknown estimator");
}

double annualized_std_pct(const Eigen::VectorXd& returns, int annualization) {
  const Eigen::Index n = returns.size();
  if (n < 2) return 0.0;
  const double mean = returns.mean();
  const double var = (returns.array() - mean).square().sum() / static_cast<double>(n - 1);
  return std::sqrt(var) * std::sqrt(static_cast<double>(annualization)) * 100.0;
}

BacktestResult run_backtest(const PanelData& panel, const CharacteristicsPanel* chars, const FactorSeries* factors,
                            const BacktestConfig& cfg) {
  cfg.validate();
  panel.validate();
  if (chars) chars->validate_against(panel);
  if (factors && factors->values.cols() != panel.T()) throw DataError("factor series do not cover every panel period");

  BacktestResult out;
  out.estimator = cfg.estimator;
  out.schedule = build_schedule(panel.T(), cfg);
  std::vector<double> rets;

  for (std::size_t k = 0; k < out.schedule.windows.size(); ++k) {
    const RebalanceWindow& win = out.schedule.windows[k];
    const PanelData train = panel.periods(1, win.train_end);
    std::optional<CharacteristicsPanel> train_chars;
    if (chars) train_chars = chars->periods(1, win.train_end);
    std::optional<Eigen::MatrixXd> train_factors;
    if (factors) train_factors = factors->values.leftCols(win.train_end);

    Eigen::VectorXd w;
    try {
      const Eigen::MatrixXd prec = estimate_precision(train, train_chars ? &*train_chars : nullptr,
                                                      train_factors ? &*train_factors : nullptr, cfg);
      w = gmv_weights(prec);
    } catch (const ParameterError& e) {
      throw ParameterError("rebalance " + std::to_string(k + 1) + " (train_end=" + std::to_string(win.train_end) +
                           "): " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("rebalance " + std::to_string(k + 1) + " (train_end=" + std::to_string(win.train_end) +
                             "): " + e.what(),
                         e.lambda_min());
    }
    out.weights.push_back(w);

    Eigen::VectorXd held = w;
    for (int t = win.hold_start; t <= win.hold_end; ++t) {
      const Eigen::VectorXd r = panel.values.col(t - 1);
      const double pr = held.dot(r);
      rets.push_back(pr);
      out.periods.push_back(t);
      if (cfg.drift) {
        held = held.cwiseProduct((Eigen::VectorXd::Ones(r.size()) + r));
        const double s = held.sum();
        if (s != 0.0) held /= s;
      }
    }
  }
  out.portfolio_returns = Eigen::Map<const Eigen::VectorXd>(rets.data(), static_cast<Eigen::Index>(rets.size()));
  out.ex_post_std_annualized_pct = annualized_std_pct(out.portfolio_returns, cfg.annualization);
  return out;
}

std::vector<BacktestResult> run_backtests(const PanelData& panel, const CharacteristicsPanel* chars,
                                          const FactorSeries* factors, const std::vector<BacktestConfig>& cfgs,
                                          unsigned threads) {
  std::vector<BacktestResult> out(cfgs.size());
  parallel_for(cfgs.size(), threads, [&](std::size_t i) { out[i] = run_backtest(panel, chars, factors, cfgs[i]); });
  return out;
}

BacktestTuning tune_backtest(const PanelData& panel, const CharacteristicsPanel* chars, const FactorSeries* factors,
                             const BacktestConfig& base, const std::vector<double>& h_grid,
                             const std::vector<double>& C_grid, unsigned threads) {
  if (h_grid.empty() || C_grid.empty()) throw ParameterError("tune_backtest: empty tuning grid");
  std::vector<double> hs = h_grid;
  std::vector<double> cs = C_grid;
  std::sort(hs.begin(), hs.end());
  std::sort(cs.begin(), cs.end());
  std::vector<BacktestConfig> cfgs;
  for (double h : hs) {
    for (double c : cs) {
      BacktestConfig cfg = base;
      cfg.h = h;
      cfg.C = c;
      cfgs.push_back(cfg);
    }
  }
  std::vector<std::optional<BacktestResult>> results(cfgs.size());
  std::vector<std::string> errors(cfgs.size());
  parallel_for(cfgs.size(), threads, [&](std::size_t k) {
    try {
      results[k] = run_backtest(panel, chars, factors, cfgs[k]);
    } catch (const Error& e) {
      errors[k] = e.what();
    }
  });
  BacktestTuning out;
  out.grid_std = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(hs.size()), static_cast<Eigen::Index>(cs.size()),
                                           std::numeric_limits<double>::quiet_NaN());
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < cfgs.size(); ++k) {
    if (!results[k]) continue;
    const double s = results[k]->ex_post_std_annualized_pct;
    out.grid_std(static_cast<Eigen::Index>(k / cs.size()), static_cast<Eigen::Index>(k % cs.size())) = s;
    if (!best || s < results[*best]->ex_post_std_annualized_pct) best = k;
  }
  if (!best) throw NumericError("tune_backtest: every grid configuration failed; first error: " + errors.front());
  out.best = cfgs[*best];
  out.result = std::move(*results[*best]);
  return out;
}

void write_backtest_summary_csv(const std::string& path, const std::vector<BacktestResult>& results,
                                const std::vector<std::string>& labels, const std::string& period_label) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot write file");
  out << "estimator,period,ex_post_std_annualized_pct,rebalances,held_periods\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    out << labels[i] << ',' << period_label << ',' << format_double(results[i].ex_post_std_annualized_pct) << ','
        << results[i].schedule.windows.size() << ',' << results[i].portfolio_returns.size() << '\n';
  }
}

void write_backtest_returns_csv(const std::string& path, const std::vector<BacktestResult>& results,
                                const std::vector<std::string>& labels, const PanelData& panel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot write file");
  out << "period";
  for (const auto& l : labels) out << ',' << l;
  out << '\n';
  if (results.empty()) return;
  const auto& periods = results.front().periods;
  for (std::size_t k = 0; k < periods.size(); ++k) {
    out << panel.period_ids[static_cast<std::size_t>(periods[k] - 1)];
    for (const auto& r : results) out << ',' << format_double(r.portfolio_returns(static_cast<Eigen::Index>(k)));
    out << '\n';
  }
}

void write_backtest_weights_csv(const std::string& path, const BacktestResult& result, const PanelData& panel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot write file");
  out << "train_end";
  for (const auto& e : panel.entity_ids) out << ',' << e;
  out << '\n';
  for (std::size_t k = 0; k < result.weights.size(); ++k) {
    out << panel.period_ids[static_cast<std::size_t>(result.schedule.windows[k].train_end - 1)];
    for (Eigen::Index i = 0; i < result.weights[k].size(); ++i) out << ',' << format_double(result.weights[k](i));
    out << '\n';
  }
}

}  // namespace tvcov
