#include "tvcov/poet.hpp"

#include <cmath>
#include <string>

#include "tvcov/errors.hpp"
#include "tvcov/numerics.hpp"

namespace tvcov {

namespace {

void threshold_into(const ResidualMoments& m, double multiplier, Eigen::MatrixXd& out, Eigen::Index& zeros) {
  const Eigen::Index N = m.sigma_hat.rows();
  out.resize(N, N);
  zeros = 0;
  for (Eigen::Index j = 0; j < N; ++j) {
    out(j, j) = m.sigma_hat(j, j);
    for (Eigen::Index i = j + 1; i < N; ++i) {
      const double s = m.sigma_hat(i, j);
      const double tau = multiplier * std::sqrt(m.theta_hat(i, j));
      const double v = std::abs(s) < tau ? 0.0 : soft_threshold(s, tau);
      out(i, j) = v;
      out(j, i) = v;
      if (v == 0.0) zeros += 2;
    }
  }
}

}  // namespace

const std::vector<double>& default_escalation_ladder() {
  static const std::vector<double> ladder{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.2,
                                          1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 15.0, 20.0};
  return ladder;
}

ThresholdConfig ThresholdConfig::with_default_grid(double C, Rate rate, double eta) {
  ThresholdConfig cfg;
  cfg.C = C;
  cfg.rate = rate;
  cfg.eta = eta;
  cfg.escalation_grid.push_back(C);
  for (double g : default_escalation_ladder())
    if (g > C) cfg.escalation_grid.push_back(g);
  return cfg;
}

void ThresholdConfig::validate() const {
  if (!(C >= 0.0) || !std::isfinite(C)) throw ParameterError("C_NT must be a finite nonnegative number");
  if (escalation_grid.empty() || escalation_grid.front() != C) {
    throw ParameterError("escalation grid must be nonempty and start at C_NT");
  }
  for (std::size_t i = 1; i < escalation_grid.size(); ++i) {
    if (!(escalation_grid[i] > escalation_grid[i - 1])) throw ParameterError("escalation grid must be increasing");
  }
  if (rate == Rate::omega && eta < 2.0) throw ParameterError("eta must be >= 2");
}

ResidualMoments residual_moments(const Eigen::MatrixXd& residuals) {
  if (!residuals.allFinite()) throw NumericError("residual_moments: non-finite residuals");
  const Eigen::Index N = residuals.rows();
  const double T = static_cast<double>(residuals.cols());

  // Columns of zeros (zero kernel weight) contribute only through the
  // sigma^2 term of theta, so the products run over nonzero columns.
  std::vector<Eigen::Index> active;
  for (Eigen::Index t = 0; t < residuals.cols(); ++t)
    if (!residuals.col(t).isZero(0.0)) active.push_back(t);
  Eigen::MatrixXd U(N, static_cast<Eigen::Index>(active.size()));
  for (std::size_t s = 0; s < active.size(); ++s) U.col(static_cast<Eigen::Index>(s)) = residuals.col(active[s]);

  ResidualMoments m;
  m.sigma_hat = Eigen::MatrixXd::Zero(N, N);
  m.sigma_hat.selfadjointView<Eigen::Lower>().rankUpdate(U, 1.0 / T);
  m.sigma_hat = m.sigma_hat.selfadjointView<Eigen::Lower>();
  const Eigen::MatrixXd U2 = U.array().square().matrix();
  Eigen::MatrixXd fourth = Eigen::MatrixXd::Zero(N, N);
  fourth.selfadjointView<Eigen::Lower>().rankUpdate(U2, 1.0 / T);
  fourth = fourth.selfadjointView<Eigen::Lower>();
  m.theta_hat = fourth.array() - m.sigma_hat.array().square();
  m.theta_hat = m.theta_hat.cwiseMax(0.0);
  return m;
}

double rate_delta(int N, int T, double h) {
  if (N < 2 || T < 2) throw ParameterError("rate_delta needs N, T >= 2");
  if (!(h > 0.0 && h < 1.0)) throw ParameterError("rate_delta needs h in (0, 1)");
  const double n = N;
  const double t = T;
  return 1.0 / std::sqrt(n) + std::sqrt(std::log(n * t) / (t * h)) + h * h * std::log(t);
}

double rate_omega(int N, int T, double h, int J, double eta) {
  if (J < 1) throw ParameterError("rate_omega needs J >= 1");
  if (eta < 2.0) throw ParameterError("rate_omega needs eta >= 2");
  return rate_delta(N, T, h) + std::pow(static_cast<double>(J), -eta);
}

double rate_static(int N, int T) {
  if (N < 2 || T < 2) throw ParameterError("rate_static needs N, T >= 2");
  const double n = N;
  const double t = T;
  return 1.0 / std::sqrt(n) + std::sqrt(std::log(n * t) / t);
}

ResidualCovariance apply_threshold(const ResidualMoments& moments, const ThresholdConfig& cfg, double rate_value) {
  cfg.validate();
  const Eigen::Index N = moments.sigma_hat.rows();
  if (moments.theta_hat.rows() != N || moments.theta_hat.cols() != N || moments.sigma_hat.cols() != N) {
    throw ParameterError("apply_threshold: sigma and theta must be square and equal-sized");
  }
  if ((moments.theta_hat.array() < 0.0).any()) throw ParameterError("apply_threshold: theta must be nonnegative");
  if (!(rate_value >= 0.0)) throw ParameterError("apply_threshold: rate must be nonnegative");

  ResidualCovariance rc;
  rc.sigma_hat = moments.sigma_hat;
  rc.theta_hat = moments.theta_hat;
  Eigen::Index zeros = 0;
  bool pd = false;
  for (double C : cfg.escalation_grid) {
    threshold_into(moments, C * rate_value, rc.thresholded, zeros);
    rc.applied_C = C;
    const Eigen::LLT<Eigen::MatrixXd> llt(rc.thresholded);
    if (llt.info() == Eigen::Success) {
      pd = true;
      break;
    }
  }
  if (!pd) {
    const double lmin = min_eigenvalue(rc.thresholded);
    rc.jitter = std::abs(lmin) + 1e-8;
    rc.thresholded.diagonal().array() += rc.jitter;
  }
  const double off = static_cast<double>(N) * static_cast<double>(N - 1);
  rc.zero_fraction = N > 1 ? static_cast<double>(zeros) / off : 0.0;
  return rc;
}

double sparsity_measure(const Eigen::MatrixXd& Sigma_u, double q) {
  if (!(q >= 0.0 && q < 1.0)) throw ParameterError("sparsity_measure needs q in [0, 1)");
  double best = 0.0;
  for (Eigen::Index i = 0; i < Sigma_u.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < Sigma_u.cols(); ++j) {
      const double a = std::abs(Sigma_u(i, j));
      if (a == 0.0) continue;
      row += q == 0.0 ? 1.0 : std::pow(a, q);
    }
    best = std::max(best, row);
  }
  return best;
}

}  // namespace tvcov
