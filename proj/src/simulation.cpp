#include "tvcov/simulation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

#include "tvcov/errors.hpp"
#include "tvcov/numerics.hpp"
#include "tvcov/parallel.hpp"

namespace tvcov {

namespace {

// Substream identifiers inside one replication.
enum Stream : std::uint64_t { kFactorCov = 1, kErrorCov = 2, kChars = 3, kPanel = 4 };

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& S, const char* what) {
  const Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw ParameterError(std::string(what) + " is not positive definite");
  return llt.matrixL();
}

Eigen::VectorXd standard_normals(Rng& rng, Eigen::Index n) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();
  return z;
}

Eigen::VectorXd ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int period) {
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols()) {
    throw NumericError("loading surface fit: design matrix is rank deficient at period " + std::to_string(period));
  }
  return qr.solve(y);
}

std::string fmt(double x) { return format_double(x); }

}  // namespace

std::string to_string(Regime r) { return r == Regime::smooth ? "smooth" : "structural-break"; }

Regime regime_from_string(const std::string& s) {
  if (s == "smooth") return Regime::smooth;
  if (s == "structural-break") return Regime::structural_break;
  throw ParameterError("regime: expected 'smooth' or 'structural-break', got '" + s + "'");
}

void SimulationConfig::validate() const {
  if (N < 10) throw ParameterError("N: must be >= 10, got " + std::to_string(N));
  if (T < kKnotPeriods) throw ParameterError("T: must be >= 51, got " + std::to_string(T));
  if (R != 2) throw ParameterError("R: the simulation design has exactly 2 factors");
  if (replications < 1) throw ParameterError("replications: must be >= 1");
  if (h_grid.empty()) throw ParameterError("h_grid: must be nonempty");
  if (C_grid.empty()) throw ParameterError("C_grid: must be nonempty");
  for (double h : h_grid)
    if (!(h > 0.0 && h < 1.0)) throw ParameterError("h_grid: values must lie in (0, 1)");
  for (double c : C_grid)
    if (!(c >= 0.0)) throw ParameterError("C_grid: values must be nonnegative");
  if (J < 1) throw ParameterError("J: must be >= 1");
  if (eta < 2.0) throw ParameterError("eta: must be >= 2");
  if (!(anchor_h > 0.0 && anchor_h < 1.0)) throw ParameterError("anchor_h: must lie in (0, 1)");
  if (!(char_corr > -1.0 / (N - 1) && char_corr < 1.0)) throw ParameterError("char_corr: equicorrelation matrix is not SPD");
  for (int l = 0; l < 2; ++l) {
    if (char_cov[l].size() != 0 && (char_cov[l].rows() != N || char_cov[l].cols() != N)) {
      throw ParameterError("char_cov: matrices must be N x N");
    }
  }
  for (int r : anchors)
    if (r < 1 || r > T) throw ParameterError("anchors: " + std::to_string(r) + " outside 1..T");
  if (!(break_cos_horizon > 0.0)) throw ParameterError("break_cos_horizon: must be positive");
}

std::vector<int> SimulationConfig::evaluation_anchors() const {
  if (!anchors.empty()) return anchors;
  const auto [lo, hi] = interior_region(T, anchor_h);
  std::vector<int> out;
  for (int r = std::max(lo, 1); r <= hi; ++r) out.push_back(r);
  return out;
}

Eigen::MatrixXd SimulationConfig::resolved_char_cov(int l) const {
  if (char_cov[static_cast<std::size_t>(l)].size() != 0) return char_cov[static_cast<std::size_t>(l)];
  Eigen::MatrixXd S = Eigen::MatrixXd::Constant(N, N, char_corr);
  S.diagonal().setOnes();
  return S;
}

LoadingCurves gen_loading_curves(int N, Regime regime, int periods, double break_cos_horizon) {
  LoadingCurves c;
  c.g1.resize(N, periods);
  c.g2.resize(N, periods);
  for (int i = 1; i <= N; ++i) {
    const double tilt = i / 30.0;
    for (int t = 1; t <= periods; ++t) {
      const double s = t;
      double g1 = 0.0;
      double g2 = 0.0;
      if (regime == Regime::smooth) {
        g1 = -5e-4 * s * (s - 51.0 - tilt);
        g2 = 2e-5 * s * (s - 25.0 + tilt) * (s - 51.0 - tilt);
      } else if (t <= 25) {
        g1 = 5e-4 * (s + 20.0 + tilt) * (s - 25.0);
        g2 = 5e-6 * (s - 25.0) * (s + 15.0 + tilt) * (s + 50.0 + tilt);
      } else {
        g1 = 2.0 * std::cos(4.0 * std::numbers::pi * s / break_cos_horizon + i);
        g2 = 2e-4 * (s - 25.0) * (s - 34.0 - tilt) * (s - 55.0);
      }
      c.g1(i - 1, t - 1) = g1;
      c.g2(i - 1, t - 1) = g2;
    }
  }
  return c;
}

std::vector<Eigen::MatrixXd> gen_factor_covs(Rng& rng, int periods) {
  constexpr int kDraws = 30;
  constexpr int kBurnIn = 100;
  const std::array<double, 2> phi{0.6, 0.3};
  const std::array<double, 2> innovation_var{0.64, 0.91};
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(periods));
  Eigen::MatrixXd path(kDraws, 2);
  for (int p = 0; p < periods; ++p) {
    for (int k = 0; k < 2; ++k) {
      const double sd = std::sqrt(innovation_var[k]);
      double f = rng.normal() * sd / std::sqrt(1.0 - phi[k] * phi[k]);
      for (int s = 0; s < kBurnIn; ++s) f = phi[k] * f + sd * rng.normal();
      for (int s = 0; s < kDraws; ++s) {
        f = phi[k] * f + sd * rng.normal();
        path(s, k) = f;
      }
    }
    const Eigen::MatrixXd centred = path.rowwise() - path.colwise().mean();
    out.push_back(nearest_spd(centred.transpose() * centred / (kDraws - 1.0)));
  }
  return out;
}

Eigen::MatrixXd draw_sparse_error_cov(int N, Rng& rng) {
  if (N < 2) throw ParameterError("error covariance needs N >= 2");
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(N, N);
  for (int i = 0; i < N; ++i) S(i, i) = rng.uniform(0.9, 1.2);
  // Partial Fisher-Yates over the upper-triangle slots.
  const std::size_t slots = static_cast<std::size_t>(N) * static_cast<std::size_t>(N - 1) / 2;
  const std::size_t picks = std::min<std::size_t>(static_cast<std::size_t>(N), slots);
  std::vector<std::uint32_t> idx(slots);
  for (std::size_t k = 0; k < slots; ++k) idx[k] = static_cast<std::uint32_t>(k);
  for (std::size_t k = 0; k < picks; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.index(slots - k));
    std::swap(idx[k], idx[j]);
  }
  for (std::size_t k = 0; k < picks; ++k) {
    // Slot s enumerates (i, j), i < j, row by row.
    std::size_t s = idx[k];
    int i = 0;
    std::size_t row_len = static_cast<std::size_t>(N - 1);
    while (s >= row_len) {
      s -= row_len;
      ++i;
      --row_len;
    }
    const int j = i + 1 + static_cast<int>(s);
    const double v = rng.uniform(0.1, 0.3);
    S(i, j) = v;
    S(j, i) = v;
  }
  return S;
}

std::vector<Eigen::MatrixXd> gen_error_covs(int N, Rng& rng, int periods) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(periods));
  for (int p = 0; p < periods; ++p) out.push_back(nearest_spd(draw_sparse_error_cov(N, rng)));
  return out;
}

std::array<Eigen::MatrixXd, 2> gen_characteristics(int N, Rng& rng, const Eigen::Vector2d& mean,
                                                   const std::array<Eigen::MatrixXd, 2>& cov, int periods) {
  std::array<Eigen::MatrixXd, 2> out;
  for (int l = 0; l < 2; ++l) {
    if (cov[l].rows() != N || cov[l].cols() != N) throw ParameterError("characteristic covariance must be N x N");
    const Eigen::MatrixXd L = cholesky_factor(cov[l], "characteristic covariance");
    out[l].resize(N, periods);
    for (int p = 0; p < periods; ++p) {
      out[l].col(p) = (L * standard_normals(rng, N)).array() + mean(l);
    }
  }
  return out;
}

std::vector<double> interpolation_grid(int periods, int T) {
  std::vector<double> q(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    q[static_cast<std::size_t>(t)] = T == 1 ? 1.0 : 1.0 + static_cast<double>(t) * (periods - 1) / (T - 1.0);
  }
  q.back() = periods;
  return q;
}

PeriodData interpolate_all(const KnotData& knots, int T) {
  const int P = static_cast<int>(knots.chars[0].cols());
  if (T < P) throw ParameterError("interpolate_all: T must be >= the knot count");
  std::vector<double> x(static_cast<std::size_t>(P));
  for (int p = 0; p < P; ++p) x[static_cast<std::size_t>(p)] = p + 1.0;
  const Eigen::MatrixXd W = spline_weight_matrix(x, interpolation_grid(P, T)).transpose();  // P x T

  PeriodData out;
  out.curves.g1 = knots.curves.g1 * W;
  out.curves.g2 = knots.curves.g2 * W;
  for (int l = 0; l < 2; ++l) out.chars[l] = knots.chars[l] * W;

  auto interpolate_sym = [&](const std::vector<Eigen::MatrixXd>& mats) {
    const Eigen::Index n = mats.front().rows();
    const Eigen::Index m = n * (n + 1) / 2;
    Eigen::MatrixXd series(m, P);
    for (int p = 0; p < P; ++p) {
      Eigen::Index k = 0;
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = j; i < n; ++i) series(k++, p) = mats[static_cast<std::size_t>(p)](i, j);
    }
    const Eigen::MatrixXd values = series * W;
    std::vector<Eigen::MatrixXd> result;
    result.reserve(static_cast<std::size_t>(T));
    Eigen::MatrixXd S(n, n);
    for (int t = 0; t < T; ++t) {
      Eigen::Index k = 0;
      for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = j; i < n; ++i) {
          S(i, j) = values(k, t);
          S(j, i) = values(k, t);
          ++k;
        }
      }
      result.push_back(nearest_spd(S));
    }
    return result;
  };
  out.factor_cov = interpolate_sym(knots.factor_cov);
  out.error_cov = interpolate_sym(knots.error_cov);
  return out;
}

Eigen::MatrixXd loading_design_g1(const Eigen::VectorXd& xs, const Eigen::VectorXd& xm) {
  Eigen::MatrixXd X(xs.size(), 5);
  X.col(0).setOnes();
  X.col(1) = xs;
  X.col(2) = xs.array().square();
  X.col(3) = xm;
  X.col(4) = xm.array().square();
  return X;
}

Eigen::MatrixXd loading_design_g2(const Eigen::VectorXd& xs, const Eigen::VectorXd& xm) {
  Eigen::MatrixXd X(xs.size(), 7);
  X.col(0).setOnes();
  X.col(1) = xs;
  X.col(2) = xs.array().square();
  X.col(3) = xs.array().cube();
  X.col(4) = xm;
  X.col(5) = xm.array().square();
  X.col(6) = xm.array().cube();
  return X;
}

LoadingSurface fit_loading_surface(const LoadingCurves& curves, const Eigen::MatrixXd& xs, const Eigen::MatrixXd& xm) {
  const Eigen::Index N = curves.g1.rows();
  const Eigen::Index T = curves.g1.cols();
  if (xs.rows() != N || xs.cols() != T || xm.rows() != N || xm.cols() != T || curves.g2.rows() != N ||
      curves.g2.cols() != T) {
    throw ParameterError("fit_loading_surface: dimension mismatch");
  }
  LoadingSurface s;
  s.alpha.resize(5, T);
  s.beta.resize(7, T);
  s.loadings.reserve(static_cast<std::size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::MatrixXd X1 = loading_design_g1(xs.col(t), xm.col(t));
    const Eigen::MatrixXd X2 = loading_design_g2(xs.col(t), xm.col(t));
    s.alpha.col(t) = ols(X1, curves.g1.col(t), static_cast<int>(t + 1));
    s.beta.col(t) = ols(X2, curves.g2.col(t), static_cast<int>(t + 1));
    Eigen::MatrixXd L(N, 2);
    L.col(0) = X1 * s.alpha.col(t);
    L.col(1) = X2 * s.beta.col(t);
    s.loadings.push_back(std::move(L));
  }
  return s;
}

const Eigen::MatrixXd& GroundTruth::lagged_loadings(int t) const {
  return loadings[static_cast<std::size_t>(std::max(t - 1, 1) - 1)];
}

Eigen::MatrixXd GroundTruth::sigma_y(int t) const {
  const Eigen::MatrixXd& L = lagged_loadings(t);
  const auto k = static_cast<std::size_t>(t - 1);
  return L * factor_cov[k] * L.transpose() + error_cov[k];
}

Eigen::MatrixXd GroundTruth::sigma_y_inv(int t) const {
  const auto k = static_cast<std::size_t>(t - 1);
  return woodbury_inverse(lagged_loadings(t), factor_cov[k], spd_inverse(error_cov[k]));
}

std::vector<std::string> numbered_labels(const std::string& prefix, int n) {
  const int width = static_cast<int>(std::to_string(n).size());
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  char buf[64];
  for (int i = 1; i <= n; ++i) {
    std::snprintf(buf, sizeof(buf), "%s%0*d", prefix.c_str(), width, i);
    out.emplace_back(buf);
  }
  return out;
}

SimulatedDataset draw_panel(const GroundTruth& truth, const CharacteristicsPanel& chars, Rng& rng) {
  const int T = truth.T();
  const auto N = truth.loadings.front().rows();
  SimulatedDataset ds;
  ds.truth = truth;
  ds.chars = chars;
  ds.factors.resize(2, T);
  ds.panel.values.resize(N, T);
  for (int t = 1; t <= T; ++t) {
    const auto k = static_cast<std::size_t>(t - 1);
    const Eigen::MatrixXd Lf = cholesky_factor(truth.factor_cov[k], "factor covariance");
    const Eigen::MatrixXd Lu = cholesky_factor(truth.error_cov[k], "error covariance");
    const Eigen::VectorXd f = Lf * standard_normals(rng, 2);
    const Eigen::VectorXd u = Lu * standard_normals(rng, N);
    ds.factors.col(t - 1) = f;
    ds.panel.values.col(t - 1) = truth.lagged_loadings(t) * f + u;
  }
  ds.panel.entity_ids = chars.entity_ids.empty() ? numbered_labels("e", static_cast<int>(N)) : chars.entity_ids;
  ds.panel.period_ids = chars.period_ids.empty() ? numbered_labels("t", T) : chars.period_ids;
  return ds;
}

SimulatedDataset simulate_dataset(const SimulationConfig& cfg, int replication) {
  cfg.validate();
  const Rng rep = Rng(cfg.seed).split(static_cast<std::uint64_t>(replication));
  Rng factor_rng = rep.split(kFactorCov);
  Rng error_rng = rep.split(kErrorCov);
  Rng char_rng = rep.split(kChars);
  Rng panel_rng = rep.split(kPanel);

  KnotData knots;
  knots.curves = gen_loading_curves(cfg.N, cfg.regime, kKnotPeriods, cfg.break_cos_horizon);
  knots.factor_cov = gen_factor_covs(factor_rng);
  knots.error_cov = gen_error_covs(cfg.N, error_rng);
  knots.chars = gen_characteristics(cfg.N, char_rng, cfg.char_mean, {cfg.resolved_char_cov(0), cfg.resolved_char_cov(1)});

  PeriodData periods = interpolate_all(knots, cfg.T);
  LoadingSurface surface = fit_loading_surface(periods.curves, periods.chars[0], periods.chars[1]);

  GroundTruth truth;
  truth.loadings = surface.loadings;
  truth.factor_cov = std::move(periods.factor_cov);
  truth.error_cov = std::move(periods.error_cov);

  CharacteristicsPanel chars;
  chars.values = {periods.chars[0], periods.chars[1]};
  chars.names = {"size", "momentum"};
  chars.entity_ids = numbered_labels("e", cfg.N);
  chars.period_ids = numbered_labels("t", cfg.T);

  SimulatedDataset ds = draw_panel(truth, chars, panel_rng);
  ds.surface = std::move(surface);
  return ds;
}

MonteCarloResult run_monte_carlo(const SimulationConfig& cfg, unsigned threads) {
  cfg.validate();
  const std::vector<int> anchors = cfg.evaluation_anchors();

  struct RepOutcome {
    std::vector<MonteCarloRow> rows;
    std::string error;
  };
  std::vector<RepOutcome> outcomes(static_cast<std::size_t>(cfg.replications));

  parallel_for(outcomes.size(), threads, [&](std::size_t rep) {
    RepOutcome& out = outcomes[rep];
    try {
      const SimulatedDataset ds = simulate_dataset(cfg, static_cast<int>(rep));
      std::vector<Eigen::MatrixXd> truth_inv;
      truth_inv.reserve(anchors.size());
      for (int r : anchors) truth_inv.push_back(ds.truth.sigma_y_inv(r));

      for (Method method : {Method::local_pca, Method::local_ppca}) {
        EstimatorConfig base;
        base.method = method;
        base.R = cfg.R;
        base.J = cfg.J;
        base.eta = cfg.eta;
        base.intercept = cfg.intercept;
        base.ridge = cfg.ridge;
        const auto tuned = tune_oracle(ds.panel, &ds.chars, anchors, truth_inv, cfg.h_grid, cfg.C_grid, base, 1);
        for (std::size_t a = 0; a < anchors.size(); ++a) {
          const TuneResult& tr = tuned[a];
          if (!tr.ok) {
            throw NumericError(to_string(method) + " failed at anchor " + std::to_string(tr.anchor) + ": " + tr.message);
          }
          const Eigen::MatrixXd& L = ds.truth.lagged_loadings(tr.anchor);
          MonteCarloRow row;
          row.replication = static_cast<int>(rep);
          row.anchor = tr.anchor;
          row.method = method;
          row.inv_cov_error = tr.error;
          row.h_star = tr.h;
          row.C_star = tr.C;
          row.loading_error_raw = (tr.loadings - L).norm();
          try {
            row.loading_error_aligned = (procrustes_align(tr.loadings, L).aligned - L).norm();
          } catch (const NumericError&) {
            row.loading_error_aligned = std::numeric_limits<double>::quiet_NaN();
          }
          out.rows.push_back(row);
        }
      }
    } catch (const Error& e) {
      out.rows.clear();
      out.error = "replication " + std::to_string(rep) + ": " + e.what();
    }
  });

  MonteCarloResult result;
  const std::size_t A = anchors.size();
  std::vector<MonteCarloSummaryRow> sums(A);
  std::vector<int> pca_aligned_n(A, 0), ppca_aligned_n(A, 0);
  for (std::size_t a = 0; a < A; ++a) sums[a].anchor = anchors[a];
  for (const auto& out : outcomes) {
    if (!out.error.empty()) {
      ++result.failed;
      result.failure_messages.push_back(out.error);
      continue;
    }
    ++result.completed;
    // Rows are ordered method-major, then anchor.
    for (std::size_t k = 0; k < out.rows.size(); ++k) {
      const MonteCarloRow& row = out.rows[k];
      MonteCarloSummaryRow& s = sums[k % A];
      if (row.method == Method::local_pca) {
        s.pca_inv_error += row.inv_cov_error;
        if (std::isfinite(row.loading_error_aligned)) {
          s.pca_loading_error_aligned += row.loading_error_aligned;
          ++pca_aligned_n[k % A];
        }
        s.pca_loading_error_raw += row.loading_error_raw;
      } else {
        s.ppca_inv_error += row.inv_cov_error;
        if (std::isfinite(row.loading_error_aligned)) {
          s.ppca_loading_error_aligned += row.loading_error_aligned;
          ++ppca_aligned_n[k % A];
        }
        s.ppca_loading_error_raw += row.loading_error_raw;
      }
      result.rows.push_back(row);
    }
  }
  if (result.completed > 0) {
    const double n = result.completed;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t a = 0; a < A; ++a) {
      MonteCarloSummaryRow& s = sums[a];
      s.pca_inv_error /= n;
      s.ppca_inv_error /= n;
      // Alignment is undefined where the true loadings are rank deficient.
      s.pca_loading_error_aligned = pca_aligned_n[a] > 0 ? s.pca_loading_error_aligned / pca_aligned_n[a] : nan;
      s.ppca_loading_error_aligned = ppca_aligned_n[a] > 0 ? s.ppca_loading_error_aligned / ppca_aligned_n[a] : nan;
      s.pca_loading_error_raw /= n;
      s.ppca_loading_error_raw /= n;
      s.ratio = s.ppca_inv_error / s.pca_inv_error;
    }
    result.summary = std::move(sums);
  }
  return result;
}

void write_monte_carlo_csv(const std::string& path, const MonteCarloResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot write file");
  out << "replication,anchor,method,loading_error_aligned,loading_error_raw,inv_cov_error,h_star,C_star\n";
  for (const auto& r : result.rows) {
    out << r.replication << ',' << r.anchor << ',' << to_string(r.method) << ',' << fmt(r.loading_error_aligned) << ','
        << fmt(r.loading_error_raw) << ',' << fmt(r.inv_cov_error) << ',' << fmt(r.h_star) << ',' << fmt(r.C_star)
        << '\n';
  }
}

void write_monte_carlo_summary_csv(const std::string& path, const MonteCarloResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot write file");
  out << "anchor,pca_inv_cov_error,ppca_inv_cov_error,ratio,pca_loading_error_aligned,ppca_loading_error_aligned,"
         "pca_loading_error_raw,ppca_loading_error_raw\n";
  for (const auto& s : result.summary) {
    out << s.anchor << ',' << fmt(s.pca_inv_error) << ',' << fmt(s.ppca_inv_error) << ',' << fmt(s.ratio) << ','
        << fmt(s.pca_loading_error_aligned) << ',' << fmt(s.ppca_loading_error_aligned) << ','
        << fmt(s.pca_loading_error_raw) << ',' << fmt(s.ppca_loading_error_raw) << '\n';
  }
}

}  // namespace tvcov
