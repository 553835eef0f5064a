#include "tvcov/engine.hpp"

#include <algorithm>
#include <cmath>

#include "tvcov/errors.hpp"
#include "tvcov/numerics.hpp"
#include "tvcov/parallel.hpp"

namespace tvcov {

void EstimatorConfig::validate() const {
  if (!(h > 0.0 && h < 1.0)) throw ParameterError("h must lie in (0, 1)");
  if (!(C >= 0.0)) throw ParameterError("C_NT must be nonnegative");
  if (R < 1) throw ParameterError("R must be >= 1");
  if (method == Method::local_ppca) {
    if (J < 1) throw ParameterError("J must be >= 1");
    if (eta < 2.0) throw ParameterError("eta must be >= 2");
  }
  if (ridge && *ridge < 0.0) throw ParameterError("ridge must be nonnegative");
}

nlohmann::json to_json(const EstimatorConfig& cfg) {
  nlohmann::json j;
  j["method"] = to_string(cfg.method);
  j["h"] = cfg.h;
  j["C_NT"] = cfg.C;
  j["R"] = cfg.R;
  if (cfg.method == Method::local_ppca) {
    j["J"] = cfg.J;
    j["eta"] = cfg.eta;
    j["intercept"] = cfg.intercept;
    if (cfg.ridge) j["ridge"] = *cfg.ridge;
  }
  return j;
}

CovarianceEstimate assemble(const LocalFactorEstimate& est, const ResidualCovariance& rc) {
  const Eigen::Index N = est.loadings.rows();
  if (rc.thresholded.rows() != N || rc.thresholded.cols() != N || est.factor_cov.rows() != est.loadings.cols()) {
    throw ParameterError("assemble: component dimensions disagree");
  }
  CovarianceEstimate out;
  out.anchor = est.anchor;
  out.loadings = est.loadings;
  out.factor_cov = est.factor_cov;
  out.sigma_u = rc.thresholded;
  out.sigma_y = est.loadings * est.factor_cov * est.loadings.transpose() + rc.thresholded;
  out.sigma_y = (0.5 * (out.sigma_y + out.sigma_y.transpose())).eval();
  out.sigma_y_inv = woodbury_inverse(est.loadings, est.factor_cov, spd_inverse(rc.thresholded));
  out.config.method = est.method;
  out.config.h = est.bandwidth;
  out.config.C = rc.applied_C;
  out.config.R = static_cast<int>(est.loadings.cols());
  out.boundary_flag = est.boundary_flag;
  out.applied_C = rc.applied_C;
  out.jitter = rc.jitter;
  out.zero_fraction = rc.zero_fraction;
  return out;
}

double threshold_rate(Method method, int N, int T, double h, int J, double eta) {
  return method == Method::local_ppca ? rate_omega(N, T, h, J, eta) : rate_delta(N, T, h);
}

BoundaryFlag region_flag(int T, double h, int r) {
  const auto [lo, hi] = interior_region(T, h);
  if (r < lo) return BoundaryFlag::left_boundary;
  if (r > hi) return BoundaryFlag::right_boundary;
  return BoundaryFlag::interior;
}

LocalFactorEstimate fit_factors(const PanelData& panel, const CharacteristicsPanel* chars, int r,
                                const EstimatorConfig& cfg) {
  if (cfg.method == Method::local_ppca) {
    if (!chars) throw ParameterError("local-ppca requires characteristics");
    PpcaOptions opt;
    opt.J = cfg.J;
    opt.intercept = cfg.intercept;
    opt.ridge = cfg.ridge;
    return estimate_local_ppca(panel, *chars, r, cfg.h, cfg.R, opt);
  }
  return estimate_local_pca(panel, r, cfg.h, cfg.R);
}

CovarianceEstimate estimate_at(const PanelData& panel, const CharacteristicsPanel* chars, int r,
                               const EstimatorConfig& cfg) {
  cfg.validate();
  const LocalFactorEstimate est = fit_factors(panel, chars, r, cfg);
  const ResidualMoments moments = residual_moments(est.residuals);
  const Rate rate = cfg.method == Method::local_ppca ? Rate::omega : Rate::delta;
  const auto tcfg = ThresholdConfig::with_default_grid(cfg.C, rate, cfg.eta);
  const double rv = threshold_rate(cfg.method, panel.N(), panel.T(), cfg.h, cfg.J, cfg.eta);
  CovarianceEstimate out = assemble(est, apply_threshold(moments, tcfg, rv));
  const double applied = out.config.C;
  out.config = cfg;
  out.config.C = cfg.C;
  out.applied_C = applied;
  out.boundary_flag = region_flag(panel.T(), cfg.h, r);
  return out;
}

PathResult estimate_path(const PanelData& panel, const CharacteristicsPanel* chars, const std::vector<int>& anchors,
                         const EstimatorConfig& cfg, unsigned threads) {
  EstimatorConfig run = cfg;
  run.method = chars ? Method::local_ppca : Method::local_pca;
  run.validate();
  for (int r : anchors) {
    if (r < 1 || r > panel.T()) throw ParameterError("anchor " + std::to_string(r) + " outside 1.." + std::to_string(panel.T()));
  }
  std::vector<std::optional<CovarianceEstimate>> slots(anchors.size());
  std::vector<std::string> errors(anchors.size());
  parallel_for(anchors.size(), threads, [&](std::size_t i) {
    try {
      slots[i] = estimate_at(panel, chars, anchors[i], run);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });
  PathResult out;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (slots[i]) {
      out.estimates.push_back(std::move(*slots[i]));
    } else {
      out.failures.push_back({anchors[i], errors[i]});
    }
  }
  return out;
}

std::vector<TuneResult> tune_oracle(const PanelData& panel, const CharacteristicsPanel* chars,
                                    const std::vector<int>& anchors, const std::vector<Eigen::MatrixXd>& truth_inv,
                                    const std::vector<double>& h_grid, const std::vector<double>& C_grid,
                                    const EstimatorConfig& base, unsigned threads) {
  if (h_grid.empty() || C_grid.empty()) throw ParameterError("tune_oracle: empty tuning grid");
  if (truth_inv.size() != anchors.size()) throw ParameterError("tune_oracle: truth must align with anchors");
  std::vector<double> hs = h_grid;
  std::vector<double> cs = C_grid;
  std::sort(hs.begin(), hs.end());
  std::sort(cs.begin(), cs.end());
  const Rate rate = base.method == Method::local_ppca ? Rate::omega : Rate::delta;

  std::vector<TuneResult> results(anchors.size());
  parallel_for(anchors.size(), threads, [&](std::size_t a) {
    TuneResult& best = results[a];
    best.anchor = anchors[a];
    best.error = std::numeric_limits<double>::infinity();
    for (double h : hs) {
      EstimatorConfig cfg = base;
      cfg.h = h;
      LocalFactorEstimate est;
      ResidualMoments moments;
      try {
        cfg.validate();
        est = fit_factors(panel, chars, anchors[a], cfg);
        moments = residual_moments(est.residuals);
      } catch (const Error& e) {
        best.message = e.what();
        continue;
      }
      const double rv = threshold_rate(cfg.method, panel.N(), panel.T(), h, cfg.J, cfg.eta);
      for (double C : cs) {
        try {
          const auto rc = apply_threshold(moments, ThresholdConfig::with_default_grid(C, rate, cfg.eta), rv);
          const CovarianceEstimate ce = assemble(est, rc);
          const double err = (ce.sigma_y_inv - truth_inv[a]).norm();
          if (err < best.error) {
            best.error = err;
            best.h = h;
            best.C = C;
            best.ok = true;
            best.loadings = est.loadings;
          }
        } catch (const Error& e) {
          best.message = e.what();
        }
      }
    }
    if (best.ok) best.message.clear();
  });
  return results;
}

RateDiagnostics rate_diagnostics(int N, int T, double h, std::optional<int> J, std::optional<double> eta,
                                 std::optional<double> max_basis_row_norm) {
  RateDiagnostics d;
  d.delta_NT = rate_delta(N, T, h);
  const double Th = static_cast<double>(T) * h;
  d.b_NT = 1.0 / std::sqrt(Th);
  const double phi = max_basis_row_norm.value_or(1.0);
  const double n = N;
  const double jfac = J ? std::sqrt(static_cast<double>(*J)) : 1.0;
  d.a_NT = phi * jfac * (1.0 / n + 1.0 / Th + h * (1.0 / std::sqrt(n) + 1.0 / std::sqrt(Th)));
  if (J) {
    const double e = eta.value_or(2.0);
    d.J_term = std::pow(static_cast<double>(*J), -e);
    d.omega_NT = d.delta_NT + *d.J_term;
  }
  return d;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ParameterError("matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.front().size()) : 0;
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw ParameterError("matrix rows differ in length");
    for (Eigen::Index k = 0; k < cols; ++k) M(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return M;
}

nlohmann::json to_json(const CovarianceEstimate& est) {
  nlohmann::json j;
  j["anchor"] = est.anchor;
  j["boundary_flag"] = to_string(est.boundary_flag);
  j["config"] = to_json(est.config);
  j["applied_C"] = est.applied_C;
  j["jitter"] = est.jitter;
  j["zero_fraction"] = est.zero_fraction;
  j["loadings"] = matrix_to_json(est.loadings);
  j["factor_cov"] = matrix_to_json(est.factor_cov);
  j["sigma_u"] = matrix_to_json(est.sigma_u);
  j["sigma_y"] = matrix_to_json(est.sigma_y);
  j["sigma_y_inv"] = matrix_to_json(est.sigma_y_inv);
  return j;
}

nlohmann::json to_json(const RateDiagnostics& d) {
  nlohmann::json j;
  j["delta_NT"] = d.delta_NT;
  j["b_NT"] = d.b_NT;
  j["a_NT"] = d.a_NT;
  if (d.omega_NT) j["omega_NT"] = *d.omega_NT;
  if (d.J_term) j["J_term"] = *d.J_term;
  return j;
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& M,
                      const std::vector<std::string>& row_labels, const std::vector<std::string>& col_labels) {
  LabelledTable t;
  t.corner = "";
  t.values = M;
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    t.row_labels.push_back(row_labels.empty() ? std::to_string(i + 1) : row_labels[static_cast<std::size_t>(i)]);
  for (Eigen::Index j = 0; j < M.cols(); ++j)
    t.column_labels.push_back(col_labels.empty() ? std::to_string(j + 1) : col_labels[static_cast<std::size_t>(j)]);
  write_labelled_csv(path, t);
}

}  // namespace tvcov
