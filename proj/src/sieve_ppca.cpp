#include "tvcov/sieve_ppca.hpp"

#include <cmath>

#include "tvcov/errors.hpp"
#include "tvcov/numerics.hpp"

namespace tvcov {

SieveBasis build_basis(const Eigen::MatrixXd& chars, int J, bool intercept, const std::vector<std::string>& names) {
  if (J < 1) throw ParameterError("sieve dimension J must be >= 1");
  const Eigen::Index N = chars.rows();
  const Eigen::Index d = chars.cols();
  if (d < 1) throw ParameterError("build_basis needs at least one characteristic");
  if (!chars.allFinite()) throw NumericError("build_basis: non-finite characteristics");

  SieveBasis basis;
  basis.J = J;
  basis.intercept = intercept;
  basis.mean = chars.colwise().mean().transpose();
  basis.sd.resize(d);
  const Eigen::Index offset = intercept ? 1 : 0;
  basis.matrix.resize(N, offset + J * d);
  if (intercept) basis.matrix.col(0).setOnes();
  for (Eigen::Index l = 0; l < d; ++l) {
    const Eigen::VectorXd centred = chars.col(l).array() - basis.mean(l);
    const double sd = std::sqrt(centred.squaredNorm() / static_cast<double>(N));
    const double scale = std::max(std::abs(basis.mean(l)), 1.0);
    if (!(sd > 1e-12 * scale)) {
      const std::string name = l < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(l)]
                                                                           : "#" + std::to_string(l + 1);
      throw NumericError("degenerate sieve basis: characteristic " + name + " is constant across entities");
    }
    basis.sd(l) = sd;
    const Eigen::ArrayXd x = centred.array() / sd;
    Eigen::ArrayXd power = x;
    for (int j = 0; j < J; ++j) {
      basis.matrix.col(offset + l * J + j) = power.matrix();
      power *= x;
    }
  }
  return basis;
}

double default_ridge(const SieveBasis& basis) {
  const double trace = basis.matrix.squaredNorm();
  return 1e-8 * trace / static_cast<double>(basis.matrix.cols());
}

SieveProjector::SieveProjector(const SieveBasis& basis, std::optional<double> ridge)
    : basis_(basis), ridge_(ridge ? *ridge : default_ridge(basis)) {
  if (ridge_ < 0.0) throw ParameterError("ridge must be nonnegative");
  const Eigen::Index N = basis_.matrix.rows();
  const Eigen::Index p = basis_.matrix.cols();
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(N + p, p);
  aug.topRows(N) = basis_.matrix;
  aug.bottomRows(p).diagonal().setConstant(std::sqrt(ridge_));
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(aug);
  r_ = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  q_ = (qr.householderQ() * Eigen::MatrixXd::Identity(N + p, p)).topRows(N);
  Eigen::MatrixXd gram = basis_.matrix.transpose() * basis_.matrix;
  gram.diagonal().array() += ridge_;
  // R'R is the ridged Gram; reject pivots that collapse relative to its trace.
  const double piv = r_.diagonal().cwiseAbs().minCoeff();
  const bool ok = std::isfinite(piv) && piv * piv > 1e-14 * gram.trace() / static_cast<double>(p);
  if (!ok) {
    const double lmin = min_eigenvalue(gram);
    throw NumericError("sieve Gram matrix is numerically singular (lambda_min = " + std::to_string(lmin) + ")",
                       lmin);
  }
}

Eigen::MatrixXd SieveProjector::coefficients(const Eigen::MatrixXd& M) const {
  if (M.rows() != basis_.matrix.rows()) throw ParameterError("project: row count differs from the basis");
  return r_.triangularView<Eigen::Upper>().solve(q_.transpose() * M);
}

Eigen::MatrixXd SieveProjector::apply(const Eigen::MatrixXd& M) const {
  if (M.rows() != q_.rows()) throw ParameterError("project: row count differs from the basis");
  return q_ * (q_.transpose() * M);
}

Eigen::MatrixXd project(const SieveBasis& basis, const Eigen::MatrixXd& M, std::optional<double> ridge) {
  return SieveProjector(basis, ridge).apply(M);
}

LocalFactorEstimate estimate_local_ppca(const Eigen::MatrixXd& Y, const KernelWeights& w,
                                        const SieveProjector& projector, int R) {
  const Eigen::Index N = Y.rows();
  const Eigen::Index T = Y.cols();
  const int cols = projector.basis().columns();
  if (R < 1 || R > cols || cols > N) {
    throw ParameterError("local PPCA needs 1 <= R <= basis columns <= N (R=" + std::to_string(R) +
                         ", columns=" + std::to_string(cols) + ", N=" + std::to_string(N) + ")");
  }
  if (!Y.allFinite()) throw NumericError("estimate_local_ppca: non-finite panel entries");

  LocalFactorEstimate est;
  est.anchor = w.anchor;
  est.method = Method::local_ppca;
  est.bandwidth = w.bandwidth;
  est.boundary_flag = w.boundary_flag;

  const Eigen::MatrixXd Yr = weight_panel(Y, w);
  const Eigen::MatrixXd PY = projector.apply(Yr);
  detail::top_factors(PY, Yr, detail::support_of(w), R, est.factors, est.eigenvalues);
  est.loadings = PY * est.factors / static_cast<double>(T);
  est.factor_cov = factor_covariance(est);
  est.residuals = Yr - est.loadings * est.factors.transpose();
  return est;
}

LocalFactorEstimate estimate_local_ppca(const PanelData& panel, const CharacteristicsPanel& chars, int r, double h,
                                        int R, const PpcaOptions& options) {
  chars.validate_against(panel);
  const int T = panel.T();
  const auto [lo, hi] = interior_region(T, h);
  (void)hi;
  if (R > lo) {
    throw ParameterError("R=" + std::to_string(R) + " exceeds the effective local sample floor(T*h)=" +
                         std::to_string(lo));
  }
  const KernelWeights w = boundary_weights(T, r, h);
  const SieveBasis basis = build_basis(chars.slice(basis_period(r)), options.J, options.intercept, chars.names);
  const SieveProjector projector(basis, options.ridge);
  return estimate_local_ppca(panel.values, w, projector, R);
}

double weighted_ls_objective(const Eigen::MatrixXd& Y, const SieveBasis& basis, const Eigen::MatrixXd& B,
                             const Eigen::MatrixXd& F, const KernelWeights& w) {
  const Eigen::MatrixXd Yr = weight_panel(Y, w);
  if (B.rows() != basis.matrix.cols() || F.rows() != Yr.cols() || B.cols() != F.cols()) {
    throw ParameterError("weighted_ls_objective: dimension mismatch");
  }
  const Eigen::MatrixXd fit = basis.matrix * B * F.transpose();
  return (Yr - fit).squaredNorm() / (static_cast<double>(Yr.rows()) * static_cast<double>(Yr.cols()));
}

}  // namespace tvcov
