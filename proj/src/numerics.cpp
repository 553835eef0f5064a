#include "tvcov/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tvcov/errors.hpp"

namespace tvcov {

void fix_column_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    auto col = vectors.col(j);
    const double peak = col.cwiseAbs().maxCoeff();
    if (peak == 0.0) continue;
    // First entry within rounding of the peak, so exact ties resolve by position.
    Eigen::Index lead = 0;
    while (std::abs(col(lead)) < peak * (1.0 - 1e-12)) ++lead;
    if (col(lead) < 0.0) col = -col;
  }
}

EigenPairs sym_eigen_topk(const Eigen::MatrixXd& M, int k) {
  if (M.rows() != M.cols()) throw ParameterError("sym_eigen_topk: matrix must be square");
  const int n = static_cast<int>(M.rows());
  if (k < 1 || k > n) throw ParameterError("sym_eigen_topk: k=" + std::to_string(k) + " outside 1.." + std::to_string(n));
  if (!M.allFinite()) throw NumericError("sym_eigen_topk: non-finite entries");

  const Eigen::MatrixXd S = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(S);
  if (solver.info() != Eigen::Success) throw NumericError("sym_eigen_topk: eigensolver did not converge");

  // Eigen returns ascending order.
  EigenPairs out;
  out.values = solver.eigenvalues().tail(k).reverse();
  out.vectors = solver.eigenvectors().rightCols(k).rowwise().reverse();
  fix_column_signs(out.vectors);
  return out;
}

double default_spd_floor(double lambda_max) { return 1e-8 * std::max(1.0, lambda_max); }

Eigen::MatrixXd nearest_spd(const Eigen::MatrixXd& M, std::optional<double> floor) {
  if (M.rows() != M.cols()) throw ParameterError("nearest_spd: matrix must be square");
  if (!M.allFinite()) throw NumericError("nearest_spd: non-finite entries");
  Eigen::MatrixXd S = 0.5 * (M + M.transpose());
  const Eigen::Index n = S.rows();
  if (n == 0) return S;

  // Fast path: S - floor*I positive definite means every eigenvalue clears the floor.
  // The floor depends on lambda_max, bounded here by the Gershgorin radius.
  if (!floor) {
    double gersh = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) gersh = std::max(gersh, S.row(i).cwiseAbs().sum());
    const Eigen::LLT<Eigen::MatrixXd> llt(S - default_spd_floor(gersh) * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) return S;
  } else {
    const Eigen::LLT<Eigen::MatrixXd> llt(S - *floor * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) return S;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(S);
  if (solver.info() != Eigen::Success) throw NumericError("nearest_spd: eigensolver did not converge");
  Eigen::VectorXd values = solver.eigenvalues();
  const double fl = floor ? *floor : default_spd_floor(values.maxCoeff());
  values = values.cwiseMax(fl);
  const Eigen::MatrixXd& V = solver.eigenvectors();
  Eigen::MatrixXd out = V * values.asDiagonal() * V.transpose();
  return 0.5 * (out + out.transpose());
}

double min_eigenvalue(const Eigen::MatrixXd& M) {
  const Eigen::MatrixXd S = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(S, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& M) {
  const Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) {
    const double lmin = min_eigenvalue(M);
    throw NumericError("matrix is not positive definite (lambda_min = " + std::to_string(lmin) + ")", lmin);
  }
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(M.rows(), M.cols()));
  return 0.5 * (inv + inv.transpose());
}

Eigen::MatrixXd woodbury_inverse(const Eigen::MatrixXd& L, const Eigen::MatrixXd& Sf,
                                 const Eigen::MatrixXd& Su_inv) {
  const Eigen::Index N = L.rows();
  const Eigen::Index R = L.cols();
  if (Sf.rows() != R || Sf.cols() != R || Su_inv.rows() != N || Su_inv.cols() != N) {
    throw ParameterError("woodbury_inverse: dimension mismatch");
  }
  const Eigen::LLT<Eigen::MatrixXd> sf_llt(Sf);
  if (sf_llt.info() != Eigen::Success) {
    const double lmin = min_eigenvalue(Sf);
    throw NumericError("woodbury_inverse: factor covariance not positive definite (lambda_min = " +
                           std::to_string(lmin) + ")",
                       lmin);
  }
  const Eigen::MatrixXd SuL = Su_inv * L;  // N x R
  Eigen::MatrixXd core = sf_llt.solve(Eigen::MatrixXd::Identity(R, R)) + L.transpose() * SuL;
  core = (0.5 * (core + core.transpose())).eval();
  const Eigen::LLT<Eigen::MatrixXd> core_llt(core);
  if (core_llt.info() != Eigen::Success) {
    const double lmin = min_eigenvalue(core);
    throw NumericError("woodbury_inverse: core matrix not positive definite (lambda_min = " +
                           std::to_string(lmin) + ")",
                       lmin);
  }
  Eigen::MatrixXd out = Su_inv - SuL * core_llt.solve(SuL.transpose());
  return 0.5 * (out + out.transpose());
}

double soft_threshold(double z, double tau) {
  const double mag = std::abs(z) - tau;
  if (mag <= 0.0) return 0.0;
  return z > 0.0 ? mag : -mag;
}

NaturalCubicSpline::NaturalCubicSpline(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 3) throw ParameterError("cubic spline needs at least 3 knots");
  if (y_.size() != n) throw ParameterError("cubic spline: knots_x and knots_y differ in length");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(x_[i] > x_[i - 1])) throw ParameterError("cubic spline: knots_x must be strictly increasing");
  }
  // Tridiagonal system for interior second derivatives; m_0 = m_{n-1} = 0.
  m_.assign(n, 0.0);
  const std::size_t k = n - 2;
  std::vector<double> diag(k), upper(k), rhs(k);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = x_[i] - x_[i - 1];
    const double h1 = x_[i + 1] - x_[i];
    diag[i - 1] = 2.0 * (h0 + h1);
    upper[i - 1] = h1;
    rhs[i - 1] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
  }
  // Thomas algorithm; the sub-diagonal entry of row i equals upper[i-1].
  for (std::size_t i = 1; i < k; ++i) {
    const double w = upper[i - 1] / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  for (std::size_t i = k; i-- > 0;) {
    const double next = (i + 1 < k) ? m_[i + 2] : 0.0;
    m_[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
  }
}

double NaturalCubicSpline::operator()(double q) const {
  if (!(q >= x_.front() && q <= x_.back())) {
    throw ParameterError("cubic spline: query " + std::to_string(q) + " outside knot range [" +
                         std::to_string(x_.front()) + ", " + std::to_string(x_.back()) + "]");
  }
  auto it = std::upper_bound(x_.begin(), x_.end(), q);
  std::size_t i = static_cast<std::size_t>(std::distance(x_.begin(), it));
  if (i == 0) i = 1;
  if (i >= x_.size()) i = x_.size() - 1;
  const std::size_t j = i - 1;
  if (q == x_[j]) return y_[j];
  if (q == x_[i]) return y_[i];
  const double h = x_[i] - x_[j];
  const double a = (x_[i] - q) / h;
  const double b = (q - x_[j]) / h;
  return a * y_[j] + b * y_[i] + ((a * a * a - a) * m_[j] + (b * b * b - b) * m_[i]) * h * h / 6.0;
}

std::vector<double> cubic_spline_interpolate(const std::vector<double>& knots_x,
                                             const std::vector<double>& knots_y,
                                             const std::vector<double>& query_x) {
  const NaturalCubicSpline spline(knots_x, knots_y);
  std::vector<double> out;
  out.reserve(query_x.size());
  for (double q : query_x) out.push_back(spline(q));
  return out;
}

Eigen::MatrixXd spline_weight_matrix(const std::vector<double>& knots_x, const std::vector<double>& query_x) {
  const std::size_t n = knots_x.size();
  Eigen::MatrixXd W(static_cast<Eigen::Index>(query_x.size()), static_cast<Eigen::Index>(n));
  std::vector<double> unit(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    unit.assign(n, 0.0);
    unit[k] = 1.0;
    const auto col = cubic_spline_interpolate(knots_x, unit, query_x);
    for (std::size_t q = 0; q < query_x.size(); ++q) {
      W(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(k)) = col[q];
    }
  }
  return W;
}

ProcrustesAlignment procrustes_align(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw ParameterError("procrustes_align: dimension mismatch");
  const Eigen::Index R = A.cols();
  for (const auto* M : {&A, &B}) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(*M);
    const auto& s = svd.singularValues();
    if (R == 0 || s(R - 1) <= 1e-12 * std::max(1.0, s(0))) {
      throw NumericError("procrustes_align: input is not of full column rank");
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A.transpose() * B, Eigen::ComputeFullU | Eigen::ComputeFullV);
  ProcrustesAlignment out;
  out.rotation = svd.matrixU() * svd.matrixV().transpose();
  out.aligned = A * out.rotation;
  return out;
}

}  // namespace tvcov
