#include "tvcov/local_pca.hpp"

#include <cmath>

#include "tvcov/errors.hpp"
#include "tvcov/numerics.hpp"

namespace tvcov {

std::string to_string(Method m) { return m == Method::local_pca ? "local-pca" : "local-ppca"; }

Method method_from_string(const std::string& s) {
  if (s == "local-pca") return Method::local_pca;
  if (s == "local-ppca") return Method::local_ppca;
  throw ParameterError("unknown method '" + s + "' (expected local-pca or local-ppca)");
}

Eigen::MatrixXd weight_panel(const Eigen::MatrixXd& Y, const KernelWeights& w) {
  if (Y.cols() != w.weights.size()) throw ParameterError("weight_panel: panel has " + std::to_string(Y.cols()) +
                                                         " periods but weights have " +
                                                         std::to_string(w.weights.size()));
  return Y * w.weights.cwiseSqrt().asDiagonal();
}

namespace detail {

std::vector<Eigen::Index> support_of(const KernelWeights& w) {
  std::vector<Eigen::Index> s;
  for (Eigen::Index t = 0; t < w.weights.size(); ++t)
    if (w.weights(t) > 0.0) s.push_back(t);
  return s;
}

void top_factors(const Eigen::MatrixXd& Y1, const Eigen::MatrixXd& Y2, const std::vector<Eigen::Index>& support,
                 int R, Eigen::MatrixXd& factors, Eigen::VectorXd& eigenvalues) {
  const Eigen::Index N = Y2.rows();
  const Eigen::Index T = Y2.cols();
  const auto S = static_cast<Eigen::Index>(support.size());
  if (R > S) {
    throw ParameterError("R=" + std::to_string(R) + " exceeds the " + std::to_string(S) +
                         " periods with positive kernel weight");
  }
  Eigen::MatrixXd A(N, S), B(N, S);
  for (Eigen::Index s = 0; s < S; ++s) {
    A.col(s) = Y1.col(support[static_cast<std::size_t>(s)]);
    B.col(s) = Y2.col(support[static_cast<std::size_t>(s)]);
  }
  const Eigen::MatrixXd gram = A.transpose() * B;
  const EigenPairs eig = sym_eigen_topk(gram, R);
  const double scale = eig.values.cwiseAbs().maxCoeff();
  for (int k = 0; k < R; ++k) {
    if (!(eig.values(k) > 1e-12 * std::max(scale, 1e-300))) {
      throw NumericError("local factor estimation: eigenvalue " + std::to_string(k + 1) +
                         " is not positive; the weighted panel has rank below R=" + std::to_string(R));
    }
  }
  factors = Eigen::MatrixXd::Zero(T, R);
  const double sqrtT = std::sqrt(static_cast<double>(T));
  for (Eigen::Index s = 0; s < S; ++s) factors.row(support[static_cast<std::size_t>(s)]) = sqrtT * eig.vectors.row(s);
  eigenvalues = eig.values / (static_cast<double>(N) * static_cast<double>(T));
}

}  // namespace detail

LocalFactorEstimate estimate_local_pca(const Eigen::MatrixXd& Y, const KernelWeights& w, int R) {
  const Eigen::Index N = Y.rows();
  const Eigen::Index T = Y.cols();
  if (R < 1 || R > N) throw ParameterError("R=" + std::to_string(R) + " must lie in 1..N=" + std::to_string(N));
  if (!Y.allFinite()) throw NumericError("estimate_local_pca: non-finite panel entries");

  LocalFactorEstimate est;
  est.anchor = w.anchor;
  est.method = Method::local_pca;
  est.bandwidth = w.bandwidth;
  est.boundary_flag = w.boundary_flag;

  const Eigen::MatrixXd Yr = weight_panel(Y, w);
  detail::top_factors(Yr, Yr, detail::support_of(w), R, est.factors, est.eigenvalues);
  est.loadings = Yr * est.factors / static_cast<double>(T);
  est.factor_cov = factor_covariance(est);
  est.residuals = Yr - est.loadings * est.factors.transpose();
  return est;
}

LocalFactorEstimate estimate_local_pca(const PanelData& panel, int r, double h, int R) {
  const int T = panel.T();
  const auto [lo, hi] = interior_region(T, h);
  (void)hi;
  if (R > lo) {
    throw ParameterError("R=" + std::to_string(R) + " exceeds the effective local sample floor(T*h)=" +
                         std::to_string(lo));
  }
  return estimate_local_pca(panel.values, boundary_weights(T, r, h), R);
}

Eigen::MatrixXd factor_covariance(const LocalFactorEstimate& est) {
  return est.factors.transpose() * est.factors / static_cast<double>(est.factors.rows());
}

}  // namespace tvcov
