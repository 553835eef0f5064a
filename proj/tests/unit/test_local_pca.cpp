#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "tvcov/errors.hpp"
#include "tvcov/local_pca.hpp"
#include "tvcov/sieve_ppca.hpp"

using namespace tvcov;
using testing::random_matrix;

namespace {

// Equal to F up to a sign per column.
double sign_aligned_diff(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < A.cols(); ++k) {
    const double s = A.col(k).dot(B.col(k)) >= 0.0 ? 1.0 : -1.0;
    worst = std::max(worst, (A.col(k) - s * B.col(k)).norm() / std::max(1.0, B.col(k).norm()));
  }
  return worst;
}

double ls_objective(const Eigen::MatrixXd& Yr, const Eigen::MatrixXd& L, const Eigen::MatrixXd& F) {
  return (Yr - L * F.transpose()).squaredNorm() / static_cast<double>(Yr.size());
}

}  // namespace

TEST_CASE("weight_panel examples") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd Y = random_matrix(rng, 4, 5);
  KernelWeights w = uniform_weights(5, 3);
  CHECK(weight_panel(Y, w) == Y);
  w.weights(1) = 0.0;
  w.weights(2) = 4.0;
  const Eigen::MatrixXd Z = weight_panel(Y, w);
  CHECK(Z.col(1).isZero(0.0));
  CHECK(Z.col(2) == 2.0 * Y.col(2));
  CHECK(Z.col(0) == Y.col(0));
  CHECK_THROWS_AS(weight_panel(Y, uniform_weights(4, 1)), ParameterError);
}

TEST_CASE("noiseless one-factor data is reconstructed exactly") {
  std::mt19937_64 rng(2);
  const Eigen::VectorXd lambda = random_matrix(rng, 12, 1);
  const Eigen::VectorXd f = random_matrix(rng, 40, 1);
  const Eigen::MatrixXd Y = lambda * f.transpose();
  const LocalFactorEstimate est = estimate_local_pca(Y, uniform_weights(40, 20), 1);
  CHECK((est.loadings * est.factors.transpose() - Y).norm() < 1e-8);
  CHECK(est.residuals.norm() < 1e-8);
  CHECK(est.factor_cov(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("normalisation and diagonal loading Gram") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const PanelData p = testing::factor_panel(rng, 30, 80, 3);
    const LocalFactorEstimate est = estimate_local_pca(p, 1 + rep * 8, 0.2, 3);
    CHECK((est.factors.transpose() * est.factors / 80.0 - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-8);
    CHECK((est.factor_cov - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-8);
    const Eigen::MatrixXd G = est.loadings.transpose() * est.loadings;
    const double off = (G - Eigen::MatrixXd(G.diagonal().asDiagonal())).norm();
    CHECK(off <= 1e-6 * G.diagonal().norm());
    for (int k = 1; k < 3; ++k) CHECK(est.eigenvalues(k - 1) >= est.eigenvalues(k));
    CHECK(est.eigenvalues(2) > 0.0);
  }
}

TEST_CASE("uniform weights reproduce global PCA") {
  std::mt19937_64 rng(4);
  const PanelData p = testing::factor_panel(rng, 25, 60, 2);
  const LocalFactorEstimate loc = estimate_local_pca(p.values, uniform_weights(60, 30), 2);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.values.transpose() * p.values);
  Eigen::MatrixXd F(60, 2);
  F.col(0) = std::sqrt(60.0) * es.eigenvectors().col(59);
  F.col(1) = std::sqrt(60.0) * es.eigenvectors().col(58);
  CHECK(sign_aligned_diff(loc.factors, F) < 1e-8);
  CHECK(sign_aligned_diff(loc.loadings, p.values * F / 60.0) < 1e-8);
}

TEST_CASE("a bandwidth covering the sample matches the kernel-free fit") {
  std::mt19937_64 rng(5);
  const PanelData p = testing::factor_panel(rng, 20, 50, 2);
  KernelWeights flat = boundary_weights(50, 25, 0.5);
  flat.weights.setConstant(1.0);
  const LocalFactorEstimate a = estimate_local_pca(p.values, flat, 2);
  const LocalFactorEstimate b = estimate_local_pca(p.values, uniform_weights(50, 25), 2);
  CHECK(sign_aligned_diff(a.factors, b.factors) < 1e-8);
}

TEST_CASE("factor_covariance examples") {
  std::mt19937_64 rng(6);
  const PanelData p = testing::factor_panel(rng, 15, 40, 1);
  LocalFactorEstimate est = estimate_local_pca(p, 20, 0.3, 1);
  CHECK(factor_covariance(est)(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
  est.factors *= 2.0;
  CHECK(factor_covariance(est)(0, 0) == doctest::Approx(4.0).epsilon(1e-10));
}

TEST_CASE("local PCA minimises the weighted least-squares criterion") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 5; ++rep) {
    const PanelData p = testing::factor_panel(rng, 20, 30, 2);
    const KernelWeights w = boundary_weights(30, 10 + rep, 0.3);
    const LocalFactorEstimate est = estimate_local_pca(p.values, w, 2);
    const Eigen::MatrixXd Yr = weight_panel(p.values, w);
    const double best = ls_objective(Yr, est.loadings, est.factors);
    for (int k = 0; k < 100; ++k) {
      const Eigen::MatrixXd noise = 0.3 * random_matrix(rng, 30, 2);
      const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(est.factors + noise).householderQ();
      const Eigen::MatrixXd F = std::sqrt(30.0) * Q.leftCols(2);
      const Eigen::MatrixXd L = Yr * F / 30.0;
      CHECK(best <= ls_objective(Yr, L, F) + 1e-12);
    }
  }
}

TEST_CASE("scale equivariance") {
  std::mt19937_64 rng(8);
  const PanelData p = testing::factor_panel(rng, 20, 60, 2);
  PanelData q = p;
  q.values *= 3.5;
  const LocalFactorEstimate a = estimate_local_pca(p, 30, 0.2, 2);
  const LocalFactorEstimate b = estimate_local_pca(q, 30, 0.2, 2);
  CHECK(sign_aligned_diff(b.factors, a.factors) < 1e-8);
  CHECK(sign_aligned_diff(b.loadings, 3.5 * a.loadings) < 1e-8);
}

TEST_CASE("observations outside the kernel support do not matter") {
  std::mt19937_64 rng(9);
  const PanelData p = testing::factor_panel(rng, 20, 100, 2);
  PanelData q = p;
  const KernelWeights w = boundary_weights(100, 50, 0.1);
  for (int t = 0; t < 100; ++t)
    if (w.weights(t) == 0.0) q.values.col(t) = 100.0 * random_matrix(rng, 20, 1);
  const LocalFactorEstimate a = estimate_local_pca(p, 50, 0.1, 2);
  const LocalFactorEstimate b = estimate_local_pca(q, 50, 0.1, 2);
  CHECK(a.factors == b.factors);
  CHECK(a.loadings == b.loadings);
  CHECK(a.residuals == b.residuals);
  CHECK(a.eigenvalues == b.eigenvalues);
}

TEST_CASE("R beyond the local sample is rejected") {
  std::mt19937_64 rng(10);
  const PanelData p = testing::factor_panel(rng, 20, 40, 2);
  CHECK_THROWS_AS(estimate_local_pca(p, 20, 0.05, 3), ParameterError);
  CHECK_THROWS_AS(estimate_local_pca(p, 20, 0.2, 0), ParameterError);
  CHECK_THROWS_AS(estimate_local_pca(p, 20, 0.2, 21), ParameterError);
  CHECK_NOTHROW(estimate_local_pca(p, 20, 0.05, 2));
}

TEST_CASE("method names") {
  CHECK(to_string(Method::local_pca) == "local-pca");
  CHECK(method_from_string("local-ppca") == Method::local_ppca);
  CHECK_THROWS_AS(method_from_string("pca"), ParameterError);
}
