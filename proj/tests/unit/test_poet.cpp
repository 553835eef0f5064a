#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "tvcov/errors.hpp"
#include "tvcov/kernel.hpp"
#include "tvcov/local_pca.hpp"
#include "tvcov/poet.hpp"

using namespace tvcov;
using testing::random_matrix;

TEST_CASE("moments of zero and constant residuals") {
  const ResidualMoments z = residual_moments(Eigen::MatrixXd::Zero(3, 5));
  CHECK(z.sigma_hat.isZero(0.0));
  CHECK(z.theta_hat.isZero(0.0));
  const ResidualMoments c = residual_moments(Eigen::MatrixXd::Ones(3, 5));
  CHECK((c.sigma_hat - Eigen::MatrixXd::Ones(3, 3)).norm() < 1e-15);
  CHECK(c.theta_hat.norm() < 1e-15);
}

TEST_CASE("moments match a two-pass reference") {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::MatrixXd U = random_matrix(rng, 3, 5);
    if (rep == 4) U.col(2).setZero();
    const ResidualMoments m = residual_moments(U);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int t = 0; t < 5; ++t) s += U(i, t) * U(j, t);
        s /= 5.0;
        double th = 0.0;
        for (int t = 0; t < 5; ++t) th += std::pow(U(i, t) * U(j, t) - s, 2);
        th /= 5.0;
        CHECK(std::abs(m.sigma_hat(i, j) - s) < 1e-12);
        CHECK(std::abs(m.theta_hat(i, j) - th) < 1e-12);
      }
    }
  }
}

TEST_CASE("rate examples") {
  CHECK(rate_delta(100, 200, 0.1) == doctest::Approx(0.8566694515100937).epsilon(1e-12));
  CHECK(std::round(rate_delta(100, 200, 0.1) * 1e4) / 1e4 == 0.8567);
  CHECK(rate_omega(100, 200, 0.1, 4, 2.0) == doctest::Approx(0.9191694515100937).epsilon(1e-12));
  CHECK(std::round(rate_omega(100, 200, 0.1, 4, 2.0) * 1e4) / 1e4 == 0.9192);
  CHECK(rate_omega(100, 200, 0.1, 1, 2.0) == doctest::Approx(rate_delta(100, 200, 0.1) + 1.0));
  CHECK(rate_omega(100, 200, 0.1, 4, 60.0) == doctest::Approx(rate_delta(100, 200, 0.1)).epsilon(1e-15));
  double prevN = rate_delta(10, 200, 0.1);
  for (int N : {20, 50, 100, 200}) {
    const double d = rate_delta(N, 200, 0.1);
    CHECK(d < prevN);
    prevN = d;
  }
  // Past N = Th ln(NT) the log term dominates.
  CHECK(rate_delta(1000, 200, 0.1) > rate_delta(300, 200, 0.1));
  double prev = rate_delta(100, 50, 0.1);
  for (int T : {100, 200, 400, 800}) {
    const double d = rate_delta(100, T, 0.1);
    CHECK(d < prev);
    prev = d;
  }
  CHECK(rate_delta(100, 200, 1e-6) > 50.0);
  CHECK(rate_static(100, 200) == doctest::Approx(0.1 + std::sqrt(std::log(20000.0) / 200.0)));
  CHECK_THROWS_AS(rate_delta(100, 200, 1.0), ParameterError);
  CHECK_THROWS_AS(rate_omega(100, 200, 0.1, 4, 1.0), ParameterError);
}

TEST_CASE("zero threshold leaves sigma unchanged") {
  std::mt19937_64 rng(2);
  const ResidualMoments m = residual_moments(random_matrix(rng, 6, 40));
  ThresholdConfig cfg = ThresholdConfig::with_default_grid(0.0);
  const ResidualCovariance rc = apply_threshold(m, cfg, 1.0);
  CHECK(rc.thresholded == m.sigma_hat);
  CHECK(rc.applied_C == 0.0);
  CHECK(rc.zero_fraction == 0.0);
}

TEST_CASE("a large threshold gives a diagonal matrix") {
  std::mt19937_64 rng(3);
  const ResidualMoments m = residual_moments(random_matrix(rng, 6, 40));
  const ResidualCovariance rc = apply_threshold(m, ThresholdConfig::with_default_grid(1e6), 1.0);
  CHECK(rc.thresholded == Eigen::MatrixXd(m.sigma_hat.diagonal().asDiagonal()));
  CHECK(rc.zero_fraction == 1.0);
}

TEST_CASE("soft thresholding a single entry") {
  ResidualMoments m;
  m.sigma_hat = Eigen::Matrix2d::Identity();
  m.sigma_hat(0, 1) = m.sigma_hat(1, 0) = 0.5;
  m.theta_hat = Eigen::Matrix2d::Constant(0.04);
  const ResidualCovariance rc = apply_threshold(m, ThresholdConfig::with_default_grid(1.0), 1.0);
  CHECK(rc.thresholded(0, 1) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(rc.thresholded(1, 0) == rc.thresholded(0, 1));
  CHECK(rc.thresholded(0, 0) == 1.0);
}

TEST_CASE("escalation restores definiteness") {
  ResidualMoments m;
  m.sigma_hat = Eigen::Matrix3d::Identity();
  m.sigma_hat(0, 1) = m.sigma_hat(1, 0) = 0.9;
  m.sigma_hat(1, 2) = m.sigma_hat(2, 1) = 0.9;
  m.sigma_hat(0, 2) = m.sigma_hat(2, 0) = -0.9;
  m.theta_hat = Eigen::Matrix3d::Constant(1.0);
  REQUIRE(Eigen::LLT<Eigen::MatrixXd>(m.sigma_hat).info() != Eigen::Success);
  const ResidualCovariance rc = apply_threshold(m, ThresholdConfig::with_default_grid(0.1), 1.0);
  CHECK(rc.applied_C > 0.1);
  CHECK(rc.jitter == 0.0);
  CHECK(Eigen::LLT<Eigen::MatrixXd>(rc.thresholded).info() == Eigen::Success);

  ThresholdConfig short_grid;
  short_grid.C = 0.0;
  short_grid.escalation_grid = {0.0};
  const ResidualCovariance j = apply_threshold(m, short_grid, 1.0);
  CHECK(j.jitter > 0.0);
  CHECK(Eigen::LLT<Eigen::MatrixXd>(j.thresholded).info() == Eigen::Success);
}

TEST_CASE("threshold invariants on random residuals") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 30; ++rep) {
    const int N = 5 + rep % 20;
    const ResidualMoments m = residual_moments(random_matrix(rng, N, 30 + rep));
    const double rate = rate_delta(N, 30 + rep, 0.2);
    const ResidualCovariance rc = apply_threshold(m, ThresholdConfig::with_default_grid(0.5), rate);
    CHECK(rc.thresholded == rc.thresholded.transpose());
    CHECK(Eigen::LLT<Eigen::MatrixXd>(rc.thresholded).info() == Eigen::Success);
    for (int i = 0; i < N; ++i) {
      CHECK(rc.thresholded(i, i) == m.sigma_hat(i, i) + rc.jitter);
      for (int j = 0; j < N; ++j) {
        if (i == j) continue;
        const double tau = rc.applied_C * rate * std::sqrt(m.theta_hat(i, j));
        CHECK(std::abs(rc.thresholded(i, j)) <= std::abs(m.sigma_hat(i, j)));
        if (rc.thresholded(i, j) != 0.0) CHECK(std::abs(m.sigma_hat(i, j)) >= tau);
        else CHECK(std::abs(m.sigma_hat(i, j)) <= tau);
      }
    }
  }
}

TEST_CASE("zero fraction grows with C") {
  std::mt19937_64 rng(5);
  const ResidualMoments m = residual_moments(random_matrix(rng, 15, 60));
  double prev = -1.0;
  for (int k = 0; k < 10; ++k) {
    const double C = 0.1 + 0.2 * k;
    const ResidualCovariance rc = apply_threshold(m, ThresholdConfig::with_default_grid(C), 1.0);
    CHECK(rc.zero_fraction >= prev);
    prev = rc.zero_fraction;
  }
}

TEST_CASE("config validation") {
  ThresholdConfig cfg = ThresholdConfig::with_default_grid(0.5);
  CHECK(cfg.escalation_grid.front() == 0.5);
  CHECK_NOTHROW(cfg.validate());
  cfg.escalation_grid = {0.5, 0.4};
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg.escalation_grid = {};
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
}

TEST_CASE("sparsity measure examples") {
  CHECK(sparsity_measure(Eigen::MatrixXd::Identity(4, 4)) == 1.0);
  Eigen::MatrixXd S = Eigen::MatrixXd::Identity(4, 4);
  S(1, 3) = S(3, 1) = 0.2;
  CHECK(sparsity_measure(S) == 2.0);
  CHECK(sparsity_measure(4.0 * Eigen::MatrixXd::Identity(2, 2), 0.5) == doctest::Approx(2.0));
  CHECK_THROWS_AS(sparsity_measure(S, 1.0), ParameterError);
}

TEST_CASE("thresholding recovers a block-diagonal support") {
  // Strong two-factor signal over block-diagonal errors.
  const int N = 50, T = 500, R = 2;
  const double h = 0.3;
  Eigen::MatrixXd Su = Eigen::MatrixXd::Identity(N, N);
  for (int b = 0; b < N; b += 5)
    for (int i = b; i < b + 5; ++i)
      for (int j = b; j < b + 5; ++j)
        if (i != j) Su(i, j) = 0.4;
  const Eigen::MatrixXd chol = Su.llt().matrixL();
  const Eigen::MatrixXi truth = (Su.array() != 0.0).cast<int>();

  std::mt19937_64 rng(6);
  double disagreement = 0.0;
  const int reps = 20;
  for (int rep = 0; rep < reps; ++rep) {
    const Eigen::MatrixXd L = random_matrix(rng, N, R) + Eigen::MatrixXd::Constant(N, R, 1.0);
    const Eigen::MatrixXd F = random_matrix(rng, T, R);
    const Eigen::MatrixXd Y = L * F.transpose() + chol * random_matrix(rng, N, T);
    const LocalFactorEstimate est = estimate_local_pca(testing::make_panel(Y), T / 2, h, R);
    const ResidualCovariance rc =
        apply_threshold(residual_moments(est.residuals), ThresholdConfig::with_default_grid(0.2), rate_delta(N, T, h));
    const Eigen::MatrixXi found = (rc.thresholded.array() != 0.0).cast<int>();
    disagreement += static_cast<double>((found - truth).cwiseAbs().sum()) / (N * N);
  }
  CHECK(disagreement / reps <= 0.05);
}
