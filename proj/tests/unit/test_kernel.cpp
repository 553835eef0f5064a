#include <doctest.h>

#include <cmath>

#include "tvcov/errors.hpp"
#include "tvcov/kernel.hpp"

using namespace tvcov;

TEST_CASE("epanechnikov values") {
  CHECK(epanechnikov(0.0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(epanechnikov(1.0) == 0.0);
  CHECK(epanechnikov(-1.0) == 0.0);
  CHECK(epanechnikov(0.5) == doctest::Approx(0.5625).epsilon(1e-15));
  CHECK(epanechnikov(1.5) == 0.0);
}

TEST_CASE("adaptive simpson integrates the kernel") {
  CHECK(adaptive_simpson(epanechnikov, -1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(adaptive_simpson(epanechnikov, 0.0, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  // 0.75 (u - u^3/3) from -0.5 to 1
  const double expected = 0.75 * ((1.0 - 1.0 / 3.0) - (-0.5 + 0.125 / 3.0));
  CHECK(adaptive_simpson(epanechnikov, -0.5, 1.0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("interior anchor weights average to one") {
  const KernelWeights w = boundary_weights(100, 50, 0.2);
  CHECK(w.boundary_flag == BoundaryFlag::interior);
  CHECK(w.mean() >= 0.99);
  CHECK(w.mean() <= 1.01);
}

TEST_CASE("boundary anchors are renormalised") {
  const KernelWeights left = boundary_weights(100, 1, 0.2);
  CHECK(left.boundary_flag == BoundaryFlag::left_boundary);
  CHECK(left.mean() >= 0.99);
  CHECK(left.mean() <= 1.01);
  CHECK(left.mean() == doctest::Approx(0.9994051160023796).epsilon(1e-9));

  const KernelWeights right = boundary_weights(100, 100, 0.2);
  CHECK(right.boundary_flag == BoundaryFlag::right_boundary);
  CHECK(right.mean() == doctest::Approx(0.9994051160023796).epsilon(1e-9));
}

TEST_CASE("weights vanish outside the kernel support") {
  for (int T : {40, 100, 151}) {
    for (double h : {0.05, 0.1, 0.3}) {
      if (T * h < 2.0) continue;
      for (int r : {1, T / 3, T / 2, T}) {
        const KernelWeights w = boundary_weights(T, r, h);
        for (int t = 1; t <= T; ++t) {
          CHECK(w.weights(t - 1) >= 0.0);
          CHECK(std::isfinite(w.weights(t - 1)));
          if (std::abs(t - r) > T * h) CHECK(w.weights(t - 1) == 0.0);
        }
      }
    }
  }
}

TEST_CASE("mean stays near one at every anchor") {
  for (int T : {60, 151, 200}) {
    for (double h : {0.05, 0.1, 0.2, 0.3}) {
      if (T * h < 2.0) continue;
      for (int r = 1; r <= T; ++r) {
        const KernelWeights w = boundary_weights(T, r, h);
        CHECK(std::abs(w.mean() - 1.0) <= 2.0 / (T * h));
        if (w.boundary_flag == BoundaryFlag::interior && T >= 200) CHECK(std::abs(w.mean() - 1.0) <= 0.01);
      }
    }
  }
}

TEST_CASE("branch convention at r = ceil(T h)") {
  // T h = 20.5: left branch for r <= 20, interior from 21.
  CHECK(boundary_weights(205, 20, 0.1).boundary_flag == BoundaryFlag::left_boundary);
  CHECK(boundary_weights(205, 21, 0.1).boundary_flag == BoundaryFlag::interior);
  CHECK(boundary_weights(205, 185, 0.1).boundary_flag == BoundaryFlag::interior);
  CHECK(boundary_weights(205, 186, 0.1).boundary_flag == BoundaryFlag::right_boundary);
}

TEST_CASE("mirror anchors have reversed weights") {
  const int T = 120;
  const double h = 0.15;
  for (int r : {1, 5, 18, 30, 60}) {
    const KernelWeights a = boundary_weights(T, r, h);
    const KernelWeights b = boundary_weights(T, T + 1 - r, h);
    for (int t = 0; t < T; ++t) CHECK(a.weights(t) == doctest::Approx(b.weights(T - 1 - t)).epsilon(1e-12));
  }
}

TEST_CASE("support grows with h") {
  const int T = 150;
  for (int r : {1, 40, 75}) {
    double prev = 0.0;
    for (double h : {0.05, 0.1, 0.2, 0.4}) {
      const KernelWeights w = boundary_weights(T, r, h);
      const double count = (w.weights.array() > 0.0).count();
      CHECK(count >= prev);
      prev = count;
    }
  }
}

TEST_CASE("invalid bandwidths are rejected") {
  CHECK_THROWS_AS(boundary_weights(100, 1, 0.0), ParameterError);
  CHECK_THROWS_AS(boundary_weights(100, 1, 1.0), ParameterError);
  CHECK_THROWS_AS(boundary_weights(100, 1, 0.01), ParameterError);
  CHECK_THROWS_AS(boundary_weights(100, 0, 0.1), ParameterError);
  CHECK_THROWS_AS(boundary_weights(100, 101, 0.1), ParameterError);
}

TEST_CASE("interior_region values") {
  CHECK(interior_region(200, 0.1) == std::pair<int, int>{20, 180});
  CHECK(interior_region(151, 0.1) == std::pair<int, int>{15, 136});
  CHECK(interior_region(100, 0.5) == std::pair<int, int>{50, 50});
}

TEST_CASE("uniform weights are all ones") {
  const KernelWeights w = uniform_weights(7, 7);
  CHECK(w.weights == Eigen::VectorXd::Ones(7));
  CHECK(std::isinf(w.bandwidth));
  CHECK(to_string(BoundaryFlag::left_boundary) == "left-boundary");
  CHECK(to_string(BoundaryFlag::right_boundary) == "right-boundary");
  CHECK(to_string(BoundaryFlag::interior) == "interior");
}
