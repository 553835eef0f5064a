#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <unistd.h>

#include "tvcov/panel_io.hpp"

namespace testing {

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) M(i, j) = z(rng);
  return M;
}

inline Eigen::MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index n, double ridge = 0.5) {
  const Eigen::MatrixXd A = random_matrix(rng, n, n);
  return A * A.transpose() / static_cast<double>(n) + ridge * Eigen::MatrixXd::Identity(n, n);
}

inline double rel_fro(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) { return (A - B).norm() / B.norm(); }

//! Per-test scratch directory, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("tvcov_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline tvcov::PanelData make_panel(const Eigen::MatrixXd& Y) {
  tvcov::PanelData p;
  p.values = Y;
  for (Eigen::Index i = 0; i < Y.rows(); ++i) p.entity_ids.push_back("e" + std::to_string(i + 1));
  for (Eigen::Index t = 0; t < Y.cols(); ++t) p.period_ids.push_back("t" + std::to_string(t + 1));
  return p;
}

//! Low-rank-plus-noise panel with R factors.
inline tvcov::PanelData factor_panel(std::mt19937_64& rng, int N, int T, int R, double noise = 1.0) {
  const Eigen::MatrixXd L = random_matrix(rng, N, R) + Eigen::MatrixXd::Constant(N, R, 0.5);
  const Eigen::MatrixXd F = random_matrix(rng, T, R);
  return make_panel(L * F.transpose() + noise * random_matrix(rng, N, T));
}

inline tvcov::CharacteristicsPanel random_chars(std::mt19937_64& rng, int N, int T, int d) {
  tvcov::CharacteristicsPanel c;
  for (int l = 0; l < d; ++l) {
    c.values.push_back(random_matrix(rng, N, T));
    c.names.push_back("x" + std::to_string(l + 1));
  }
  for (int i = 0; i < N; ++i) c.entity_ids.push_back("e" + std::to_string(i + 1));
  for (int t = 0; t < T; ++t) c.period_ids.push_back("t" + std::to_string(t + 1));
  return c;
}

}  // namespace testing
