#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "tvcov/local_pca.hpp"

namespace tvcov {

/// Polynomial sieve design for one cross-section of characteristics.
///
/// Columns: an optional shared intercept, then x_l, x_l^2, ..., x_l^J for each
/// characteristic l, where x_l is standardised to cross-sectional mean 0 and
/// variance 1 (population moments) before expansion.
struct SieveBasis {
  Eigen::MatrixXd matrix;
  int J = 0;
  bool intercept = true;
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;

  int columns() const { return static_cast<int>(matrix.cols()); }
};

SieveBasis build_basis(const Eigen::MatrixXd& chars, int J, bool intercept = true,
                       const std::vector<std::string>& names = {});

//! Default ridge: 1e-8 * trace(Phi'Phi) / columns.
double default_ridge(const SieveBasis& basis);

/// Applies Phi (Phi'Phi + ridge I)^-1 Phi' without forming the N x N projection.
/// The Gram factorisation is computed once and reused across calls.
class SieveProjector {
public:
  explicit SieveProjector(const SieveBasis& basis, std::optional<double> ridge = std::nullopt);

  Eigen::MatrixXd apply(const Eigen::MatrixXd& M) const;
  //! Sieve coefficients (Phi'Phi + ridge I)^-1 Phi' M.
  Eigen::MatrixXd coefficients(const Eigen::MatrixXd& M) const;

  double ridge() const { return ridge_; }
  const SieveBasis& basis() const { return basis_; }

private:
  SieveBasis basis_;
  double ridge_;
  // QR of [Phi; sqrt(ridge) I]: q_ holds the first N rows of Q.
  Eigen::MatrixXd q_;
  Eigen::MatrixXd r_;
};

Eigen::MatrixXd project(const SieveBasis& basis, const Eigen::MatrixXd& M, std::optional<double> ridge = std::nullopt);

struct PpcaOptions {
  int J = 4;
  bool intercept = true;
  std::optional<double> ridge;
};

/// Local projected PCA at anchor r: factors from the top-R eigenvectors of
/// Y^(r)' P_{r-1} Y^(r), loadings G = P_{r-1} Y^(r) F / T. The basis is built
/// from characteristics at period r - 1 (period 1 when r = 1).
LocalFactorEstimate estimate_local_ppca(const PanelData& panel, const CharacteristicsPanel& chars, int r, double h,
                                        int R, const PpcaOptions& options = {});

//! Same estimator for precomputed weights and a prepared projector.
LocalFactorEstimate estimate_local_ppca(const Eigen::MatrixXd& Y, const KernelWeights& w,
                                        const SieveProjector& projector, int R);

//! Period whose characteristics feed the basis at anchor r.
inline int basis_period(int r) { return r > 1 ? r - 1 : 1; }

//! (1/NT) sum_i sum_t (y_it^(r) - phi_i' B f_t)^2 with F holding weighted factors.
double weighted_ls_objective(const Eigen::MatrixXd& Y, const SieveBasis& basis, const Eigen::MatrixXd& B,
                             const Eigen::MatrixXd& F, const KernelWeights& w);

}  // namespace tvcov
