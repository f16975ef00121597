#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Dense>

namespace clr {

/// Observed instrumental-variables data: outcome y (n), endogenous
/// covariates X (n x m) and instruments Z (n x k).
struct IVDataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  Eigen::MatrixXd Z;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index m() const { return X.cols(); }
  Eigen::Index k() const { return Z.cols(); }
};

/// Parameters of the Gaussian weak-instrument design.
struct SimConfig {
  int n = 1000;
  int k = 10;
  int m = 2;
  Eigen::VectorXd spectrum;   // targets for n * Pi^T Pi (length m)
  Eigen::VectorXd cov_eps_v;  // Cov(eps, V_X) (length m)
  Eigen::VectorXd beta0;      // true coefficient (length m)
  std::uint64_t seed = 0;
  int reps = 1;
  /// Interpret `spectrum` as the eigenvalues of n Omega_{V.eps}^{-1} Pi^T Pi
  /// instead of n Pi^T Pi.
  bool normalize_by_omega = false;

  /// (1+m) x (1+m) error covariance with unit variances.
  Eigen::MatrixXd omega() const;
};

/// Smallest-to-largest singular value ratio below which Z is rank-deficient.
inline constexpr double kRankTolerance = 1e-10;

/// Throws InputError naming the first violated invariant.
void validate(const IVDataset& ds);
void validate(const SimConfig& cfg);

/// Reads a CSV with header columns y, X1..Xm, Z1..Zk (any order; extra
/// columns are an error). Returns a validated dataset.
IVDataset load_csv(const std::filesystem::path& path, int m, int k);

struct CsvDims {
  int m = 0;
  int k = 0;
};
/// Counts the X* and Z* columns of a CSV header.
CsvDims infer_csv_dims(const std::filesystem::path& path);

/// Writes `ds` using the same column convention, with round-trip precision.
void write_csv(const IVDataset& ds, const std::filesystem::path& path);

}  // namespace clr
