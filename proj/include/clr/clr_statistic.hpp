#pragma once

#include <Eigen/Dense>

#include "clr/model_data.hpp"

namespace clr {

/// Orthonormal basis of span(Z). Applies P_Z and M_Z in O(nk) without ever
/// forming an n x n projector.
class ProjectionBasis {
 public:
  explicit ProjectionBasis(Eigen::MatrixXd q) : q_(std::move(q)) {}

  const Eigen::MatrixXd& q() const { return q_; }

  Eigen::MatrixXd project(const Eigen::MatrixXd& v) const { return q_ * (q_.transpose() * v); }
  Eigen::MatrixXd annihilate(const Eigen::MatrixXd& v) const { return v - project(v); }

 private:
  Eigen::MatrixXd q_;
};

/// Conditioning eigenvalues sorted ascending, with the problem dimensions.
struct EigenSpectrum {
  Eigen::VectorXd lambdas;
  int k = 0;
  int m = 0;

  double smallest() const { return lambdas(0); }
};

/// Eigenvalues in [-kClampTolerance, 0) are treated as round-off and set to 0.
inline constexpr double kClampTolerance = 1e-8;

/// Builds a spectrum after checking k >= m, length m, sorting and clamping.
EigenSpectrum make_spectrum(Eigen::VectorXd lambdas, int k, int m);

/// Eigenvalues (ascending) and eigenvectors of the definite pencil (A, B),
/// B positive definite, via Cholesky whitening B = L L^T and a symmetric
/// eigensolve of L^{-1} A L^{-T}.
struct PencilEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;  // columns satisfy A v = value * B v, v^T B v = 1
};
PencilEigen solve_definite_pencil(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Throws InputError if Z is rank deficient.
ProjectionBasis projection_basis(const IVDataset& ds);

/// X - r (r^T M_Z X) / (r^T M_Z r) with r = y - X beta0.
Eigen::MatrixXd tilde_x(const IVDataset& ds, const Eigen::VectorXd& beta0);
Eigen::MatrixXd tilde_x(const IVDataset& ds, const ProjectionBasis& basis,
                        const Eigen::VectorXd& beta0);

/// Anderson-Rubin statistic (n-k) r^T P_Z r / r^T M_Z r.
double anderson_rubin(const IVDataset& ds, const ProjectionBasis& basis,
                      const Eigen::VectorXd& beta);

/// (n-k) min_b AR(b)/(n-k): the smallest eigenvalue of the (m+1)-dimensional
/// pencil of P_Z and M_Z Gram matrices of (y X), scaled by (n-k).
double liml_minimum(const IVDataset& ds, const ProjectionBasis& basis);

/// The minimizer of the Anderson-Rubin statistic (the LIML estimate).
Eigen::VectorXd liml_estimate(const IVDataset& ds);
Eigen::VectorXd liml_estimate(const IVDataset& ds, const ProjectionBasis& basis);

/// LR(beta0) = AR(beta0) - min_b AR(b), clamped at zero for round-off.
double lr_statistic(const IVDataset& ds, const Eigen::VectorXd& beta0);
double lr_statistic(const IVDataset& ds, const ProjectionBasis& basis,
                    const Eigen::VectorXd& beta0);

/// Eigenvalues of (n-k) [X~^T M_Z X~]^{-1} X~^T P_Z X~ at beta0.
EigenSpectrum conditioning_eigenvalues(const IVDataset& ds, const Eigen::VectorXd& beta0);
EigenSpectrum conditioning_eigenvalues(const IVDataset& ds, const ProjectionBasis& basis,
                                       const Eigen::VectorXd& beta0);

}  // namespace clr
