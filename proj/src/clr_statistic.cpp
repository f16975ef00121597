#include "clr/clr_statistic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "clr/errors.hpp"

namespace clr {

namespace {

// Relative size of ||M_Z r|| below which the residual counts as degenerate.
constexpr double kDegenerateResidual = 1e-12;

void check_beta(const IVDataset& ds, const Eigen::VectorXd& beta) {
  if (beta.size() != ds.m()) {
    throw InputError("beta0 has length " + std::to_string(beta.size()) + ", expected m = " +
                     std::to_string(ds.m()));
  }
  if (!beta.allFinite()) throw InputError("non-finite entry in beta0");
}

// M_Z-projected residual; throws if it vanishes relative to the raw residual.
Eigen::VectorXd annihilated_residual(const Eigen::VectorXd& r, const ProjectionBasis& basis) {
  Eigen::VectorXd mr = basis.annihilate(r);
  const double raw = r.norm();
  if (!(raw > 0.0) || mr.norm() <= kDegenerateResidual * raw) {
    throw NumericalError("degenerate residual: M_Z (y - X beta0) is numerically zero");
  }
  return mr;
}

double clamp_nonnegative(double value, double scale, const char* what) {
  if (value >= 0.0) return value;
  if (value >= -kClampTolerance * std::max(1.0, scale)) return 0.0;
  throw NumericalError(std::string(what) + " is negative beyond round-off: " +
                       std::to_string(value));
}

}  // namespace

EigenSpectrum make_spectrum(Eigen::VectorXd lambdas, int k, int m) {
  if (m < 1 || k < m) throw InputError("spectrum needs k >= m >= 1");
  if (lambdas.size() != m) throw InputError("spectrum must have length m");
  if (!lambdas.allFinite()) throw InputError("non-finite eigenvalue in spectrum");
  std::sort(lambdas.data(), lambdas.data() + lambdas.size());
  for (Eigen::Index i = 0; i < lambdas.size(); ++i) {
    if (lambdas(i) < 0.0) {
      if (lambdas(i) < -kClampTolerance) {
        throw NumericalError("negative eigenvalue " + std::to_string(lambdas(i)));
      }
      lambdas(i) = 0.0;
    }
  }
  return EigenSpectrum{std::move(lambdas), k, m};
}

PencilEigen solve_definite_pencil(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::LLT<Eigen::MatrixXd> llt(b);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("pencil matrix is not positive definite");
  }
  const auto l = llt.matrixL();
  // C = L^{-1} A L^{-T}
  Eigen::MatrixXd c = l.solve(a);
  c = l.solve(c.transpose()).transpose();
  c = 0.5 * (c + c.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
  if (eig.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
  Eigen::MatrixXd vectors = llt.matrixU().solve(eig.eigenvectors());
  return PencilEigen{eig.eigenvalues(), std::move(vectors)};
}

ProjectionBasis projection_basis(const IVDataset& ds) {
  const Eigen::Index n = ds.n(), k = ds.k();
  if (k < 1 || n <= k) throw InputError("n <= k: need more observations than instruments");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(ds.Z);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(r);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(k - 1) / sv(0) < kRankTolerance) {
    throw InputError("instrument matrix rank-deficient");
  }
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
  return ProjectionBasis(std::move(q));
}

Eigen::MatrixXd tilde_x(const IVDataset& ds, const Eigen::VectorXd& beta0) {
  return tilde_x(ds, projection_basis(ds), beta0);
}

Eigen::MatrixXd tilde_x(const IVDataset& ds, const ProjectionBasis& basis,
                        const Eigen::VectorXd& beta0) {
  check_beta(ds, beta0);
  const Eigen::VectorXd r = ds.y - ds.X * beta0;
  const Eigen::VectorXd mr = annihilated_residual(r, basis);
  const Eigen::RowVectorXd coef = (mr.transpose() * ds.X) / mr.squaredNorm();
  return ds.X - r * coef;
}

double anderson_rubin(const IVDataset& ds, const ProjectionBasis& basis,
                      const Eigen::VectorXd& beta) {
  check_beta(ds, beta);
  const Eigen::VectorXd r = ds.y - ds.X * beta;
  const Eigen::VectorXd qr = basis.q().transpose() * r;
  const Eigen::VectorXd mr = annihilated_residual(r, basis);
  return static_cast<double>(ds.n() - ds.k()) * qr.squaredNorm() / mr.squaredNorm();
}

namespace {

struct JointPencil {
  Eigen::MatrixXd proj;  // (y X)^T P_Z (y X)
  Eigen::MatrixXd resid;  // (y X)^T M_Z (y X)
};

JointPencil joint_pencil(const IVDataset& ds, const ProjectionBasis& basis) {
  Eigen::MatrixXd w(ds.n(), 1 + ds.m());
  w.col(0) = ds.y;
  w.rightCols(ds.m()) = ds.X;
  const Eigen::MatrixXd qw = basis.q().transpose() * w;
  const Eigen::MatrixXd mw = w - basis.q() * qw;
  return JointPencil{qw.transpose() * qw, mw.transpose() * mw};
}

}  // namespace

double liml_minimum(const IVDataset& ds, const ProjectionBasis& basis) {
  const auto pencil = joint_pencil(ds, basis);
  const PencilEigen eig = solve_definite_pencil(pencil.proj, pencil.resid);
  const double scale = static_cast<double>(ds.n() - ds.k());
  return scale * clamp_nonnegative(eig.values(0), eig.values.cwiseAbs().maxCoeff(),
                                   "smallest pencil eigenvalue");
}

Eigen::VectorXd liml_estimate(const IVDataset& ds) {
  return liml_estimate(ds, projection_basis(ds));
}

Eigen::VectorXd liml_estimate(const IVDataset& ds, const ProjectionBasis& basis) {
  const auto pencil = joint_pencil(ds, basis);
  const PencilEigen eig = solve_definite_pencil(pencil.proj, pencil.resid);
  // The minimizing direction (1, -b) is the eigenvector of the smallest value.
  const Eigen::VectorXd v = eig.vectors.col(0);
  if (std::abs(v(0)) <= 1e-14 * v.norm()) {
    throw NumericalError("LIML estimate is at infinity (eigenvector has zero y-component)");
  }
  return -v.tail(ds.m()) / v(0);
}

double lr_statistic(const IVDataset& ds, const Eigen::VectorXd& beta0) {
  return lr_statistic(ds, projection_basis(ds), beta0);
}

double lr_statistic(const IVDataset& ds, const ProjectionBasis& basis,
                    const Eigen::VectorXd& beta0) {
  const double ar = anderson_rubin(ds, basis, beta0);
  const double minimum = liml_minimum(ds, basis);
  return clamp_nonnegative(ar - minimum, ar, "likelihood-ratio statistic");
}

EigenSpectrum conditioning_eigenvalues(const IVDataset& ds, const Eigen::VectorXd& beta0) {
  return conditioning_eigenvalues(ds, projection_basis(ds), beta0);
}

EigenSpectrum conditioning_eigenvalues(const IVDataset& ds, const ProjectionBasis& basis,
                                       const Eigen::VectorXd& beta0) {
  const Eigen::MatrixXd xt = tilde_x(ds, basis, beta0);
  const Eigen::MatrixXd qx = basis.q().transpose() * xt;
  const Eigen::MatrixXd mx = xt - basis.q() * qx;
  const Eigen::MatrixXd resid = mx.transpose() * mx;
  Eigen::LLT<Eigen::MatrixXd> check(resid);
  if (check.info() != Eigen::Success) {
    throw NumericalError("X~^T M_Z X~ is singular");
  }
  const PencilEigen eig = solve_definite_pencil(qx.transpose() * qx, resid);
  const double scale = static_cast<double>(ds.n() - ds.k());
  return make_spectrum(scale * eig.values, static_cast<int>(ds.k()), static_cast<int>(ds.m()));
}

}  // namespace clr
