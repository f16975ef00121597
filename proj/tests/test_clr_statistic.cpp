#include <doctest.h>

#include <random>

#include "clr/clr_statistic.hpp"
#include "clr/errors.hpp"
#include "clr/simulation.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace clr;
using clr::testing::rel_diff;

namespace {

double max_rel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) d = std::max(d, rel_diff(a(i), b(i)));
  return d;
}

Eigen::VectorXd random_beta(int m, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd b(m);
  for (int j = 0; j < m; ++j) b(j) = nd(rng);
  return b;
}

Eigen::MatrixXd random_invertible(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd a(d, d);
  for (;;) {
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a(i, j) = nd(rng);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const auto& s = svd.singularValues();
    if (s(d - 1) / s(0) > 0.05) return a;
  }
}

}  // namespace

TEST_CASE("projection_basis") {
  SUBCASE("identity stacked over zeros") {
    const int n = 12, k = 4;
    IVDataset ds{Eigen::VectorXd::Ones(n), Eigen::MatrixXd::Ones(n, 1),
                 Eigen::MatrixXd::Zero(n, k)};
    ds.Z.topRows(k).setIdentity();
    const ProjectionBasis basis = projection_basis(ds);
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(n, 1.0, 12.0);
    const Eigen::VectorXd pv = basis.project(v);
    CHECK((pv.head(k) - v.head(k)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(pv.tail(n - k).cwiseAbs().maxCoeff() < 1e-14);
    // Q spans the same space: Q Q^T equals the coordinate projector.
    const Eigen::MatrixXd qqt = basis.q() * basis.q().transpose();
    CHECK((qqt.topLeftCorner(k, k) - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("random Gaussian Z is orthonormalized") {
    std::mt19937_64 rng(1);
    const IVDataset ds = oracle::random_dataset(50, 5, 1, rng);
    const ProjectionBasis basis = projection_basis(ds);
    const Eigen::MatrixXd gram = basis.q().transpose() * basis.q();
    CHECK((gram - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((basis.project(ds.Z) - ds.Z).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(basis.annihilate(ds.Z).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("duplicated column") {
    std::mt19937_64 rng(2);
    IVDataset ds = oracle::random_dataset(50, 5, 1, rng);
    ds.Z.col(4) = ds.Z.col(2);
    CHECK_THROWS_AS(projection_basis(ds), InputError);
  }
}

TEST_CASE("tilde_x") {
  std::mt19937_64 rng(3);
  SUBCASE("residual orthogonal to M_Z X leaves X unchanged") {
    IVDataset ds = oracle::random_dataset(80, 4, 2, rng);
    const ProjectionBasis basis = projection_basis(ds);
    std::normal_distribution<double> nd;
    Eigen::VectorXd u(80), w(80);
    for (int i = 0; i < 80; ++i) {
      u(i) = nd(rng);
      w(i) = nd(rng);
    }
    const Eigen::MatrixXd mx = basis.annihilate(ds.X);
    Eigen::VectorXd e = basis.annihilate(w);
    e -= mx * (mx.transpose() * mx).ldlt().solve(mx.transpose() * e);
    const Eigen::VectorXd beta0(Eigen::Vector2d(0.3, -1.2));
    ds.y = ds.X * beta0 + basis.project(u) + e;
    const Eigen::MatrixXd xt = tilde_x(ds, beta0);
    CHECK((xt - ds.X).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("beta0 = 0 and y = X1: orthogonality post-condition") {
    IVDataset ds = oracle::random_dataset(60, 5, 2, rng);
    ds.y = ds.X.col(0);
    const Eigen::VectorXd beta0 = Eigen::VectorXd::Zero(2);
    const ProjectionBasis basis = projection_basis(ds);
    const Eigen::MatrixXd xt = tilde_x(ds, basis, beta0);
    const Eigen::VectorXd mr = basis.annihilate(ds.y);
    const Eigen::RowVectorXd inner = mr.transpose() * xt;
    CHECK(inner.cwiseAbs().maxCoeff() < 1e-8 * mr.norm() * xt.norm());
    // First column of X~ is X1 - y * 1 = 0 exactly.
    CHECK(xt.col(0).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("agrees with the explicit-projector construction") {
    const IVDataset ds = oracle::random_dataset(200, 6, 2, rng);
    const Eigen::VectorXd beta0 = random_beta(2, rng);
    const Eigen::MatrixXd fast = tilde_x(ds, beta0);
    const Eigen::MatrixXd brute = oracle::tilde_x(ds, beta0);
    CHECK((fast - brute).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, brute.cwiseAbs().maxCoeff()));
  }
  SUBCASE("degenerate residual") {
    IVDataset ds = oracle::random_dataset(40, 3, 1, rng);
    const Eigen::VectorXd beta0 = Eigen::VectorXd::Constant(1, 0.7);
    ds.y = ds.X * beta0;
    CHECK_THROWS_AS(tilde_x(ds, beta0), NumericalError);
    CHECK_THROWS_AS(lr_statistic(ds, beta0), NumericalError);
  }
  SUBCASE("beta0 of the wrong length") {
    const IVDataset ds = oracle::random_dataset(40, 3, 2, rng);
    CHECK_THROWS_AS(tilde_x(ds, Eigen::VectorXd::Zero(3)), InputError);
  }
}

TEST_CASE("lr_statistic") {
  std::mt19937_64 rng(4);
  SUBCASE("zero at the LIML estimate") {
    const IVDataset ds = oracle::random_dataset(300, 8, 3, rng);
    const Eigen::VectorXd b = liml_estimate(ds);
    CHECK(lr_statistic(ds, b) < 1e-8);
  }
  SUBCASE("m = 1 matches a grid search over b") {
    for (int rep = 0; rep < 5; ++rep) {
      const IVDataset ds = oracle::random_dataset(150, 5, 1, rng, 0.5);
      const oracle::Projectors pr = oracle::explicit_projectors(ds.Z);
      auto ar = [&](double b) { return oracle::ar(ds, pr, Eigen::VectorXd::Constant(1, b)); };
      double best_b = -20.0, best = ar(best_b);
      for (int i = 1; i <= 8000; ++i) {
        const double b = -20.0 + 40.0 * i / 8000.0;
        const double v = ar(b);
        if (v < best) {
          best = v;
          best_b = b;
        }
      }
      // Golden-section refinement on the bracketing cell.
      double lo = best_b - 0.005, hi = best_b + 0.005;
      const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
      for (int it = 0; it < 200; ++it) {
        const double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
        if (ar(c) < ar(d)) hi = d; else lo = c;
      }
      const double min_ar = ar(0.5 * (lo + hi));
      const Eigen::VectorXd beta0 = Eigen::VectorXd::Constant(1, 0.25);
      const double expected = ar(0.25) - min_ar;
      CHECK(std::abs(lr_statistic(ds, beta0) - expected) < 1e-6);
    }
  }
  SUBCASE("n = 1000 dataset under H0 matches explicit projectors") {
    SimConfig cfg;
    cfg.n = 1000;
    cfg.k = 10;
    cfg.m = 2;
    cfg.spectrum = Eigen::Vector2d(5.0, 50.0);
    cfg.cov_eps_v = Eigen::Vector2d(-0.5, 0.0);
    cfg.beta0 = Eigen::Vector2d::Zero();
    RandomStream s(42);
    const IVDataset ds = gen_gaussian_iv(cfg, s);
    const double fast = lr_statistic(ds, cfg.beta0);
    const double brute = oracle::lr(ds, cfg.beta0);
    CHECK(std::abs(fast - brute) < 1e-8 * std::max(1.0, brute));
  }
}

TEST_CASE("conditioning_eigenvalues") {
  std::mt19937_64 rng(5);
  SUBCASE("P_Z X~ = 0 gives a zero spectrum") {
    IVDataset ds = oracle::random_dataset(70, 4, 2, rng);
    const ProjectionBasis basis = projection_basis(ds);
    ds.X = basis.annihilate(ds.X);
    ds.y = basis.annihilate(ds.y);
    const EigenSpectrum s = conditioning_eigenvalues(ds, Eigen::Vector2d(0.1, 0.2));
    CHECK(s.lambdas.cwiseAbs().maxCoeff() < 1e-10);
    CHECK((s.lambdas.array() >= 0.0).all());
  }
  SUBCASE("matches the explicitly formed m x m matrix") {
    const IVDataset ds = oracle::random_dataset(1000, 10, 2, rng);
    const Eigen::VectorXd beta0 = random_beta(2, rng);
    const EigenSpectrum s = conditioning_eigenvalues(ds, beta0);
    CHECK(max_rel(s.lambdas, oracle::conditioning_eigenvalues(ds, beta0)) < 1e-8);
    CHECK(s.k == 10);
    CHECK(s.m == 2);
    CHECK(s.lambdas(0) <= s.lambdas(1));
  }
  SUBCASE("m = 1 equals the direct ratio") {
    const IVDataset ds = oracle::random_dataset(120, 4, 1, rng);
    const Eigen::VectorXd beta0 = Eigen::VectorXd::Constant(1, -0.4);
    const Eigen::MatrixXd xt = tilde_x(ds, beta0);
    const ProjectionBasis basis = projection_basis(ds);
    const double num = basis.project(xt).squaredNorm();
    const double den = basis.annihilate(xt).squaredNorm();
    const double direct = (120.0 - 4.0) * num / den;
    CHECK(rel_diff(conditioning_eigenvalues(ds, beta0).lambdas(0), direct) < 1e-12);
  }
}

TEST_CASE("solve_definite_pencil") {
  Eigen::Matrix3d a, b;
  a << 4, 1, 0, 1, 3, 1, 0, 1, 2;
  b << 2, 0.5, 0, 0.5, 1, 0.2, 0, 0.2, 1.5;
  const PencilEigen pe = solve_definite_pencil(a, b);
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d v = pe.vectors.col(i);
    CHECK((a * v - pe.values(i) * b * v).norm() < 1e-12);
    CHECK(v.dot(b * v) == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(solve_definite_pencil(a, -b), NumericalError);
}

TEST_CASE("make_spectrum sorts and clamps round-off") {
  const EigenSpectrum s = make_spectrum(Eigen::Vector3d(5.0, -1e-10, 2.0), 6, 3);
  CHECK(s.lambdas(0) == 0.0);
  CHECK(s.lambdas(1) == 2.0);
  CHECK(s.lambdas(2) == 5.0);
  CHECK_THROWS_AS(make_spectrum(Eigen::Vector2d(-1e-6, 1.0), 4, 2), NumericalError);
  CHECK_THROWS_AS(make_spectrum(Eigen::Vector2d(1.0, 1.0), 1, 2), InputError);
}

TEST_CASE("property: invariances and non-negativity") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 50; ++t) {
    const int m = 1 + t % 3;
    const int k = m + 1 + t % 5;
    const IVDataset ds = oracle::random_dataset(120 + 3 * t, k, m, rng);
    const Eigen::VectorXd beta0 = random_beta(m, rng);
    const double lr = lr_statistic(ds, beta0);
    const EigenSpectrum s = conditioning_eigenvalues(ds, beta0);
    CHECK(lr >= 0.0);

    // Instrument rotation Z -> Z A.
    IVDataset rot = ds;
    rot.Z = ds.Z * random_invertible(k, rng);
    CHECK(rel_diff(lr_statistic(rot, beta0), lr) < 1e-8);
    CHECK(max_rel(conditioning_eigenvalues(rot, beta0).lambdas, s.lambdas) < 1e-8);

    // Endogenous basis change (X, beta0) -> (X B, B^{-1} beta0).
    const Eigen::MatrixXd b = random_invertible(m, rng);
    IVDataset reb = ds;
    reb.X = ds.X * b;
    const Eigen::VectorXd beta_b = b.lu().solve(beta0);
    CHECK(rel_diff(lr_statistic(reb, beta_b), lr) < 1e-8);
    CHECK(max_rel(conditioning_eigenvalues(reb, beta_b).lambdas, s.lambdas) < 1e-8);

    // (y - X beta0)^T M_Z X~ = 0.
    const ProjectionBasis basis = projection_basis(ds);
    const Eigen::MatrixXd xt = tilde_x(ds, basis, beta0);
    const Eigen::VectorXd mr = basis.annihilate(ds.y - ds.X * beta0);
    CHECK((mr.transpose() * xt).cwiseAbs().maxCoeff() < 1e-8 * mr.norm() * xt.norm());

    // LR vanishes at its minimizer.
    CHECK(lr_statistic(ds, liml_estimate(ds)) < 1e-8 * std::max(1.0, lr));
  }
}
