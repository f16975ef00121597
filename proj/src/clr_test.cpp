#include "clr/clr_test.hpp"

#include "clr/errors.hpp"
#include "clr/null_distribution.hpp"
#include "clr/random.hpp"

namespace clr {

TestResult run_clr_test(const IVDataset& ds, const Eigen::VectorXd& beta0,
                        const TestOptions& options) {
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
  validate(ds);
  const ProjectionBasis basis = projection_basis(ds);

  TestResult result;
  result.alpha = options.alpha;
  result.seed = options.seed;
  result.mc_draws = options.draws;
  result.critical_value_draws =
      options.critical_value_draws > 0 ? options.critical_value_draws : 2 * options.draws;
  result.just_identified = ds.k() == ds.m();
  result.lr = lr_statistic(ds, basis, beta0);
  result.spectrum = conditioning_eigenvalues(ds, basis, beta0);

  const PValuePair p = pvalues(result.lr, result.spectrum, options.draws,
                               derive_seed(options.seed, {0}), options.threads);
  result.pvalue_exact = p.exact;
  result.pvalue_bound = p.bound;

  const std::uint64_t cv_seed = derive_seed(options.seed, {1});
  result.critical_value_exact = critical_value_exact(options.alpha, result.spectrum,
                                                     result.critical_value_draws, cv_seed,
                                                     options.threads);
  result.critical_value_bound =
      critical_value_bound(options.alpha, result.spectrum.k, result.spectrum.m,
                           result.spectrum.smallest(), result.critical_value_draws, cv_seed,
                           options.threads);
  return result;
}

}  // namespace clr
