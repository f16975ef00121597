#pragma once

#include <cstdint>
#include <vector>

#include "clr/clr_statistic.hpp"
#include "clr/random.hpp"
#include "clr/secular.hpp"

namespace clr {

inline constexpr int kDefaultPValueDraws = 100'000;
inline constexpr int kDefaultCriticalValueDraws = 200'000;
inline constexpr int kMinPValueDraws = 1000;

/// Draws (q0, q1..qm): q0 ~ chi2(k - m) (identically zero when k = m) and
/// q_i ~ chi2(1), in that order from the stream.
class NullDrawSampler {
 public:
  NullDrawSampler(int k, int m);

  void operator()(RandomStream& rng, NullDraw& out);
  NullDraw operator()(RandomStream& rng);
  /// Draws only q1..qm and sets q0 to the given value.
  void draw_given_q0(RandomStream& rng, double q0, NullDraw& out);

  int k() const { return k_; }
  int m() const { return m_; }

 private:
  int k_;
  int m_;
  ChiSquareSampler q0_;
  ChiSquareSampler q1_;
};

/// sum_i q_i - mu_min for a given draw: the conditional null value.
double exact_null_value(const EigenSpectrum& spectrum, const NullDraw& draw);

/// Single-pole upper-bound value for a given draw, lumping q_1..q_m into one
/// chi2(m) variable.
double bound_null_value(double lambda1, const NullDraw& draw);

/// One draw from the conditional null law given the spectrum.
double sample_null_lr(const EigenSpectrum& spectrum, RandomStream& rng);

/// One draw from the upper-bound law Gamma(k - m, m, lambda1), consuming the
/// stream exactly as sample_null_lr does for the same (k, m).
double sample_gamma_bound(int k, int m, double lambda1, RandomStream& rng);

/// Exact and bound null samples computed from the same underlying draws.
/// Draw j comes from block j / kBlockSize, seeded by derive_seed(seed, {block}),
/// so the samples are independent of the thread count.
struct NullSamples {
  std::vector<double> exact;
  std::vector<double> bound;
};
inline constexpr std::size_t kBlockSize = 4096;
NullSamples simulate_null(const EigenSpectrum& spectrum, int draws, std::uint64_t seed,
                          unsigned threads = 0);

/// As simulate_null, but with q0 held at a realized value and only q1..qm
/// random: the law of the statistic conditional on the spectrum and q0.
NullSamples simulate_null_given_q0(const EigenSpectrum& spectrum, double q0, int draws,
                                   std::uint64_t seed, unsigned threads = 0);

/// Add-one Monte Carlo p-value (1 + #{samples >= lr_obs}) / (1 + draws).
double pvalue_exact(double lr_obs, const EigenSpectrum& spectrum, int draws, std::uint64_t seed,
                    unsigned threads = 0);
double pvalue_bound(double lr_obs, int k, int m, double lambda1, int draws, std::uint64_t seed,
                    unsigned threads = 0);

struct PValuePair {
  double exact = 1.0;
  double bound = 1.0;
};
/// Both p-values from common draws; equal to separate pvalue_exact and
/// pvalue_bound calls with the same seed.
PValuePair pvalues(double lr_obs, const EigenSpectrum& spectrum, int draws, std::uint64_t seed,
                   unsigned threads = 0);

/// The ceil((1 - alpha) N)-th order statistic of N null samples.
double critical_value_exact(double alpha, const EigenSpectrum& spectrum, int draws,
                            std::uint64_t seed, unsigned threads = 0);
double critical_value_bound(double alpha, int k, int m, double lambda1, int draws,
                            std::uint64_t seed, unsigned threads = 0);

/// Nearest-rank-above empirical quantile; reorders `samples`.
double upper_quantile(std::vector<double>& samples, double alpha);

}  // namespace clr
