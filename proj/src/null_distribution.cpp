#include "clr/null_distribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "clr/errors.hpp"

namespace clr {

namespace {

void check_spectrum(const EigenSpectrum& spectrum) {
  if (spectrum.m < 1 || spectrum.k < spectrum.m || spectrum.lambdas.size() != spectrum.m) {
    throw InputError("invalid spectrum dimensions");
  }
  if ((spectrum.lambdas.array() < 0.0).any()) throw InputError("negative eigenvalue in spectrum");
}

void check_pvalue_draws(int draws) {
  if (draws < kMinPValueDraws) {
    throw InputError("p-value needs at least " + std::to_string(kMinPValueDraws) + " draws");
  }
}

void check_quantile_draws(double alpha, int draws) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
  if (static_cast<double>(draws) * std::min(alpha, 1.0 - alpha) < 50.0) {
    throw InputError("insufficient draws for the requested quantile");
  }
}

// Calls visit(index, draw) for every draw, block by block.
template <class Visit>
void for_each_draw(int k, int m, int draws, std::uint64_t seed, unsigned threads, Visit&& visit,
                   std::optional<double> fixed_q0 = std::nullopt) {
  const auto total = static_cast<std::size_t>(draws);
  const std::size_t blocks = (total + kBlockSize - 1) / kBlockSize;
  parallel_for(blocks, threads, [&](std::size_t b) {
    NullDrawSampler sampler(k, m);
    RandomStream rng = make_stream(seed, {b});
    NullDraw draw;
    const std::size_t end = std::min(total, (b + 1) * kBlockSize);
    for (std::size_t j = b * kBlockSize; j < end; ++j) {
      if (fixed_q0) {
        sampler.draw_given_q0(rng, *fixed_q0, draw);
      } else {
        sampler(rng, draw);
      }
      visit(j, draw);
    }
  });
}

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return std::span<const double>(v.data(), static_cast<std::size_t>(v.size()));
}

double add_one(std::size_t exceed, int draws) {
  return (1.0 + static_cast<double>(exceed)) / (1.0 + static_cast<double>(draws));
}

}  // namespace

NullDrawSampler::NullDrawSampler(int k, int m)
    : k_(k), m_(m), q0_(static_cast<double>(k - m)), q1_(1.0) {
  if (m < 1 || k < m) throw InputError("null draws need k >= m >= 1");
}

void NullDrawSampler::operator()(RandomStream& rng, NullDraw& out) {
  out.q0 = q0_(rng);
  if (out.q.size() != m_) out.q.resize(m_);
  for (int i = 0; i < m_; ++i) out.q(i) = q1_(rng);
}

void NullDrawSampler::draw_given_q0(RandomStream& rng, double q0, NullDraw& out) {
  out.q0 = q0;
  if (out.q.size() != m_) out.q.resize(m_);
  for (int i = 0; i < m_; ++i) out.q(i) = q1_(rng);
}

NullDraw NullDrawSampler::operator()(RandomStream& rng) {
  NullDraw draw;
  (*this)(rng, draw);
  return draw;
}

double exact_null_value(const EigenSpectrum& spectrum, const NullDraw& draw) {
  const MuSolveReport r = solve_mu_min(as_span(spectrum.lambdas), draw.q0, as_span(draw.q));
  return std::max(0.0, draw.total() - r.mu_min);
}

double bound_null_value(double lambda1, const NullDraw& draw) {
  return gamma_bound_value(draw.q0, draw.q.sum(), lambda1);
}

double sample_null_lr(const EigenSpectrum& spectrum, RandomStream& rng) {
  check_spectrum(spectrum);
  NullDrawSampler sampler(spectrum.k, spectrum.m);
  return exact_null_value(spectrum, sampler(rng));
}

double sample_gamma_bound(int k, int m, double lambda1, RandomStream& rng) {
  if (!(lambda1 >= 0.0)) throw InputError("lambda1 must be nonnegative");
  NullDrawSampler sampler(k, m);
  return bound_null_value(lambda1, sampler(rng));
}

NullSamples simulate_null(const EigenSpectrum& spectrum, int draws, std::uint64_t seed,
                          unsigned threads) {
  check_spectrum(spectrum);
  if (draws < 1) throw InputError("draws must be positive");
  NullSamples out;
  out.exact.resize(static_cast<std::size_t>(draws));
  out.bound.resize(static_cast<std::size_t>(draws));
  const double lambda1 = spectrum.smallest();
  for_each_draw(spectrum.k, spectrum.m, draws, seed, threads,
                [&](std::size_t j, const NullDraw& d) {
                  out.exact[j] = exact_null_value(spectrum, d);
                  out.bound[j] = bound_null_value(lambda1, d);
                });
  return out;
}

NullSamples simulate_null_given_q0(const EigenSpectrum& spectrum, double q0, int draws,
                                   std::uint64_t seed, unsigned threads) {
  check_spectrum(spectrum);
  if (draws < 1) throw InputError("draws must be positive");
  if (!(q0 >= 0.0)) throw InputError("q0 must be nonnegative");
  NullSamples out;
  out.exact.resize(static_cast<std::size_t>(draws));
  out.bound.resize(static_cast<std::size_t>(draws));
  const double lambda1 = spectrum.smallest();
  for_each_draw(
      spectrum.k, spectrum.m, draws, seed, threads,
      [&](std::size_t j, const NullDraw& d) {
        out.exact[j] = exact_null_value(spectrum, d);
        out.bound[j] = bound_null_value(lambda1, d);
      },
      q0);
  return out;
}

PValuePair pvalues(double lr_obs, const EigenSpectrum& spectrum, int draws, std::uint64_t seed,
                   unsigned threads) {
  check_spectrum(spectrum);
  check_pvalue_draws(draws);
  const double lambda1 = spectrum.smallest();
  const std::size_t blocks = (static_cast<std::size_t>(draws) + kBlockSize - 1) / kBlockSize;
  std::vector<std::size_t> exceed_exact(blocks, 0), exceed_bound(blocks, 0);
  for_each_draw(spectrum.k, spectrum.m, draws, seed, threads,
                [&](std::size_t j, const NullDraw& d) {
                  const std::size_t b = j / kBlockSize;
                  if (exact_null_value(spectrum, d) >= lr_obs) ++exceed_exact[b];
                  if (bound_null_value(lambda1, d) >= lr_obs) ++exceed_bound[b];
                });
  std::size_t ee = 0, eb = 0;
  for (std::size_t b = 0; b < blocks; ++b) {
    ee += exceed_exact[b];
    eb += exceed_bound[b];
  }
  return PValuePair{add_one(ee, draws), add_one(eb, draws)};
}

double pvalue_exact(double lr_obs, const EigenSpectrum& spectrum, int draws, std::uint64_t seed,
                    unsigned threads) {
  check_spectrum(spectrum);
  check_pvalue_draws(draws);
  const std::size_t blocks = (static_cast<std::size_t>(draws) + kBlockSize - 1) / kBlockSize;
  std::vector<std::size_t> exceed(blocks, 0);
  for_each_draw(spectrum.k, spectrum.m, draws, seed, threads,
                [&](std::size_t j, const NullDraw& d) {
                  if (exact_null_value(spectrum, d) >= lr_obs) ++exceed[j / kBlockSize];
                });
  std::size_t total = 0;
  for (auto e : exceed) total += e;
  return add_one(total, draws);
}

double pvalue_bound(double lr_obs, int k, int m, double lambda1, int draws, std::uint64_t seed,
                    unsigned threads) {
  if (!(lambda1 >= 0.0)) throw InputError("lambda1 must be nonnegative");
  check_pvalue_draws(draws);
  const std::size_t blocks = (static_cast<std::size_t>(draws) + kBlockSize - 1) / kBlockSize;
  std::vector<std::size_t> exceed(blocks, 0);
  for_each_draw(k, m, draws, seed, threads, [&](std::size_t j, const NullDraw& d) {
    if (bound_null_value(lambda1, d) >= lr_obs) ++exceed[j / kBlockSize];
  });
  std::size_t total = 0;
  for (auto e : exceed) total += e;
  return add_one(total, draws);
}

double upper_quantile(std::vector<double>& samples, double alpha) {
  if (samples.empty()) throw InputError("quantile of an empty sample");
  const double n = static_cast<double>(samples.size());
  // Guard against (1 - alpha) * n landing a hair above an integer.
  auto rank = static_cast<std::size_t>(std::ceil((1.0 - alpha) * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, samples.size());
  auto nth = samples.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(samples.begin(), nth, samples.end());
  return *nth;
}

double critical_value_exact(double alpha, const EigenSpectrum& spectrum, int draws,
                            std::uint64_t seed, unsigned threads) {
  check_spectrum(spectrum);
  check_quantile_draws(alpha, draws);
  std::vector<double> samples(static_cast<std::size_t>(draws));
  for_each_draw(spectrum.k, spectrum.m, draws, seed, threads,
                [&](std::size_t j, const NullDraw& d) { samples[j] = exact_null_value(spectrum, d); });
  return upper_quantile(samples, alpha);
}

double critical_value_bound(double alpha, int k, int m, double lambda1, int draws,
                            std::uint64_t seed, unsigned threads) {
  if (!(lambda1 >= 0.0)) throw InputError("lambda1 must be nonnegative");
  check_quantile_draws(alpha, draws);
  std::vector<double> samples(static_cast<std::size_t>(draws));
  for_each_draw(k, m, draws, seed, threads,
                [&](std::size_t j, const NullDraw& d) { samples[j] = bound_null_value(lambda1, d); });
  return upper_quantile(samples, alpha);
}

}  // namespace clr
