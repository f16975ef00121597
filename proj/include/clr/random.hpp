#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>

namespace clr {

using RandomStream = std::mt19937_64;

/// Deterministically derives an independent substream seed from a root seed
/// and a path of indices (worker, grid point, replication, ...). Uses
/// SplitMix64 finalization at every step.
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path);

inline RandomStream make_stream(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  return RandomStream(derive_seed(root, path));
}

/// Chi-square variate with `dof` degrees of freedom as Gamma(dof/2, scale 2).
/// `dof == 0` yields the point mass at zero.
class ChiSquareSampler {
 public:
  explicit ChiSquareSampler(double dof)
      : dof_(dof), gamma_(dof > 0.0 ? dof / 2.0 : 1.0, 2.0) {}

  double operator()(RandomStream& rng) { return dof_ > 0.0 ? gamma_(rng) : 0.0; }
  double dof() const { return dof_; }

 private:
  double dof_;
  std::gamma_distribution<double> gamma_;
};

/// Number of workers to use when the caller passes 0.
unsigned default_threads();

/// Runs body(i) for i in [0, count) on up to `threads` workers (0 = default).
/// Tasks are claimed dynamically; callers must make each body(i) depend only
/// on i so results do not depend on scheduling.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace clr
