#pragma once

// Seeded sample generation and the per-sample evaluation kernels.
//
// Every residual check maps a function over a list of sample points and
// reduces with max. The parallel kernel writes one slot per index and
// the reduction runs serially in index order, so both kernels produce
// identical results, including which error is reported first.

#include <cstddef>
#include <cstdint>
#include <exception>
#include <optional>
#include <random>
#include <vector>

#include "nls/errors.hpp"
#include "nls/numerics.hpp"

namespace nls {

enum class ExecPolicy { Serial, Parallel };

/// Axis-aligned sampling box; lo and hi have the sample dimension.
struct SampleBox {
  Vec lo, hi;

  static SampleBox uniform(std::size_t dim, double lo = -1.0, double hi = 1.0);
  std::size_t dim() const { return static_cast<std::size_t>(lo.size()); }
};

/// Deterministic uniform sampler (same stream on every platform).
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  double unit();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  Vec point(const SampleBox& box);

 private:
  std::mt19937_64 rng_;
};

std::vector<Vec> sample_points(const SampleBox& box, std::size_t count, std::uint64_t seed);

template <class R>
struct Outcome {
  std::optional<R> value;       // empty when skipped or failed
  std::exception_ptr error;     // set when the evaluation threw a non-domain error
};

/// Maps f over [0, count). DomainError marks a sample as skipped; any other
/// exception is stored for the caller.
template <class R, class F>
std::vector<Outcome<R>> map_samples(std::size_t count, F&& f, ExecPolicy policy) {
  std::vector<Outcome<R>> out(count);
  auto body = [&](std::size_t i) {
    try {
      out[i].value = f(i);
    } catch (const DomainError&) {
    } catch (...) {
      out[i].error = std::current_exception();
    }
  };
  if (policy == ExecPolicy::Parallel) {
    const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < n; ++i) body(static_cast<std::size_t>(i));
  } else {
    for (std::size_t i = 0; i < count; ++i) body(i);
  }
  return out;
}

struct ResidualSummary {
  double max = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
  std::size_t argmax = 0;  // sample index of the maximum
};

/// Rethrows the first stored error in index order, then reduces.
ResidualSummary summarize(const std::vector<Outcome<double>>& outcomes);

/// map_samples + summarize for residual functions. Throws DomainError when
/// no sample was admissible.
template <class F>
ResidualSummary max_residual(std::size_t count, F&& f, ExecPolicy policy = ExecPolicy::Parallel) {
  return summarize(map_samples<double>(count, std::forward<F>(f), policy));
}

}  // namespace nls
