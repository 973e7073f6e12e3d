#include "nls/sampling.hpp"

#include <cmath>

namespace nls {

SampleBox SampleBox::uniform(std::size_t dim, double lo, double hi) {
  const auto k = static_cast<Eigen::Index>(dim);
  return {Vec::Constant(k, lo), Vec::Constant(k, hi)};
}

double Sampler::unit() {
  // 53 high bits; std::uniform_real_distribution is implementation defined
  return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
}

Vec Sampler::point(const SampleBox& box) {
  Vec p(box.lo.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = uniform(box.lo[i], box.hi[i]);
  return p;
}

std::vector<Vec> sample_points(const SampleBox& box, std::size_t count, std::uint64_t seed) {
  if (box.lo.size() != box.hi.size()) throw InputError("sample box bounds differ in size");
  for (Eigen::Index i = 0; i < box.lo.size(); ++i) {
    if (!(box.lo[i] <= box.hi[i])) throw InputError("sample box has lo > hi");
  }
  Sampler s(seed);
  std::vector<Vec> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(s.point(box));
  return out;
}

ResidualSummary summarize(const std::vector<Outcome<double>>& outcomes) {
  ResidualSummary r;
  for (const auto& o : outcomes) {
    if (o.error) std::rethrow_exception(o.error);
  }
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    if (!o.value) {
      ++r.skipped;
      continue;
    }
    ++r.evaluated;
    const double v = *o.value;
    // NaN must not hide: treat it as an infinite residual
    const double vv = std::isnan(v) ? INFINITY : v;
    if (r.evaluated == 1 || vv > r.max) {
      r.max = vv;
      r.argmax = i;
    }
  }
  if (r.evaluated == 0) throw DomainError("no admissible sample points");
  return r;
}

}  // namespace nls
