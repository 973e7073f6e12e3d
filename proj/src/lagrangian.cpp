#include "nls/lagrangian.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nls/errors.hpp"

namespace nls {

namespace {

using Index = Eigen::Index;

// Index layout of L's arguments (x, y, v, w).
struct TmLayout {
  Index n, m;
  Index x() const { return 0; }
  Index y() const { return n; }
  Index v() const { return n + m; }
  Index w() const { return 2 * n + m; }
  Index size() const { return 2 * (n + m); }
};

TmLayout layout(const BundleChart& c) { return {static_cast<Index>(c.n), static_cast<Index>(c.m)}; }

double max_abs(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

Jet2 eval_L(const LagrangianSpec& L, const Vec& x, const Vec& y, const Vec& v, const Vec& w, JetOrder order) {
  const Vec z = concat(x, y, v, w);
  return L.L.eval(as_span(z), order);
}

Vec solve_or_singular(const Mat& a, const Vec& b, const char* what) {
  try {
    return linear_solve({a, b});
  } catch (const SingularHessian&) {
    throw;
  } catch (const SingularMatrix& e) {
    throw SingularHessian(std::string(what) + ": " + e.what());
  }
}

NewtonResult newton_in_w(const LagrangianSpec& L, const Vec& x, const Vec& y, const Vec& v, const Vec& seed,
                         const InduceOptions& opts) {
  const TmLayout ly = layout(L.chart);
  NewtonProblem p;
  p.tol = opts.tol;
  p.max_iter = opts.max_iter;
  p.initial_guess = seed;
  p.residual = [&](const Vec& w) { return Vec(eval_L(L, x, y, v, w, JetOrder::First).gradient.segment(ly.w(), ly.m)); };
  p.jacobian = [&](const Vec& w) {
    return Mat(eval_L(L, x, y, v, w, JetOrder::Second).hessian.block(ly.w(), ly.w(), ly.m, ly.m));
  };
  try {
    return newton_solve(p);
  } catch (const SingularHessian&) {
    throw;
  } catch (const SingularMatrix& e) {
    throw SingularHessian(std::string("fibre Hessian is singular: ") + e.what());
  }
}

SampleBox default_box(const std::optional<SampleBox>& box, std::size_t dim) {
  if (box && box->dim() == dim) return *box;
  return SampleBox::uniform(dim);
}

}  // namespace

void LagrangianSpec::check() const {
  chart.validate();
  if (!L.valid()) throw InputError("Lagrangian is empty");
  if (L.arity() != 2 * (chart.n + chart.m)) throw DimensionMismatch("Lagrangian arity must be 2(n + m)");
}

SodeSpec::SodeSpec(std::size_t dof, Force f, std::string provenance)
    : dof_(dof), f_(std::move(f)), provenance_(std::move(provenance)) {}

Vec SodeSpec::force(const Vec& q, const Vec& u) const {
  if (static_cast<std::size_t>(q.size()) != dof_ || static_cast<std::size_t>(u.size()) != dof_) {
    throw DimensionMismatch("SODE state has the wrong size");
  }
  return f_(q, u);
}

Vec SodeSpec::vector_field(const Vec& state) const {
  const auto k = static_cast<Index>(dof_);
  const Vec q = state.head(k), u = state.tail(k);
  return concat(u, force(q, u));
}

TrajectoryRecord SodeSpec::integrate(const Vec& state0, double t0, double t1, double dt) const {
  IvpProblem p;
  p.state0 = state0;
  p.t0 = t0;
  p.t1 = t1;
  p.dt = dt;
  p.vector_field = [this](double, const Vec& s) { return vector_field(s); };
  return rk4_integrate(p);
}

TrajectoryRecord FirstOrderSystem::integrate(const Vec& state0, double t0, double t1, double dt) const {
  if (static_cast<std::size_t>(state0.size()) != dim) throw DimensionMismatch("initial state has the wrong size");
  IvpProblem p;
  p.state0 = state0;
  p.t0 = t0;
  p.t1 = t1;
  p.dt = dt;
  p.vector_field = [this](double, const Vec& s) { return rhs(s); };
  return rk4_integrate(p);
}

SodeSpec euler_lagrange_sode(const ScalarField& L, std::size_t dof) {
  if (L.arity() != 2 * dof) throw DimensionMismatch("Lagrangian arity must be twice the degrees of freedom");
  const auto k = static_cast<Index>(dof);
  return SodeSpec(
      dof,
      [L, k](const Vec& q, const Vec& u) {
        const Vec z = concat(q, u);
        const Jet2 j = L.eval(as_span(z), JetOrder::Second);
        const Mat huu = j.hessian.block(k, k, k, k);
        const Mat huq = j.hessian.block(k, 0, k, k);
        const Vec rhs = j.gradient.head(k) - huq * u;
        return solve_or_singular(huu, rhs, "velocity Hessian is singular");
      },
      "euler-lagrange");
}

SodeSpec euler_lagrange_sode(const LagrangianSpec& L) {
  L.check();
  return euler_lagrange_sode(L.L, L.chart.n + L.chart.m);
}

double lagrangian_energy(const ScalarField& L, const Vec& state) {
  if (static_cast<std::size_t>(state.size()) != L.arity()) throw DimensionMismatch("state does not match the Lagrangian");
  const Index k = state.size() / 2;
  const Jet2 j = L.eval(as_span(state), JetOrder::First);
  return state.tail(k).dot(j.gradient.tail(k)) - j.value;
}

RegularityReport fibre_regularity(const LagrangianSpec& L, const TangentPointM& at) {
  L.check();
  at.check(L.chart);
  const TmLayout ly = layout(L.chart);
  const Jet2 j = eval_L(L, at.x, at.y, at.v, at.w, JetOrder::Second);
  const Mat hww = j.hessian.block(ly.w(), ly.w(), ly.m, ly.m);
  RegularityReport r;
  r.det = hww.determinant();
  try {
    r.condition = condition_estimate(hww);
  } catch (const SingularMatrix&) {
    r.condition = INFINITY;
  }
  r.regular = r.det != 0.0 && r.condition < 1e14;
  return r;
}

InducedSolve induced_solve(const LagrangianSpec& L, const PullbackPoint& p, const InduceOptions& opts) {
  p.check(L.chart);
  if (opts.continuation_steps < 1) throw InputError("continuation needs at least one step");
  InducedSolve out;
  Vec seed = Vec::Zero(static_cast<Index>(L.chart.m));
  for (int k = 0; k <= opts.continuation_steps; ++k) {
    const bool last = k == opts.continuation_steps;
    const double s = last ? 1.0 : static_cast<double>(k) / opts.continuation_steps;
    const Vec vs = s * p.v;
    try {
      const NewtonResult r = newton_in_w(L, p.x, p.y, vs, seed, opts);
      seed = r.x;
      out.total_iterations += r.iterations;
      if (last) {
        out.final_iterations = r.iterations;
        out.residual = r.residual_norm;
      }
    } catch (const DomainError&) {
      // points on the way (typically v = 0 for non-smooth L) may be inadmissible
      if (last) throw;
    }
  }
  out.w = seed;
  return out;
}

void branch_probe(const LagrangianSpec& L, const InduceOptions& opts) {
  L.check();
  const std::size_t n = L.chart.n, m = L.chart.m;
  const auto pts = sample_points(default_box(opts.probe_box, 2 * n + m), opts.probe_points, opts.probe_seed);
  std::vector<Vec> seeds{Vec::Zero(static_cast<Index>(m))};
  Sampler s(opts.probe_seed ^ 0x9e3779b97f4a7c15ULL);
  while (seeds.size() < 10) seeds.push_back(s.point(SampleBox::uniform(m, -3.0, 3.0)));

  for (const Vec& z : pts) {
    const PullbackPoint p = PullbackPoint::from_flat(L.chart, z);
    Vec root;
    try {
      root = induced_solve(L, p, opts).w;
    } catch (const NumericalError&) {
      continue;
    }
    for (const Vec& seed : seeds) {
      Vec other;
      try {
        other = newton_in_w(L, p.x, p.y, p.v, seed, opts).x;
      } catch (const NumericalError&) {
        continue;
      }
      if (max_abs(other - root) > 1e-6 * (1.0 + max_abs(root))) {
        std::ostringstream msg;
        msg << "dL/dw = 0 has several roots near the sample point (continuation root " << root.transpose()
            << ", other root " << other.transpose() << ")";
        throw BranchAmbiguity(msg.str());
      }
    }
  }
}

namespace {

// Value and IFT gradient of the induced splitting at z = (x, y, v), given w.
std::vector<Jet2> induced_first(const LagrangianSpec& L, std::span<const double> z, const Vec& w, JetOrder order) {
  const TmLayout ly = layout(L.chart);
  const Index k = 2 * ly.n + ly.m;
  std::vector<Jet2> out;
  for (Index a = 0; a < ly.m; ++a) out.push_back(Jet2::constant(w[a], static_cast<std::size_t>(k), order));
  if (order == JetOrder::Value) return out;
  const Vec zz = Eigen::Map<const Vec>(z.data(), k);
  const Vec full = concat(zz, w);
  const Jet2 j = L.L.eval(as_span(full), JetOrder::Second);
  const Mat lww = j.hessian.block(ly.w(), ly.w(), ly.m, ly.m);
  const Mat lwz = j.hessian.block(ly.w(), 0, ly.m, k);
  Mat dh(ly.m, k);
  for (Index c = 0; c < k; ++c) dh.col(c) = -solve_or_singular(lww, lwz.col(c), "fibre Hessian is singular");
  for (Index a = 0; a < ly.m; ++a) out[static_cast<std::size_t>(a)].gradient = dh.row(a).transpose();
  return out;
}

}  // namespace

SplittingSpec induced_splitting(const LagrangianSpec& L, const InduceOptions& opts) {
  L.check();
  if (opts.probe) branch_probe(L, opts);
  const BundleChart c = L.chart;
  auto f = [L, opts](std::span<const double> z, JetOrder order) -> std::vector<Jet2> {
    const PullbackPoint p = PullbackPoint::from_flat(L.chart, Eigen::Map<const Vec>(z.data(), static_cast<Index>(z.size())));
    const Vec w = induced_solve(L, p, opts).w;
    if (order != JetOrder::Second) return induced_first(L, z, w, order);
    // Hessian by central differences of the implicit-function gradient;
    // perturbed solves start from the root found here
    std::vector<Jet2> base = induced_first(L, z, w, JetOrder::First);
    const std::size_t k = z.size();
    std::vector<double> zz(z.begin(), z.end());
    std::vector<Mat> hess(base.size(), Mat::Zero(static_cast<Index>(k), static_cast<Index>(k)));
    auto gradients_at = [&](std::span<const double> q) {
      const PullbackPoint pq = PullbackPoint::from_flat(L.chart, Eigen::Map<const Vec>(q.data(), static_cast<Index>(q.size())));
      const Vec wq = newton_in_w(L, pq.x, pq.y, pq.v, w, opts).x;
      return induced_first(L, q, wq, JetOrder::First);
    };
    for (std::size_t col = 0; col < k; ++col) {
      const double step = 1e-5 * (1.0 + std::abs(z[col]));
      zz[col] = z[col] + step;
      const auto plus = gradients_at(zz);
      zz[col] = z[col] - step;
      const auto minus = gradients_at(zz);
      zz[col] = z[col];
      for (std::size_t a = 0; a < base.size(); ++a) {
        hess[a].col(static_cast<Index>(col)) = (plus[a].gradient - minus[a].gradient) / (2.0 * step);
      }
    }
    for (std::size_t a = 0; a < base.size(); ++a) base[a].hessian = 0.5 * (hess[a] + hess[a].transpose());
    return base;
  };
  std::vector<std::string> labels;
  for (std::size_t a = 0; a < c.m; ++a) labels.push_back("induced h" + std::to_string(a + 1));
  return SplittingSpec(c, f, L.smooth_at_zero, SplittingProvenance::InducedByLagrangian, labels);
}

namespace {

template <class F>
ResidualSummary over_pullback_samples(const BundleChart& c, const SampleOptions& opts, F&& f) {
  const auto pts = sample_points(default_box(opts.box, 2 * c.n + c.m), opts.samples, opts.seed);
  return max_residual(
      pts.size(), [&](std::size_t i) { return f(PullbackPoint::from_flat(c, pts[i])); }, opts.policy);
}

}  // namespace

ResidualSummary defining_relation_check(const LagrangianSpec& L, const SplittingSpec& h, const SampleOptions& opts) {
  L.check();
  const TmLayout ly = layout(L.chart);
  return over_pullback_samples(L.chart, opts, [&](const PullbackPoint& p) {
    const Vec w = h.value(p);
    return max_abs(eval_L(L, p.x, p.y, p.v, w, JetOrder::First).gradient.segment(ly.w(), ly.m));
  });
}

ResidualSummary symmetry_condition_check(const LagrangianSpec& L, const SplittingSpec& h, const SampleOptions& opts) {
  L.check();
  const TmLayout ly = layout(L.chart);
  return over_pullback_samples(L.chart, opts, [&](const PullbackPoint& p) {
    const Vec w = h.value(p);
    return max_abs(eval_L(L, p.x, p.y, p.v, w, JetOrder::First).gradient.segment(ly.y(), ly.m));
  });
}

ResidualSummary tangency_check(const LagrangianSpec& L, const SplittingSpec& h, const SampleOptions& opts) {
  L.check();
  const TmLayout ly = layout(L.chart);
  const SodeSpec gamma = euler_lagrange_sode(L);
  return over_pullback_samples(L.chart, opts, [&](const PullbackPoint& p) {
    const Vec w = h.value(p);
    const Vec q = concat(p.x, p.y), u = concat(p.v, w);
    const Vec f = gamma.force(q, u);
    const Jet2 j = eval_L(L, p.x, p.y, p.v, w, JetOrder::Second);
    const Vec tangent = concat(u, f);
    double r = 0.0;
    for (Index a = 0; a < ly.m; ++a) r = std::max(r, std::abs(j.hessian.row(ly.w() + a).dot(tangent)));
    return r;
  });
}

SubducedLagrangian subduce(const LagrangianSpec& L, const SplittingSpec& h, const SampleOptions& opts,
                           std::optional<Vec> y_ref) {
  L.check();
  const BundleChart c = L.chart;
  const TmLayout ly = layout(c);
  const auto pts = sample_points(default_box(opts.box, 2 * c.n + c.m), opts.samples, opts.seed);
  SubducedLagrangian out;
  out.y_ref = y_ref ? *y_ref : PullbackPoint::from_flat(c, pts.front()).y;
  if (out.y_ref.size() != ly.m) throw DimensionMismatch("y_ref must have size m");
  const Vec yr = out.y_ref;

  auto l_on_h = [&](const Vec& x, const Vec& y, const Vec& v) {
    return eval_L(L, x, y, v, h.value({x, y, v}), JetOrder::Value).value;
  };
  const ResidualSummary dep = max_residual(
      pts.size(),
      [&](std::size_t i) {
        const PullbackPoint p = PullbackPoint::from_flat(c, pts[i]);
        return std::abs(l_on_h(p.x, p.y, p.v) - l_on_h(p.x, yr, p.v));
      },
      opts.policy);
  out.y_independence = dep.max;
  if (dep.max > 1e-6) {
    std::ostringstream msg;
    msg << "L o h depends on the fibre coordinates (max change " << dep.max << ")";
    throw NotSubducible(msg.str());
  }

  const std::size_t n = c.n;
  out.Lbar = ScalarField(
      2 * n,
      [L, h, yr, ly, n](std::span<const double> z, JetOrder order) {
        const Index ni = ly.n;
        const Vec x = Eigen::Map<const Vec>(z.data(), ni);
        const Vec v = Eigen::Map<const Vec>(z.data() + ni, ni);
        const PullbackPoint p{x, yr, v};
        const auto hj = h.eval(p, order == JetOrder::Value ? JetOrder::Value : JetOrder::First);
        Vec w(ly.m);
        for (Index a = 0; a < ly.m; ++a) w[a] = hj[static_cast<std::size_t>(a)].value;
        const Jet2 j = eval_L(L, x, yr, v, w, order);
        Jet2 out = Jet2::constant(j.value, 2 * n, order);
        if (order == JetOrder::Value) return out;
        // d(x, y, v, w) / d(x, v)
        Mat J = Mat::Zero(ly.size(), 2 * ni);
        J.block(ly.x(), 0, ni, ni).setIdentity();
        J.block(ly.v(), ni, ni, ni).setIdentity();
        for (Index a = 0; a < ly.m; ++a) {
          const Vec& g = hj[static_cast<std::size_t>(a)].gradient;
          J.block(ly.w() + a, 0, 1, ni) = g.segment(0, ni).transpose();
          J.block(ly.w() + a, ni, 1, ni) = g.segment(ly.v(), ni).transpose();
        }
        out.gradient = J.transpose() * j.gradient;
        if (order == JetOrder::Second) {
          Mat H = J.transpose() * j.hessian * J;
          // L_w vanishes on the horizontal manifold up to the Newton
          // tolerance; the second-order term of h matters only off it
          const Vec lw = j.gradient.segment(ly.w(), ly.m);
          if (lw.cwiseAbs().maxCoeff() > 1e-12) {
            const auto hj2 = h.eval(p, JetOrder::Second);
            Mat sel = Mat::Zero(2 * n + ly.m, 2 * ni);
            sel.block(0, 0, ni, ni).setIdentity();
            sel.block(ly.v(), ni, ni, ni).setIdentity();
            for (Index a = 0; a < ly.m; ++a) H += lw[a] * (sel.transpose() * hj2[static_cast<std::size_t>(a)].hessian * sel);
          }
          out.hessian = 0.5 * (H + H.transpose());
        }
        return out;
      },
      "subduced Lagrangian");
  return out;
}

ProjectionReport projection_verify(const LagrangianSpec& L, const SplittingSpec& h, const SubducedLagrangian& sub,
                                   const Vec& x0, const Vec& v0, const Vec& y0, double T, double dt,
                                   std::optional<Vec> w0) {
  L.check();
  const TmLayout ly = layout(L.chart);
  const Vec w_start = w0 ? *w0 : h.value({x0, y0, v0});
  const SodeSpec full = euler_lagrange_sode(L);
  const SodeSpec reduced = euler_lagrange_sode(sub.Lbar, L.chart.n);
  ProjectionReport r;
  r.full = full.integrate(concat(x0, y0, v0, w_start), 0.0, T, dt);
  r.reduced = reduced.integrate(concat(x0, v0), 0.0, T, dt);
  r.full.diagnostic_names = {"horizontality", "reduced_el_residual"};
  r.min_abs_det_lbar = INFINITY;
  for (std::size_t k = 0; k < r.full.size(); ++k) {
    const TangentPointM s = TangentPointM::from_flat(L.chart, r.full.states[k]);
    const Vec xr = r.reduced.states[k].head(ly.n);
    const Vec vr = r.reduced.states[k].tail(ly.n);
    r.base_deviation = std::max(r.base_deviation, max_abs(s.x - xr));
    const double drift = max_abs(s.w - h.value(mu(s)));
    r.horizontality_drift = std::max(r.horizontality_drift, drift);

    const Vec f = full.force(concat(s.x, s.y), concat(s.v, s.w));
    const Vec zb = concat(s.x, s.v);
    const Jet2 lb = sub.Lbar.eval(as_span(zb), JetOrder::Second);
    const Mat lvv = lb.hessian.block(ly.n, ly.n, ly.n, ly.n);
    const Mat lvx = lb.hessian.block(ly.n, 0, ly.n, ly.n);
    const Vec el = lvv * f.head(ly.n) + lvx * s.v - lb.gradient.head(ly.n);
    r.reduced_el_residual = std::max(r.reduced_el_residual, max_abs(el));
    r.full.diagnostics.push_back((Vec(2) << drift, max_abs(el)).finished());

    const Vec zr = concat(xr, vr);
    const Jet2 lr = sub.Lbar.eval(as_span(zr), JetOrder::Second);
    r.min_abs_det_lbar = std::min(r.min_abs_det_lbar, std::abs(lr.hessian.block(ly.n, ly.n, ly.n, ly.n).determinant()));
  }
  return r;
}

ResidualSummary two_homogeneity_check(const LagrangianSpec& L, const SampleOptions& opts) {
  L.check();
  const TmLayout ly = layout(L.chart);
  const std::size_t dim = 2 * (L.chart.n + L.chart.m);
  const auto pts = sample_points(default_box(opts.box, dim), opts.samples, opts.seed);
  return max_residual(
      pts.size(),
      [&](std::size_t i) {
        const TangentPointM p = TangentPointM::from_flat(L.chart, pts[i]);
        if (!L.smooth_at_zero && L.chart.in_slit(p.v)) throw DomainError("sample inside slit");
        const Jet2 j = eval_L(L, p.x, p.y, p.v, p.w, JetOrder::First);
        const Vec u = concat(p.v, p.w);
        return std::abs(j.gradient.segment(ly.v(), ly.n + ly.m).dot(u) - 2.0 * j.value);
      },
      opts.policy);
}

ResidualSummary homogeneity_of_induced(const LagrangianSpec& L, const SplittingSpec& h, const SampleOptions& opts) {
  const ResidualSummary hyp = two_homogeneity_check(L, opts);
  if (!(hyp.max < 1e-8)) {
    std::ostringstream msg;
    msg << "L is not 2-homogeneous in the velocities (max |Delta(L) - 2L| = " << hyp.max << ")";
    throw HypothesisFailed(msg.str());
  }
  const Index n = static_cast<Index>(L.chart.n), m = static_cast<Index>(L.chart.m);
  return over_pullback_samples(L.chart, opts, [&](const PullbackPoint& p) {
    if (!h.admissible(p.v)) throw DomainError("sample inside slit");
    double r = 0.0;
    for (const Jet2& j : h.eval(p, JetOrder::First)) r = std::max(r, std::abs(j.gradient.segment(n + m, n).dot(p.v) - j.value));
    return r;
  });
}

}  // namespace nls
