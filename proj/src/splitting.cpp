#include "nls/splitting.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nls/errors.hpp"

namespace nls {

namespace {

std::vector<Jet2> variables(std::span<const double> z, std::size_t first, std::size_t count,
                            std::size_t arity, JetOrder order) {
  std::vector<Jet2> out;
  out.reserve(count);
  for (std::size_t k = first; k < first + count; ++k) out.push_back(Jet2::variable(z[k], k, arity, order));
  return out;
}

double max_abs(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

Vec jet_values(const std::vector<Jet2>& jets) {
  Vec out(static_cast<Eigen::Index>(jets.size()));
  for (std::size_t k = 0; k < jets.size(); ++k) out[static_cast<Eigen::Index>(k)] = jets[k].value;
  return out;
}

// Fills Hessians of first-order jets by central differences of their
// exact gradients. `first` must return jets of order First.
std::vector<Jet2> with_fd_hessians(
    const std::function<std::vector<Jet2>(std::span<const double>)>& first,
    std::span<const double> z) {
  std::vector<Jet2> base = first(z);
  const std::size_t k = z.size();
  for (auto& j : base) j.hessian = Mat::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  std::vector<double> zz(z.begin(), z.end());
  for (std::size_t c = 0; c < k; ++c) {
    const double step = 1e-5 * (1.0 + std::abs(z[c]));
    zz[c] = z[c] + step;
    const auto plus = first(zz);
    zz[c] = z[c] - step;
    const auto minus = first(zz);
    zz[c] = z[c];
    for (std::size_t a = 0; a < base.size(); ++a) {
      base[a].hessian.col(static_cast<Eigen::Index>(c)) = (plus[a].gradient - minus[a].gradient) / (2.0 * step);
    }
  }
  for (auto& j : base) j.hessian = 0.5 * (j.hessian + j.hessian.transpose()).eval();
  return base;
}

}  // namespace

const char* provenance_name(SplittingProvenance p) {
  switch (p) {
    case SplittingProvenance::Explicit: return "explicit";
    case SplittingProvenance::InducedByLagrangian: return "induced-by-lagrangian";
    case SplittingProvenance::AffineFromConstraints: return "affine-from-constraints";
    case SplittingProvenance::Vilms: return "vilms";
  }
  return "?";
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Ehresmann: return "Ehresmann";
    case Verdict::Affine: return "Affine";
    case Verdict::Homogeneous: return "Homogeneous";
    case Verdict::General: return "General";
  }
  return "?";
}

SplittingSpec::SplittingSpec(BundleChart chart, Evaluator f, bool smooth_at_zero,
                             SplittingProvenance provenance, std::vector<std::string> labels)
    : chart_(chart), f_(std::move(f)), smooth_at_zero_(smooth_at_zero), provenance_(provenance),
      labels_(std::move(labels)) {
  chart_.validate();
}

SplittingSpec SplittingSpec::from_fields(BundleChart chart, std::vector<ScalarField> coefficients,
                                         bool smooth_at_zero, SplittingProvenance provenance) {
  if (coefficients.size() != chart.m) {
    throw DimensionMismatch("splitting needs " + std::to_string(chart.m) + " coefficients, got " +
                            std::to_string(coefficients.size()));
  }
  std::vector<std::string> labels;
  for (const auto& c : coefficients) {
    if (c.arity() != 2 * chart.n + chart.m) throw DimensionMismatch("coefficient arity must be 2n + m");
    labels.push_back(c.label());
  }
  return SplittingSpec(
      chart,
      [cs = std::move(coefficients)](std::span<const double> z, JetOrder order) {
        std::vector<Jet2> out;
        out.reserve(cs.size());
        for (const auto& c : cs) out.push_back(c.eval(z, order));
        return out;
      },
      smooth_at_zero, provenance, std::move(labels));
}

std::vector<Jet2> SplittingSpec::eval(std::span<const double> xyv, JetOrder order) const {
  const std::size_t n = chart_.n, m = chart_.m;
  if (!f_) throw InputError("splitting is empty");
  if (xyv.size() != 2 * n + m) throw DimensionMismatch("splitting expects (x, y, v)");
  if (!smooth_at_zero_) {
    double s = 0.0;
    for (std::size_t i = n + m; i < 2 * n + m; ++i) s += xyv[i] * xyv[i];
    if (std::sqrt(s) < chart_.slit_eps) throw DomainError("v lies inside the slit ball");
  }
  auto jets = f_(xyv, order);
  if (jets.size() != m) throw DimensionMismatch("splitting returned wrong coefficient count");
  for (const auto& j : jets) {
    if (!j.finite()) throw DomainError("splitting coefficient is not finite");
  }
  return jets;
}

std::vector<Jet2> SplittingSpec::eval(const PullbackPoint& p, JetOrder order) const {
  p.check(chart_);
  const Vec z = p.flat();
  return eval(as_span(z), order);
}

Vec SplittingSpec::value(const PullbackPoint& p) const { return jet_values(eval(p, JetOrder::Value)); }

FieldJet SplittingSpec::jacobian(const PullbackPoint& p) const {
  const auto jets = eval(p, JetOrder::First);
  FieldJet out;
  out.value = jet_values(jets);
  out.jacobian.resize(static_cast<Eigen::Index>(chart_.m), static_cast<Eigen::Index>(2 * chart_.n + chart_.m));
  for (std::size_t a = 0; a < jets.size(); ++a) out.jacobian.row(static_cast<Eigen::Index>(a)) = jets[a].gradient.transpose();
  return out;
}

TangentPointM horizontal_map(const SplittingSpec& h, const PullbackPoint& p) {
  return {p.x, p.y, p.v, h.value(p)};
}

TangentPointM project_horizontal(const SplittingSpec& h, const TangentPointM& w) {
  w.check(h.chart());
  return horizontal_map(h, mu(w));
}

TangentPointM project_vertical(const SplittingSpec& h, const TangentPointM& w) {
  w.check(h.chart());
  return {w.x, w.y, Vec::Zero(w.v.size()), w.w - h.value(mu(w))};
}

VectorField vertical_projector_map(const SplittingSpec& h) {
  const std::size_t n = h.chart().n, m = h.chart().m;
  const std::size_t k = 2 * (n + m);
  return VectorField(k, k, [h, n, m, k](std::span<const double> z, JetOrder order) {
    std::vector<Jet2> out = variables(z, 0, n + m, k, order);
    for (std::size_t i = 0; i < n; ++i) out.push_back(Jet2::constant(0.0, k, order));
    const auto hj = h.eval(z.subspan(0, 2 * n + m), order);
    const auto w = variables(z, 2 * n + m, m, k, order);
    for (std::size_t a = 0; a < m; ++a) out.push_back(w[a] - embed(hj[a], k, 0, order));
    return out;
  });
}

TangentPointM horizontal_lift_field(const SplittingSpec& h, const VectorField& base_field, const Vec& x,
                                    const Vec& y) {
  if (base_field.arity() != h.chart().n || base_field.dim() != h.chart().n) {
    throw DimensionMismatch("horizontal lift needs a base field");
  }
  return horizontal_map(h, {x, y, base_field.value(as_span(x))});
}

VectorField horizontal_lift_vector_field(const SplittingSpec& h, const VectorField& base_field) {
  const std::size_t n = h.chart().n, m = h.chart().m;
  if (base_field.arity() != n || base_field.dim() != n) throw DimensionMismatch("horizontal lift needs a base field");
  const std::size_t k = n + m;
  return VectorField(k, k, [h, base_field, n, m, k](std::span<const double> q, JetOrder order) {
    const auto xj = base_field.eval_jets(q.subspan(0, n), order);
    std::vector<Jet2> inner = variables(q, 0, n + m, k, order);
    std::vector<double> at(q.begin(), q.end());
    for (std::size_t i = 0; i < n; ++i) {
      inner.push_back(embed(xj[i], k, 0, order));
      at.push_back(xj[i].value);
    }
    const auto hj = h.eval(std::span<const double>(at), order);
    std::vector<Jet2> out;
    out.reserve(k);
    for (std::size_t i = 0; i < n; ++i) out.push_back(inner[n + m + i]);
    for (std::size_t a = 0; a < m; ++a) out.push_back(compose(hj[a], inner));
    return out;
  });
}

TrajectoryRecord horizontal_lift_curve(const SplittingSpec& h, const BaseCurve& curve, const Vec& y0,
                                       double t0, double t1, double dt) {
  const std::size_t n = h.chart().n, m = h.chart().m;
  if (static_cast<std::size_t>(y0.size()) != m) throw DimensionMismatch("y0 has the wrong size");
  IvpProblem p;
  p.state0 = y0;
  p.t0 = t0;
  p.t1 = t1;
  p.dt = dt;
  p.vector_field = [&](double t, const Vec& y) { return h.value({curve.position(t), y, curve.velocity(t)}); };
  TrajectoryRecord ivp = rk4_integrate(p);

  TrajectoryRecord rec;
  rec.diagnostic_names = {"lift_defect"};
  Vec prev_h;
  for (std::size_t k = 0; k < ivp.size(); ++k) {
    const double t = ivp.times[k];
    const Vec x = curve.position(t);
    const Vec v = curve.velocity(t);
    if (static_cast<std::size_t>(x.size()) != n || static_cast<std::size_t>(v.size()) != n) {
      throw DimensionMismatch("base curve has the wrong dimension");
    }
    const Vec& y = ivp.states[k];
    const Vec hv = h.value({x, y, v});
    double defect = 0.0;
    if (k > 0) {
      const Vec slope = (y - ivp.states[k - 1]) / (t - ivp.times[k - 1]);
      defect = max_abs(slope - 0.5 * (hv + prev_h));
    }
    rec.times.push_back(t);
    rec.states.push_back(concat(x, y, v, hv));
    rec.diagnostics.push_back(Vec::Constant(1, defect));
    prev_h = hv;
  }
  return rec;
}

double reparametrization_gap(const SplittingSpec& h, const BaseCurve& curve, const Vec& y0,
                             const std::function<double(double)>& theta,
                             const std::function<double(double)>& dtheta, double s0, double s1,
                             double dt) {
  const std::size_t n = h.chart().n, m = h.chart().m;
  const double t0 = theta(s0), t1 = theta(s1);
  const TrajectoryRecord direct = horizontal_lift_curve(h, curve, y0, t0, t1, dt);
  BaseCurve re;
  re.position = [&](double s) { return curve.position(theta(s)); };
  re.velocity = [&](double s) { return Vec(curve.velocity(theta(s)) * dtheta(s)); };
  const TrajectoryRecord rep = horizontal_lift_curve(h, re, y0, s0, s1, dt);

  const auto yblock = [&](const Vec& state) { return Vec(state.segment(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m))); };
  const auto wblock = [&](const Vec& state) { return Vec(state.tail(static_cast<Eigen::Index>(m))); };

  double gap = 0.0;
  for (std::size_t k = 0; k < rep.size(); ++k) {
    const double t = std::clamp(theta(rep.times[k]), t0, t1);
    auto it = std::upper_bound(direct.times.begin(), direct.times.end(), t);
    std::size_t hi = static_cast<std::size_t>(it - direct.times.begin());
    hi = std::clamp<std::size_t>(hi, 1, direct.size() - 1);
    const std::size_t lo = hi - 1;
    const double ta = direct.times[lo], tb = direct.times[hi], len = tb - ta;
    const double u = (t - ta) / len;
    // cubic Hermite with the lift's own slopes dy/dt = h
    const double h00 = 2 * u * u * u - 3 * u * u + 1, h10 = u * u * u - 2 * u * u + u;
    const double h01 = -2 * u * u * u + 3 * u * u, h11 = u * u * u - u * u;
    const Vec yi = h00 * yblock(direct.states[lo]) + h10 * len * wblock(direct.states[lo]) +
                   h01 * yblock(direct.states[hi]) + h11 * len * wblock(direct.states[hi]);
    gap = std::max(gap, max_abs(yblock(rep.states[k]) - yi));
  }
  return gap;
}

namespace {

struct ClassifySample {
  double euler = 0.0, linearity = 0.0, secant = 0.0, scale = 0.0;
  std::optional<double> intercept;
};

ClassifySample classify_at(const SplittingSpec& h, const Vec& z) {
  const std::size_t n = h.chart().n, m = h.chart().m;
  const auto ni = static_cast<Eigen::Index>(n), mi = static_cast<Eigen::Index>(m);
  const PullbackPoint p = PullbackPoint::from_flat(h.chart(), z);
  if (!h.admissible(p.v)) throw DomainError("sample inside slit");
  const auto jets = h.eval(p, JetOrder::Second);
  ClassifySample s;
  for (const auto& j : jets) {
    const Vec gv = j.gradient.segment(ni + mi, ni);
    s.euler = std::max(s.euler, std::abs(gv.dot(p.v) - j.value));
    s.linearity = std::max(s.linearity, j.hessian.bottomRightCorner(ni, ni).cwiseAbs().maxCoeff());
    s.scale = std::max(s.scale, std::abs(j.value));
  }
  const Vec hp = h.value({p.x, p.y, p.v});
  const Vec hm = h.value({p.x, p.y, Vec(-p.v)});
  const Vec h2p = h.value({p.x, p.y, Vec(2.0 * p.v)});
  const Vec h2m = h.value({p.x, p.y, Vec(-2.0 * p.v)});
  s.secant = max_abs(hp + hm - h2p - h2m);
  if (h.smooth_at_zero()) s.intercept = max_abs(h.value({p.x, p.y, Vec::Zero(ni)}));
  return s;
}

}  // namespace

ClassificationReport classify(const SplittingSpec& h, const SampleOptions& opts) {
  if (opts.samples < 1) throw InputError("classification needs at least one sample");
  const std::size_t dim = 2 * h.chart().n + h.chart().m;
  const SampleBox box = opts.box.value_or(SampleBox::uniform(dim));
  if (box.dim() != dim) throw DimensionMismatch("sample box dimension must be 2n + m");
  const auto pts = sample_points(box, opts.samples, opts.seed);
  const auto outcomes = map_samples<ClassifySample>(
      pts.size(), [&](std::size_t i) { return classify_at(h, pts[i]); }, opts.policy);

  ClassificationReport r;
  r.sample_count = opts.samples;
  r.seed = opts.seed;
  double euler = 0, lin = 0, sec = 0, scale = 0, icpt = 0;
  bool have_intercept = h.smooth_at_zero();
  for (const auto& o : outcomes) {
    if (o.error) std::rethrow_exception(o.error);
  }
  for (const auto& o : outcomes) {
    if (!o.value) {
      ++r.skipped;
      continue;
    }
    ++r.evaluated;
    const auto& s = *o.value;
    euler = std::max(euler, s.euler);
    lin = std::max(lin, s.linearity);
    sec = std::max(sec, s.secant);
    scale = std::max(scale, s.scale);
    if (s.intercept) icpt = std::max(icpt, *s.intercept);
  }
  if (r.evaluated == 0) throw DomainError("no admissible sample points for classification");
  const double tol = 1e-7 * (1.0 + scale);
  r.residuals["euler"] = euler;
  r.residuals["linearity"] = lin;
  r.residuals["secant"] = sec;
  r.residuals["scale"] = scale;
  r.residuals["tolerance"] = tol;
  r.residuals["intercept"] = have_intercept ? std::optional<double>(icpt) : std::nullopt;

  const bool affine = lin < tol && sec < tol;
  const bool homogeneous = euler < tol;
  if (affine && (have_intercept ? icpt < tol : homogeneous)) {
    r.verdict = Verdict::Ehresmann;
  } else if (affine) {
    r.verdict = Verdict::Affine;
  } else if (homogeneous) {
    r.verdict = Verdict::Homogeneous;
  } else {
    r.verdict = Verdict::General;
  }
  return r;
}

namespace {

// Vilms chart layout: base (x, v), fibre (y, w), base velocity (X, V).
struct VilmsLayout {
  std::size_t n, m;
  std::size_t x(std::size_t i) const { return i; }
  std::size_t v(std::size_t i) const { return n + i; }
  std::size_t y(std::size_t a) const { return 2 * n + a; }
  std::size_t w(std::size_t a) const { return 2 * n + m + a; }
  std::size_t X(std::size_t i) const { return 2 * n + 2 * m + i; }
  std::size_t V(std::size_t i) const { return 3 * n + 2 * m + i; }
  std::size_t arity() const { return 4 * n + 2 * m; }
  // slot of h's argument k in (x, y, v_h) -> slot of the Vilms point
  std::size_t point_slot(std::size_t k) const { return k < n ? x(k) : k < n + m ? y(k - n) : X(k - n - m); }
  // slot carrying the tangent component paired with h's argument k
  std::size_t tangent_slot(std::size_t k) const { return k < n ? v(k) : k < n + m ? w(k - n) : V(k - n - m); }
};

std::vector<Jet2> vilms_first(const SplittingSpec& h, const VilmsLayout& L, std::span<const double> z,
                              JetOrder order) {
  const std::size_t n = L.n, m = L.m, kh = 2 * n + m, k = L.arity();
  std::vector<double> q(kh), t(kh);
  for (std::size_t j = 0; j < kh; ++j) {
    q[j] = z[L.point_slot(j)];
    t[j] = z[L.tangent_slot(j)];
  }
  const JetOrder h_order = order == JetOrder::Value ? JetOrder::First : JetOrder::Second;
  const auto hj = h.eval(std::span<const double>(q), h_order);
  const Eigen::Map<const Vec> tv(t.data(), static_cast<Eigen::Index>(kh));
  std::vector<Jet2> out;
  out.reserve(2 * m);
  for (std::size_t a = 0; a < m; ++a) {
    Jet2 yj = Jet2::constant(hj[a].value, k, order);
    if (order != JetOrder::Value) {
      for (std::size_t j = 0; j < kh; ++j) yj.gradient[static_cast<Eigen::Index>(L.point_slot(j))] = hj[a].gradient[static_cast<Eigen::Index>(j)];
    }
    out.push_back(std::move(yj));
  }
  for (std::size_t a = 0; a < m; ++a) {
    Jet2 wj = Jet2::constant(hj[a].gradient.dot(tv), k, order);
    if (order != JetOrder::Value) {
      const Vec ht = hj[a].hessian * tv;
      for (std::size_t j = 0; j < kh; ++j) {
        wj.gradient[static_cast<Eigen::Index>(L.point_slot(j))] += ht[static_cast<Eigen::Index>(j)];
        wj.gradient[static_cast<Eigen::Index>(L.tangent_slot(j))] += hj[a].gradient[static_cast<Eigen::Index>(j)];
      }
    }
    out.push_back(std::move(wj));
  }
  return out;
}

}  // namespace

SplittingSpec vilms_lift(const SplittingSpec& h) {
  const BundleChart c = h.chart();
  const VilmsLayout L{c.n, c.m};
  BundleChart vc{2 * c.n, 2 * c.m, c.slit_eps};
  auto f = [h, L](std::span<const double> z, JetOrder order) -> std::vector<Jet2> {
    if (order != JetOrder::Second) return vilms_first(h, L, z, order);
    auto out = with_fd_hessians([&](std::span<const double> zz) { return vilms_first(h, L, zz, JetOrder::First); }, z);
    // Y-block Hessians are exact
    const std::size_t kh = 2 * L.n + L.m;
    std::vector<double> q(kh);
    for (std::size_t j = 0; j < kh; ++j) q[j] = z[L.point_slot(j)];
    const auto hj = h.eval(std::span<const double>(q), JetOrder::Second);
    for (std::size_t a = 0; a < L.m; ++a) {
      Mat hess = Mat::Zero(static_cast<Eigen::Index>(L.arity()), static_cast<Eigen::Index>(L.arity()));
      for (std::size_t r = 0; r < kh; ++r) {
        for (std::size_t s = 0; s < kh; ++s) {
          hess(static_cast<Eigen::Index>(L.point_slot(r)), static_cast<Eigen::Index>(L.point_slot(s))) =
              hj[a].hessian(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s));
        }
      }
      out[a].hessian = hess;
    }
    return out;
  };
  std::vector<std::string> labels;
  for (std::size_t a = 0; a < c.m; ++a) labels.push_back("Y" + std::to_string(a + 1));
  for (std::size_t a = 0; a < c.m; ++a) labels.push_back("W" + std::to_string(a + 1));
  return SplittingSpec(vc, f, h.smooth_at_zero(), SplittingProvenance::Vilms, labels);
}

namespace {

// Vilms coefficients (Y_h, W_h) at the TTM point s, in (x, v, y, w, X, V) order.
std::pair<Vec, Vec> vilms_coefficients(const SplittingSpec& vilms, const SecondTangentPoint& s) {
  const PullbackPoint p{concat(s.x, s.v), concat(s.y, s.w), concat(s.X, s.V)};
  const Vec c = vilms.value(p);
  const auto m = static_cast<Eigen::Index>(s.y.size());
  return {c.head(m), c.tail(m)};
}

}  // namespace

SecondTangentPoint vilms_vertical_projection(const SplittingSpec& h, const SecondTangentPoint& s) {
  s.check(h.chart());
  const auto [yh, wh] = vilms_coefficients(vilms_lift(h), s);
  SecondTangentPoint out = SecondTangentPoint::zero_at(s.base());
  out.Y = s.Y - yh;
  out.W = s.W - wh;
  return out;
}

SecondTangentPoint vilms_vertical_projection_oracle(const SplittingSpec& h, const SecondTangentPoint& s) {
  s.check(h.chart());
  const SecondTangentPoint f = canonical_flip(s);
  const VectorField pv = vertical_projector_map(h);
  const Vec base = f.base().flat();
  const FieldJet j = pv.eval(as_span(base), JetOrder::First);
  const Vec fibre = concat(f.X, f.Y, f.V, f.W);
  const SecondTangentPoint t = SecondTangentPoint::from_flat(h.chart(), concat(j.value, Vec(j.jacobian * fibre)));
  return canonical_flip(t);
}

VilmsLiftComparison vilms_complete_lift_check(const SplittingSpec& h, std::size_t j, const TangentPointM& at) {
  const BundleChart& c = h.chart();
  at.check(c);
  if (j >= c.n) throw DimensionMismatch("coordinate index out of range");
  const auto ni = static_cast<Eigen::Index>(c.n);
  const Vec ej = Vec::Unit(ni, static_cast<Eigen::Index>(j));
  const SplittingSpec vh = vilms_lift(h);

  const VectorField lifted = horizontal_lift_vector_field(h, VectorField::constant(c.n, ej));
  const SecondTangentPoint cl = complete_lift(lifted, at);
  SecondTangentPoint vl = SecondTangentPoint::zero_at(at);
  vl.X = ej;
  std::tie(vl.Y, vl.W) = vilms_coefficients(vh, vl);

  VilmsLiftComparison r;
  r.complete_lift_residual = max_abs(cl.flat() - vl.flat());
  try {
    SecondTangentPoint vert = SecondTangentPoint::zero_at(at);
    vert.V = ej;
    vert.W = h.value({at.x, at.y, ej});
    SecondTangentPoint vv = SecondTangentPoint::zero_at(at);
    vv.V = ej;
    std::tie(vv.Y, vv.W) = vilms_coefficients(vh, vv);
    r.vertical_difference = max_abs(vert.flat() - vv.flat());
  } catch (const DomainError&) {
    r.vertical_difference.reset();
  }
  return r;
}

TangentPointM curvature_rbar(const SplittingSpec& h, const VectorField& X, const VectorField& Y, const Vec& x,
                             const Vec& y) {
  const BundleChart& c = h.chart();
  const VectorField xh = horizontal_lift_vector_field(h, X);
  const VectorField yh = horizontal_lift_vector_field(h, Y);
  const Vec q = concat(x, y);
  const Vec br = lie_bracket(xh, yh, as_span(q));
  const Vec base = lie_bracket(X, Y, as_span(x));
  const Vec lifted = h.value({x, y, base});
  const auto ni = static_cast<Eigen::Index>(c.n), mi = static_cast<Eigen::Index>(c.m);
  return {x, y, Vec(br.head(ni) - base), Vec(br.tail(mi) - lifted)};
}

PointwiseCurvature curvature_pointwise(const SplittingSpec& h, const Vec& u, const Vec& v, const Vec& x,
                                       const Vec& y) {
  const std::size_t n = h.chart().n;
  const auto ni = static_cast<Eigen::Index>(n);
  if (u.size() != ni || v.size() != ni || x.size() != ni) throw DimensionMismatch("base vectors must have size n");
  PointwiseCurvature out;
  out.value = curvature_rbar(h, VectorField::constant(n, u), VectorField::constant(n, v), x, y);

  // affine extensions with fixed, generic slopes through the same vectors
  auto extension = [&](const Vec& at_x, const Vec& val, double phase) {
    Mat P(ni, ni);
    for (Eigen::Index i = 0; i < ni; ++i) {
      for (Eigen::Index j = 0; j < ni; ++j) P(i, j) = 0.5 * std::sin(phase + 1.3 * static_cast<double>(i) + 2.1 * static_cast<double>(j));
    }
    return VectorField(n, n, [=](std::span<const double> z, JetOrder order) {
      std::vector<Jet2> comps;
      for (Eigen::Index i = 0; i < ni; ++i) {
        Jet2 c = Jet2::constant(val[i], n, order);
        for (Eigen::Index j = 0; j < ni; ++j) {
          c = c + P(i, j) * (Jet2::variable(z[static_cast<std::size_t>(j)], static_cast<std::size_t>(j), n, order) -
                             Jet2::constant(at_x[j], n, order));
        }
        comps.push_back(std::move(c));
      }
      return comps;
    });
  };
  const TangentPointM other = curvature_rbar(h, extension(x, u, 0.7), extension(x, v, 2.9), x, y);
  out.extension_gap = std::max(max_abs(other.w - out.value.w), max_abs(other.v - out.value.v));
  if (out.extension_gap > 1e-7) {
    std::ostringstream msg;
    msg << "pointwise curvature depends on the extension (gap " << out.extension_gap << ")";
    throw NotWellDefined(msg.str());
  }
  return out;
}

AffineSplittingData affine_decompose(const SplittingSpec& h, const SampleOptions& opts) {
  const BundleChart c = h.chart();
  const std::size_t n = c.n, m = c.m, k = n + m;
  if (!h.smooth_at_zero()) throw NotAffine("splitting is not smooth at v = 0");
  AffineSplittingData d;
  d.chart = c;

  auto h_at_zero = [h, n, m](std::span<const double> q, JetOrder order) {
    std::vector<double> z(q.begin(), q.end());
    z.resize(2 * n + m, 0.0);
    return h.eval(std::span<const double>(z), order);
  };
  for (std::size_t a = 0; a < m; ++a) {
    // h(x, y, 0) restricted to the (x, y) slots
    d.A0.emplace_back(k, [h_at_zero, a, k](std::span<const double> q, JetOrder order) {
      const auto hj = h_at_zero(q, order);
      Jet2 out = Jet2::constant(hj[a].value, k, order);
      if (order != JetOrder::Value) out.gradient = hj[a].gradient.head(static_cast<Eigen::Index>(k));
      if (order == JetOrder::Second) out.hessian = hj[a].hessian.topLeftCorner(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
      return out;
    }, "A0_" + std::to_string(a + 1));
  }
  d.A.resize(m);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t i = 0; i < n; ++i) {
      auto first = [h_at_zero, a, i, n, m, k](std::span<const double> q, JetOrder order) {
        const auto hj = h_at_zero(q, order == JetOrder::Value ? JetOrder::First : JetOrder::Second);
        const auto col = static_cast<Eigen::Index>(n + m + i);
        Jet2 out = Jet2::constant(-hj[a].gradient[col], k, order);
        if (order != JetOrder::Value) out.gradient = -hj[a].hessian.row(col).head(static_cast<Eigen::Index>(k)).transpose();
        return out;
      };
      d.A[a].emplace_back(k, [first](std::span<const double> q, JetOrder order) {
        if (order != JetOrder::Second) return first(q, order);
        return with_fd_hessians([&](std::span<const double> z) { return std::vector<Jet2>{first(z, JetOrder::First)}; }, q)[0];
      }, "A" + std::to_string(a + 1) + "_" + std::to_string(i + 1));
    }
  }

  const SplittingSpec rebuilt = affine_splitting(d);
  const std::size_t dim = 2 * n + m;
  const SampleBox box = opts.box.value_or(SampleBox::uniform(dim));
  const auto pts = sample_points(box, opts.samples, opts.seed);
  const ResidualSummary s = max_residual(
      pts.size(),
      [&](std::size_t i) {
        const PullbackPoint p = PullbackPoint::from_flat(c, pts[i]);
        return max_abs(h.value(p) - rebuilt.value(p));
      },
      opts.policy);
  d.reconstruction_residual = s.max;
  if (s.max > 1e-7) {
    std::ostringstream msg;
    msg << "affine reconstruction residual " << s.max << " exceeds 1e-7";
    throw NotAffine(msg.str());
  }
  return d;
}

SplittingSpec affine_splitting(const AffineSplittingData& d) {
  const BundleChart c = d.chart;
  const std::size_t n = c.n, m = c.m, k = n + m, kh = 2 * n + m;
  if (d.A.size() != m || d.A0.size() != m) throw DimensionMismatch("affine data needs m rows");
  for (const auto& row : d.A) {
    if (row.size() != n) throw DimensionMismatch("affine data needs n columns");
  }
  std::vector<std::string> labels;
  for (std::size_t a = 0; a < m; ++a) labels.push_back("affine h" + std::to_string(a + 1));
  return SplittingSpec(
      c,
      [d, n, m, k, kh](std::span<const double> z, JetOrder order) {
        const auto q = z.subspan(0, k);
        std::vector<Jet2> out;
        for (std::size_t a = 0; a < m; ++a) {
          Jet2 acc = embed(d.A0[a].eval(q, order), kh, 0, order);
          for (std::size_t i = 0; i < n; ++i) {
            const Jet2 vi = Jet2::variable(z[k + i], k + i, kh, order);
            acc = acc - embed(d.A[a][i].eval(q, order), kh, 0, order) * vi;
          }
          out.push_back(std::move(acc));
        }
        return out;
      },
      true, SplittingProvenance::AffineFromConstraints, labels);
}

VectorField horizontal_frame(const AffineSplittingData& d, std::size_t i) {
  const std::size_t n = d.chart.n, m = d.chart.m, k = n + m;
  if (i >= n) throw DimensionMismatch("frame index out of range");
  return VectorField(k, k, [d, i, n, m, k](std::span<const double> q, JetOrder order) {
    std::vector<Jet2> out;
    for (std::size_t j = 0; j < n; ++j) out.push_back(Jet2::constant(j == i ? 1.0 : 0.0, k, order));
    for (std::size_t a = 0; a < m; ++a) out.push_back(-d.A[a][i].eval(q, order));
    return out;
  });
}

AffineCurvature affine_curvature(const AffineSplittingData& d, const Vec& x, const Vec& y) {
  const std::size_t n = d.chart.n, m = d.chart.m, k = n + m;
  const auto ni = static_cast<Eigen::Index>(n), mi = static_cast<Eigen::Index>(m);
  const Vec q = concat(x, y);
  std::vector<VectorField> H;
  for (std::size_t i = 0; i < n; ++i) H.push_back(horizontal_frame(d, i));
  const VectorField drift(k, k, [d, n, m, k](std::span<const double> p, JetOrder order) {
    std::vector<Jet2> out;
    for (std::size_t j = 0; j < n; ++j) out.push_back(Jet2::constant(0.0, k, order));
    for (std::size_t a = 0; a < m; ++a) out.push_back(d.A0[a].eval(p, order));
    return out;
  });
  AffineCurvature r;
  r.B.assign(m, Mat::Zero(ni, ni));
  r.A0i = Mat::Zero(mi, ni);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vec b = lie_bracket(H[i], H[j], as_span(q)).tail(mi);
      for (std::size_t a = 0; a < m; ++a) {
        const auto ai = static_cast<Eigen::Index>(a);
        r.B[a](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = b[ai];
        r.B[a](static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = -b[ai];
      }
    }
    r.A0i.col(static_cast<Eigen::Index>(i)) = lie_bracket(H[i], drift, as_span(q)).tail(mi);
  }
  return r;
}

TangentPointM rbar_zero(const AffineSplittingData& d, const Vec& zeta, const TangentPointM& w_pt) {
  w_pt.check(d.chart);
  const auto ni = static_cast<Eigen::Index>(d.chart.n), mi = static_cast<Eigen::Index>(d.chart.m);
  if (zeta.size() != ni) throw DimensionMismatch("zeta must have size n");
  const AffineCurvature ac = affine_curvature(d, w_pt.x, w_pt.y);
  Vec out = Vec::Zero(mi);
  for (Eigen::Index a = 0; a < mi; ++a) {
    for (Eigen::Index i = 0; i < ni; ++i) {
      double s = ac.A0i(a, i);
      for (Eigen::Index j = 0; j < ni; ++j) s += w_pt.v[j] * ac.B[static_cast<std::size_t>(a)](i, j);
      out[a] += zeta[i] * s;
    }
  }
  return {w_pt.x, w_pt.y, Vec::Zero(ni), out};
}

SecondTangentPoint liouville_fields(const SplittingSpec* h, const TangentPointM& at, LiouvilleKind which) {
  if (which == LiouvilleKind::Delta) return liouville(at);
  if (h == nullptr) throw InputError("this Liouville field needs a splitting");
  at.check(h->chart());
  SecondTangentPoint s = SecondTangentPoint::zero_at(at);
  switch (which) {
    case LiouvilleKind::Horizontal:
      s.V = at.v;
      s.W = h->value(mu(at));
      break;
    case LiouvilleKind::Vertical:
      s.W = at.w - h->value(mu(at));
      break;
    case LiouvilleKind::Zero:
      s.W = h->value({at.x, at.y, Vec::Zero(at.v.size())});
      break;
    case LiouvilleKind::Delta:
      break;
  }
  return s;
}

}  // namespace nls
