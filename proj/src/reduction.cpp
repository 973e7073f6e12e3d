#include "nls/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nls/errors.hpp"

namespace nls {

namespace {

using Index = Eigen::Index;

double max_abs(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }
double max_abs(const Mat& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

SampleBox box_or_default(const SampleOptions& opts, std::size_t dim) {
  if (opts.box && opts.box->dim() == dim) return *opts.box;
  return SampleBox::uniform(dim);
}

template <class F>
ResidualSummary over_samples(std::size_t dim, const SampleOptions& opts, F&& f) {
  const auto pts = sample_points(box_or_default(opts, dim), opts.samples, opts.seed);
  return max_residual(pts.size(), [&](std::size_t i) { return f(pts[i]); }, opts.policy);
}

Mat inverse_of(const Mat& k, const char* what) {
  const Index n = k.rows();
  Mat out(n, n);
  try {
    for (Index c = 0; c < n; ++c) out.col(c) = linear_solve({k, Vec::Unit(n, c)});
  } catch (const SingularMatrix& e) {
    throw SingularMatrix(std::string(what) + ": " + e.what());
  }
  return out;
}

Vec solve(const Mat& a, const Vec& b, const char* what) {
  try {
    return linear_solve({a, b});
  } catch (const SingularMatrix& e) {
    throw SingularMatrix(std::string(what) + ": " + e.what());
  }
}

// Gradients of the splitting coefficients split by block.
struct SplittingJets {
  Vec value;
  Mat hx, hy, hv;  // m x n, m x m, m x n
};

SplittingJets splitting_jets(const SplittingSpec& h, const PullbackPoint& p) {
  const FieldJet fj = h.jacobian(p);
  const auto n = static_cast<Index>(h.chart().n), m = static_cast<Index>(h.chart().m);
  return {fj.value, fj.jacobian.middleCols(0, n), fj.jacobian.middleCols(n, m), fj.jacobian.middleCols(n + m, n)};
}

}  // namespace

void ActionSpec::check() const {
  chart.validate();
  const std::size_t n = chart.n, m = chart.m;
  if (K.size() != m) throw DimensionMismatch("action K needs m rows");
  for (const auto& row : K) {
    if (row.size() != m) throw DimensionMismatch("action K must be m x m");
    for (const auto& f : row) {
      if (!f.valid() || f.arity() != n + m) throw DimensionMismatch("action K entries are fields of (x, y)");
    }
  }
  if (C.size() != m) throw DimensionMismatch("structure constants need m matrices");
  for (const Mat& c : C) {
    if (c.rows() != static_cast<Index>(m) || c.cols() != static_cast<Index>(m)) {
      throw DimensionMismatch("structure constants must be m x m per upper index");
    }
    if (max_abs(Mat(c + c.transpose())) > 1e-12) throw InputError("structure constants are not antisymmetric");
  }
  const auto mi = static_cast<Index>(m);
  for (Index a = 0; a < mi; ++a)
    for (Index b = 0; b < mi; ++b)
      for (Index c = 0; c < mi; ++c)
        for (Index e = 0; e < mi; ++e) {
          double jac = 0.0;
          for (Index d = 0; d < mi; ++d) {
            jac += C[d](a, b) * C[e](d, c) + C[d](b, c) * C[e](d, a) + C[d](c, a) * C[e](d, b);
          }
          if (std::abs(jac) > 1e-12) throw InputError("structure constants violate the Jacobi identity");
        }
}

Mat ActionSpec::matrix(const Vec& q) const {
  const auto m = static_cast<Index>(chart.m);
  Mat k(m, m);
  for (Index b = 0; b < m; ++b)
    for (Index g = 0; g < m; ++g) k(b, g) = K[b][g].value(as_span(q));
  return k;
}

Mat ActionSpec::matrix_dot(const TangentPointM& p) const {
  const auto m = static_cast<Index>(chart.m);
  const Vec q = concat(p.x, p.y), u = concat(p.v, p.w);
  Mat kd(m, m);
  for (Index b = 0; b < m; ++b)
    for (Index g = 0; g < m; ++g) kd(b, g) = K[b][g].eval(as_span(q), JetOrder::First).gradient.dot(u);
  return kd;
}

VectorField ActionSpec::generator(std::size_t g) const {
  if (g >= chart.m) throw DimensionMismatch("generator index out of range");
  const std::size_t n = chart.n, m = chart.m;
  std::vector<ScalarField> comps;
  for (std::size_t i = 0; i < n; ++i) comps.push_back(ScalarField::constant(n + m, 0.0));
  for (std::size_t b = 0; b < m; ++b) comps.push_back(K[b][g]);
  return VectorField(comps);
}

ActionSpec translation_action(const BundleChart& chart) {
  ActionSpec a;
  a.chart = chart;
  const std::size_t m = chart.m, arity = chart.n + chart.m;
  a.K.assign(m, {});
  for (std::size_t b = 0; b < m; ++b)
    for (std::size_t g = 0; g < m; ++g) a.K[b].push_back(ScalarField::constant(arity, b == g ? 1.0 : 0.0));
  a.C.assign(m, Mat::Zero(static_cast<Index>(m), static_cast<Index>(m)));
  return a;
}

ResidualSummary invariance_check(const LagrangianSpec& L, const ActionSpec& action, const SampleOptions& opts) {
  L.check();
  action.check();
  const BundleChart c = L.chart;
  return over_samples(2 * (c.n + c.m), opts, [&](const Vec& z) {
    const TangentPointM p = TangentPointM::from_flat(c, z);
    const Vec grad = L.L.eval(as_span(z), JetOrder::First).gradient;
    double r = 0.0;
    for (std::size_t g = 0; g < c.m; ++g) {
      const SecondTangentPoint lift = complete_lift(action.generator(g), p);
      r = std::max(r, std::abs(grad.dot(concat(lift.X, lift.Y, lift.V, lift.W))));
    }
    return r;
  });
}

Vec momentum_map(const LagrangianSpec& L, const ActionSpec& action, const TangentPointM& at) {
  L.check();
  at.check(L.chart);
  const auto n = static_cast<Index>(L.chart.n), m = static_cast<Index>(L.chart.m);
  const Vec z = at.flat();
  const Vec lw = L.L.eval(as_span(z), JetOrder::First).gradient.segment(2 * n + m, m);
  return action.matrix(concat(at.x, at.y)).transpose() * lw;
}

ResidualSummary momentum_on_horizontal(const LagrangianSpec& L, const ActionSpec& action, const SplittingSpec& h,
                                       const SampleOptions& opts) {
  const BundleChart c = L.chart;
  return over_samples(2 * c.n + c.m, opts, [&](const Vec& z) {
    const PullbackPoint p = PullbackPoint::from_flat(c, z);
    return max_abs(momentum_map(L, action, horizontal_map(h, p)));
  });
}

ResidualSummary principal_check(const SplittingSpec& h, const ActionSpec& action, const SampleOptions& opts) {
  action.check();
  const BundleChart c = h.chart();
  const auto n = static_cast<Index>(c.n), m = static_cast<Index>(c.m);
  return over_samples(2 * c.n + c.m, opts, [&](const Vec& z) {
    const PullbackPoint p = PullbackPoint::from_flat(c, z);
    if (!h.admissible(p.v)) throw DomainError("sample inside slit");
    const SplittingJets hj = splitting_jets(h, p);
    const Vec q = concat(p.x, p.y);
    const Mat K = action.matrix(q);
    const Mat hyK = hj.hy * K;  // (a, g) = dh^a/dy^b K^b_g
    double r = 0.0;
    for (Index a = 0; a < m; ++a)
      for (Index g = 0; g < m; ++g) {
        const Vec grad = action.K[static_cast<std::size_t>(a)][static_cast<std::size_t>(g)]
                             .eval(as_span(q), JetOrder::First)
                             .gradient;
        const double e = p.v.dot(grad.head(n)) + hj.value.dot(grad.tail(m)) - hyK(a, g);
        r = std::max(r, std::abs(e));
      }
    return r;
  });
}

Vec omega(const SplittingSpec& h, const ActionSpec& action, const TangentPointM& at) {
  at.check(h.chart());
  const Mat K = action.matrix(concat(at.x, at.y));
  return solve(K, at.w - h.value(mu(at)), "action matrix K is singular");
}

ResidualSummary connection_test_domega(const SplittingSpec& h, const ActionSpec& action, const SampleOptions& opts) {
  action.check();
  const BundleChart c = h.chart();
  return over_samples(2 * c.n + c.m, opts, [&](const Vec& z) {
    const PullbackPoint p = PullbackPoint::from_flat(c, z);
    if (!h.admissible(p.v)) throw DomainError("sample inside slit");
    const SplittingJets hj = splitting_jets(h, p);
    const Mat K = action.matrix(concat(p.x, p.y));
    return max_abs(solve(K, hj.hv * p.v - hj.value, "action matrix K is singular"));
  });
}

SecondTangentPoint xi_field(const SplittingSpec& h, const ActionSpec& action, const TangentPointM& at) {
  at.check(h.chart());
  const Vec dw = at.w - h.value(mu(at));
  const Mat K = action.matrix(concat(at.x, at.y));
  SecondTangentPoint s = SecondTangentPoint::zero_at(at);
  s.Y = dw;
  s.W = action.matrix_dot(at) * solve(K, dw, "action matrix K is singular");
  return s;
}

SecondTangentPoint vilms_of_sode(const SodeSpec& gamma_bar, const SplittingSpec& h, const TangentPointM& at) {
  at.check(h.chart());
  if (gamma_bar.dof() != h.chart().n) throw DimensionMismatch("base SODE must live on the base");
  const SplittingJets hj = splitting_jets(h, mu(at));
  const Vec f = gamma_bar.force(at.x, at.v);
  SecondTangentPoint s = SecondTangentPoint::zero_at(at);
  s.X = at.v;
  s.Y = hj.value;
  s.V = f;
  s.W = hj.hx * at.v + hj.hy * at.w + hj.hv * f;
  return s;
}

SodeSpec unreduce(const SodeSpec& gamma_bar, const SplittingSpec& h, const ActionSpec& action,
                  const SampleOptions& opts) {
  const BundleChart c = h.chart();
  if (gamma_bar.dof() != c.n) throw DimensionMismatch("base SODE must live on the base");
  const ResidualSummary pc = principal_check(h, action, opts);
  if (pc.max > 1e-7) {
    std::ostringstream msg;
    msg << "splitting is not principal (residual " << pc.max << ")";
    throw NotPrincipal(msg.str());
  }
  const auto n = static_cast<Index>(c.n);
  return SodeSpec(
      c.n + c.m,
      [gamma_bar, h, action, n](const Vec& q, const Vec& u) {
        const Index m = q.size() - n;
        const TangentPointM p{q.head(n), q.tail(m), u.head(n), u.tail(m)};
        const SecondTangentPoint g = vilms_of_sode(gamma_bar, h, p);
        const SecondTangentPoint xi = xi_field(h, action, p);
        return concat(g.V + xi.V, g.W + xi.W);
      },
      "unreduced");
}

ResidualSummary submersion_residual(const SodeSpec& gamma, const SodeSpec& gamma_bar, const BundleChart& chart,
                                    const SampleOptions& opts) {
  const auto n = static_cast<Index>(chart.n), m = static_cast<Index>(chart.m);
  return over_samples(2 * (chart.n + chart.m), opts, [&](const Vec& z) {
    const Vec q = z.head(n + m), u = z.tail(n + m);
    const Vec full = gamma.vector_field(z);
    const Vec base = gamma_bar.vector_field(concat(q.head(n), u.head(n)));
    // (x', v') of Gamma against (x', v') of Gamma_bar
    return std::max(max_abs(Vec(full.head(n) - base.head(n))),
                    max_abs(Vec(full.segment(n + m, n) - base.tail(n))));
  });
}

double horizontality_drift(const SplittingSpec& h, const TrajectoryRecord& tr) {
  double worst = 0.0;
  for (const Vec& s : tr.states) {
    const TangentPointM p = TangentPointM::from_flat(h.chart(), s);
    worst = std::max(worst, max_abs(Vec(p.w - h.value(mu(p)))));
  }
  return worst;
}

LiftIdentityReport lift_identity_check(const SplittingSpec& h, const ActionSpec& action, const SodeSpec& gamma_bar,
                                       const SampleOptions& opts) {
  const BundleChart c = h.chart();
  const std::size_t dim = 2 * (c.n + c.m);
  auto gap = [](const SecondTangentPoint& a, const SecondTangentPoint& b) { return max_abs(Vec(a.flat() - b.flat())); };
  LiftIdentityReport r;
  r.xi_vs_delta_v = over_samples(dim, opts, [&](const Vec& z) {
    const TangentPointM p = TangentPointM::from_flat(c, z);
    if (!h.admissible(p.v)) throw DomainError("sample inside slit");
    return gap(vertical_endomorphism(xi_field(h, action, p)), liouville_fields(&h, p, LiouvilleKind::Vertical));
  });
  r.vilms_vs_delta_h = over_samples(dim, opts, [&](const Vec& z) {
    const TangentPointM p = TangentPointM::from_flat(c, z);
    if (!h.admissible(p.v)) throw DomainError("sample inside slit");
    return gap(vertical_endomorphism(vilms_of_sode(gamma_bar, h, p)), liouville_fields(&h, p, LiouvilleKind::Horizontal));
  });
  return r;
}

FibreFlow generator_flow(const ActionSpec& action, std::size_t g, const Vec& x, const Vec& y, double t, int steps) {
  const auto n = static_cast<Index>(action.chart.n), m = static_cast<Index>(action.chart.m);
  FibreFlow out{y, Mat::Zero(m, n), Mat::Identity(m, m)};
  if (t == 0.0) return out;
  if (steps < 1) throw InputError("flow needs at least one step");
  const double sign = t > 0 ? 1.0 : -1.0;
  // state: y, then jac_x and jac_y column-major
  IvpProblem p;
  p.state0 = Vec::Zero(m + m * n + m * m);
  p.state0.head(m) = y;
  p.state0.tail(m * m) = Eigen::Map<const Vec>(out.jac_y.data(), m * m);
  p.t0 = 0.0;
  p.t1 = std::abs(t);
  p.dt = std::abs(t) / steps;
  p.vector_field = [&](double, const Vec& s) {
    const Vec q = concat(x, Vec(s.head(m)));
    Vec val(m);
    Mat dx(m, n), dy(m, m);
    for (Index b = 0; b < m; ++b) {
      const Jet2 j = action.K[static_cast<std::size_t>(b)][g].eval(as_span(q), JetOrder::First);
      val[b] = j.value;
      dx.row(b) = j.gradient.head(n).transpose();
      dy.row(b) = j.gradient.tail(m).transpose();
    }
    const Mat jx = Eigen::Map<const Mat>(s.data() + m, m, n);
    const Mat jy = Eigen::Map<const Mat>(s.data() + m + m * n, m, m);
    const Mat djx = dx + dy * jx, djy = dy * jy;
    Vec ds(s.size());
    ds.head(m) = sign * val;
    ds.segment(m, m * n) = sign * Eigen::Map<const Vec>(djx.data(), m * n);
    ds.tail(m * m) = sign * Eigen::Map<const Vec>(djy.data(), m * m);
    return ds;
  };
  TrajectoryRecord tr;
  try {
    tr = rk4_integrate(p);
  } catch (const NumericalError& e) {
    throw FlowEscape(std::string("generator flow left the chart: ") + e.what());
  }
  const Vec& s = tr.final_state();
  if (!s.allFinite()) throw FlowEscape("generator flow left the chart");
  out.y = s.head(m);
  out.jac_x = Eigen::Map<const Mat>(s.data() + m, m, n);
  out.jac_y = Eigen::Map<const Mat>(s.data() + m + m * n, m, m);
  return out;
}

ResidualSummary vilms_principal_check(const SplittingSpec& h, const ActionSpec& action,
                                      const std::vector<double>& times, const SampleOptions& opts) {
  action.check();
  const BundleChart c = h.chart();
  const std::size_t tm = 2 * (c.n + c.m);
  return over_samples(2 * tm, opts, [&](const Vec& z) {
    const SecondTangentPoint s = SecondTangentPoint::from_flat(c, z);
    if (!h.admissible(s.X)) throw DomainError("sample inside slit");
    const SecondTangentPoint proj = vilms_vertical_projection(h, s);
    double r = 0.0;
    for (std::size_t g = 0; g < c.m; ++g) {
      for (double t : times) {
        if (t == 0.0) continue;  // identity element, both sides agree exactly
        auto tphi = [&](const Vec& p) {
          const TangentPointM a = TangentPointM::from_flat(c, p);
          const FibreFlow f = generator_flow(action, g, a.x, a.y, t);
          return TangentPointM{a.x, f.y, a.v, Vec(f.jac_x * a.v + f.jac_y * a.w)}.flat();
        };
        auto ttphi = [&](const SecondTangentPoint& q) {
          const Vec base = concat(q.x, q.y, q.v, q.w);
          const Vec dir = concat(q.X, q.Y, q.V, q.W);
          const double eps = 1e-4 / std::max(1.0, max_abs(dir));
          const Vec d = (tphi(base + eps * dir) - tphi(base - eps * dir)) / (2 * eps);
          return SecondTangentPoint::from_flat(c, concat(tphi(base), d));
        };
        const SecondTangentPoint lhs = vilms_vertical_projection(h, ttphi(s));
        const SecondTangentPoint rhs = ttphi(proj);
        r = std::max(r, max_abs(Vec(lhs.flat() - rhs.flat())));
      }
    }
    return r;
  });
}

void MagneticModel::check(std::size_t samples, std::uint64_t seed) const {
  if (n < 1 || m < 1) throw DimensionMismatch("magnetic model needs n, m >= 1");
  auto field_of_x = [&](const ScalarField& f, const char* what) {
    if (!f.valid() || f.arity() != n) throw DimensionMismatch(std::string(what) + " must be a field of x");
  };
  if (g.size() != n) throw DimensionMismatch("g must be n x n");
  for (const auto& row : g) {
    if (row.size() != n) throw DimensionMismatch("g must be n x n");
    for (const auto& f : row) field_of_x(f, "g");
  }
  field_of_x(V, "V");
  if (A_base.size() != n) throw DimensionMismatch("A_i needs n entries");
  for (const auto& f : A_base) field_of_x(f, "A_i");
  if (A_fibre.size() != m) throw DimensionMismatch("A_alpha needs m entries");
  for (const auto& f : A_fibre) field_of_x(f, "A_alpha");
  if (Upsilon.size() != n) throw DimensionMismatch("Upsilon needs n blocks");
  for (const auto& blk : Upsilon) {
    if (blk.size() != m) throw DimensionMismatch("Upsilon blocks must be m x m");
    for (const auto& row : blk) {
      if (row.size() != m) throw DimensionMismatch("Upsilon blocks must be m x m");
      for (const auto& f : row) field_of_x(f, "Upsilon");
    }
  }
  if (Kcurv.size() != m) throw DimensionMismatch("Kcurv needs m blocks");
  for (const auto& blk : Kcurv) {
    if (blk.size() != n) throw DimensionMismatch("Kcurv blocks must be n x n");
    for (const auto& row : blk) {
      if (row.size() != n) throw DimensionMismatch("Kcurv blocks must be n x n");
      for (const auto& f : row) field_of_x(f, "Kcurv");
    }
  }
  const auto mi = static_cast<Index>(m);
  if (k.rows() != mi || k.cols() != mi) throw DimensionMismatch("k must be m x m");
  if (max_abs(Mat(k - k.transpose())) > 0.0) throw InputError("k must be symmetric");
  (void)inverse_of(k, "k is singular");
  if (C.size() != m) throw DimensionMismatch("structure constants need m matrices");
  for (const Mat& c : C) {
    if (c.rows() != mi || c.cols() != mi) throw DimensionMismatch("structure constants must be m x m");
  }
  for (Index a = 0; a < mi; ++a)
    for (Index b = 0; b < mi; ++b)
      for (Index c = 0; c < mi; ++c) {
        double s = 0.0;
        for (Index d = 0; d < mi; ++d) s += k(a, d) * C[d](b, c) + k(b, d) * C[d](a, c);
        if (std::abs(s) > 1e-12) throw InputError("k is not bi-invariant for the structure constants");
      }
  for (const Vec& x : sample_points(SampleBox::uniform(n), samples, seed)) {
    const Mat gx = magnetic_fields(*this, x).g;
    Eigen::LLT<Mat> llt(0.5 * (gx + gx.transpose()));
    if (llt.info() != Eigen::Success || max_abs(Mat(gx - gx.transpose())) > 1e-12) {
      throw InputError("g is not symmetric positive definite at a sample point");
    }
  }
}

MagneticFields magnetic_fields(const MagneticModel& model, const Vec& x) {
  const auto n = static_cast<Index>(model.n), m = static_cast<Index>(model.m);
  const auto sp = as_span(x);
  auto jet = [&](const ScalarField& f) { return f.eval(sp, JetOrder::First); };
  MagneticFields f;
  f.g.resize(n, n);
  f.dg.assign(model.n, Mat(n, n));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      const Jet2 e = jet(model.g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
      f.g(i, j) = e.value;
      for (Index k = 0; k < n; ++k) f.dg[static_cast<std::size_t>(k)](i, j) = e.gradient[k];
    }
  const Jet2 v = jet(model.V);
  f.V = v.value;
  f.dV = v.gradient;
  f.A_base.resize(n);
  f.dA_base.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    const Jet2 e = jet(model.A_base[static_cast<std::size_t>(i)]);
    f.A_base[i] = e.value;
    f.dA_base.row(i) = e.gradient.transpose();
  }
  f.A_fibre.resize(m);
  f.dA_fibre.resize(m, n);
  for (Index a = 0; a < m; ++a) {
    const Jet2 e = jet(model.A_fibre[static_cast<std::size_t>(a)]);
    f.A_fibre[a] = e.value;
    f.dA_fibre.row(a) = e.gradient.transpose();
  }
  for (std::size_t i = 0; i < model.n; ++i) {
    Mat u(m, m);
    for (Index b = 0; b < m; ++b)
      for (Index a = 0; a < m; ++a) u(b, a) = model.Upsilon[i][static_cast<std::size_t>(b)][static_cast<std::size_t>(a)].value(sp);
    f.Upsilon.push_back(u);
  }
  for (std::size_t a = 0; a < model.m; ++a) {
    Mat kc(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) kc(i, j) = model.Kcurv[a][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].value(sp);
    f.Kcurv.push_back(kc);
  }
  return f;
}

FirstOrderSystem magnetic_lp_system(const MagneticModel& model) {
  model.check();
  const auto n = static_cast<Index>(model.n), m = static_cast<Index>(model.m);
  FirstOrderSystem sys;
  sys.dim = 2 * model.n + model.m;
  sys.rhs = [model, n, m](const Vec& s) {
    const Vec x = s.head(n), v = s.segment(n, n), wb = s.tail(m);
    const MagneticFields f = magnetic_fields(model, x);
    const Vec P = model.k * wb + f.A_fibre;  // dl/dwb
    Vec F(n);
    for (Index i = 0; i < n; ++i) {
      double rhs = 0.0;
      for (Index a = 0; a < m; ++a) {
        double coeff = 0.0;
        for (Index j = 0; j < n; ++j) coeff -= f.Kcurv[static_cast<std::size_t>(a)](i, j) * v[j];
        for (Index b = 0; b < m; ++b) coeff += f.Upsilon[static_cast<std::size_t>(i)](a, b) * wb[b];
        rhs += coeff * P[a];
      }
      // dl/dx^i
      rhs += 0.5 * v.dot(f.dg[static_cast<std::size_t>(i)] * v) - f.dV[i] + f.dA_base.col(i).dot(v) +
             f.dA_fibre.col(i).dot(wb);
      // d/dt (g_ij v^j + A_i) minus the g v' part
      for (Index k = 0; k < n; ++k) rhs -= v[k] * f.dg[static_cast<std::size_t>(k)].row(i).dot(v);
      rhs -= f.dA_base.row(i).dot(v);
      F[i] = rhs;
    }
    Vec G(m);
    for (Index a = 0; a < m; ++a) {
      double rhs = 0.0;
      for (Index b = 0; b < m; ++b) {
        double coeff = 0.0;
        for (Index i = 0; i < n; ++i) coeff += f.Upsilon[static_cast<std::size_t>(i)](b, a) * v[i];
        for (Index d = 0; d < m; ++d) coeff += model.C[static_cast<std::size_t>(b)](a, d) * wb[d];
        rhs += coeff * P[b];
      }
      rhs -= f.dA_fibre.row(a).dot(v);
      G[a] = rhs;
    }
    return concat(v, solve(f.g, F, "metric g is singular"), solve(model.k, G, "k is singular"));
  };
  return sys;
}

Vec magnetic_quadratic_term(const MagneticModel& model, const Vec& x, const Vec& wbar) {
  const MagneticFields f = magnetic_fields(model, x);
  Vec q(static_cast<Index>(model.n));
  for (std::size_t i = 0; i < model.n; ++i) {
    q[static_cast<Index>(i)] = (model.k * wbar).dot(f.Upsilon[i] * wbar);
  }
  return q;
}

Vec magnetic_fibre_momentum(const MagneticModel& model, const Vec& state) {
  const auto n = static_cast<Index>(model.n), m = static_cast<Index>(model.m);
  if (state.size() != 2 * n + m) throw DimensionMismatch("magnetic state is (x, v, wb)");
  return model.k * state.tail(m) + magnetic_fields(model, state.head(n)).A_fibre;
}

SplittingSpec magnetic_induced_splitting(const MagneticModel& model) {
  model.check();
  const Mat kinv = inverse_of(model.k, "k is singular");
  const BundleChart c{model.n, model.m, 1e-6};
  const std::size_t n = model.n, m = model.m, arity = 2 * n + m;
  auto f = [model, kinv, n, m, arity](std::span<const double> z, JetOrder order) {
    std::vector<Jet2> A;
    for (const auto& a : model.A_fibre) A.push_back(embed(a.eval(z.subspan(0, n), order), arity, 0, order));
    std::vector<Jet2> h;
    for (std::size_t a = 0; a < m; ++a) {
      Jet2 s = Jet2::constant(0.0, arity, order);
      for (std::size_t b = 0; b < m; ++b) s = s - kinv(static_cast<Index>(a), static_cast<Index>(b)) * A[b];
      h.push_back(s);
    }
    return h;
  };
  std::vector<std::string> labels;
  for (std::size_t a = 0; a < m; ++a) labels.push_back("-k^-1 A (" + std::to_string(a + 1) + ")");
  return SplittingSpec(c, f, true, SplittingProvenance::InducedByLagrangian, labels);
}

ScalarField magnetic_base_lagrangian(const MagneticModel& model) {
  const std::size_t n = model.n;
  return ScalarField(
      2 * n,
      [model, n](std::span<const double> z, JetOrder order) {
        const std::size_t ar = 2 * n;
        const auto xs = z.subspan(0, n);
        auto lift = [&](const ScalarField& f) { return embed(f.eval(xs, order), ar, 0, order); };
        std::vector<Jet2> v;
        for (std::size_t i = 0; i < n; ++i) v.push_back(Jet2::variable(z[n + i], n + i, ar, order));
        Jet2 L = -lift(model.V);
        for (std::size_t i = 0; i < n; ++i) {
          L = L + lift(model.A_base[i]) * v[i];
          for (std::size_t j = 0; j < n; ++j) L = L + 0.5 * (lift(model.g[i][j]) * v[i] * v[j]);
        }
        return L;
      },
      "magnetic base Lagrangian");
}

double decoupling_residual(const MagneticModel& model, const Vec& x, const Vec& v) {
  const auto n = static_cast<Index>(model.n), m = static_cast<Index>(model.m);
  const MagneticFields f = magnetic_fields(model, x);
  double worst = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index g = 0; g < m; ++g) {
      double e = f.dA_fibre(g, i);
      for (Index a = 0; a < m; ++a) {
        e += f.Upsilon[static_cast<std::size_t>(i)](a, g) * f.A_fibre[a];
        for (Index j = 0; j < n; ++j) e -= f.Kcurv[static_cast<std::size_t>(a)](i, j) * v[j] * model.k(a, g);
      }
      worst = std::max(worst, std::abs(e));
    }
  return worst;
}

DecouplingReport decoupling_check(const MagneticModel& model, const SampleOptions& opts) {
  model.check();
  const auto n = static_cast<Index>(model.n), m = static_cast<Index>(model.m);
  DecouplingReport r;
  r.residual = over_samples(2 * model.n, opts, [&](const Vec& z) {
    return decoupling_residual(model, z.head(n), z.tail(n));
  }).max;
  r.decoupled = r.residual < 1e-8;

  const FirstOrderSystem sys = magnetic_lp_system(model);
  const std::size_t dim = 2 * model.n + model.m;
  const auto pts = sample_points(box_or_default(opts, dim), opts.samples, opts.seed);
  const auto other = sample_points(box_or_default(opts, dim), opts.samples, opts.seed + 1);
  r.wbar_sensitivity = max_residual(
                           pts.size(),
                           [&](std::size_t i) {
                             Vec moved = pts[i];
                             moved.tail(m) = other[i].tail(m);
                             return max_abs(Vec(sys.rhs(pts[i]).segment(n, n) - sys.rhs(moved).segment(n, n)));
                           },
                           opts.policy)
                           .max;
  if (r.decoupled) {
    const SodeSpec base = euler_lagrange_sode(magnetic_base_lagrangian(model), model.n);
    r.base_el_mismatch = max_residual(
                             pts.size(),
                             [&](std::size_t i) {
                               const Vec x = pts[i].head(n), v = pts[i].segment(n, n);
                               return max_abs(Vec(sys.rhs(pts[i]).segment(n, n) - base.force(x, v)));
                             },
                             opts.policy)
                             .max;
  }
  return r;
}

}  // namespace nls
