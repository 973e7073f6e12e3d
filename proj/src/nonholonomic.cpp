#include "nls/nonholonomic.hpp"

#include "nls/errors.hpp"

namespace nls {

namespace {

using Index = Eigen::Index;

void check_constraints(const LagrangianSpec& L, const AffineConstraintSpec& c) {
  L.check();
  const std::size_t n = L.chart.n, m = L.chart.m;
  if (c.chart.n != n || c.chart.m != m) throw DimensionMismatch("constraints and Lagrangian use different charts");
  if (c.A.size() != m || c.A0.size() != m) throw DimensionMismatch("constraints need m rows");
  for (std::size_t a = 0; a < m; ++a) {
    if (c.A[a].size() != n) throw DimensionMismatch("constraint matrix A must be m x n");
    for (const auto& f : c.A[a]) {
      if (f.arity() != n + m) throw DimensionMismatch("constraint coefficients are fields of (x, y)");
    }
    if (c.A0[a].arity() != n + m) throw DimensionMismatch("constraint coefficients are fields of (x, y)");
  }
}

}  // namespace

Vec constrained_fibre_velocity(const AffineConstraintSpec& c, const Vec& x, const Vec& y, const Vec& v) {
  const Vec q = concat(x, y);
  const auto sp = as_span(q);
  Vec w(static_cast<Index>(c.chart.m));
  for (std::size_t a = 0; a < c.chart.m; ++a) {
    double s = c.A0[a].value(sp);
    for (std::size_t i = 0; i < c.chart.n; ++i) s -= c.A[a][i].value(sp) * v[static_cast<Index>(i)];
    w[static_cast<Index>(a)] = s;
  }
  return w;
}

ScalarField constrained_lagrangian(const LagrangianSpec& L, const AffineConstraintSpec& c) {
  check_constraints(L, c);
  const std::size_t n = c.chart.n, m = c.chart.m, arity = 2 * n + m;
  return ScalarField(
      arity,
      [L, c, n, m, arity](std::span<const double> z, JetOrder order) {
        const auto q = z.subspan(0, n + m);
        std::vector<Jet2> inner;
        for (std::size_t k = 0; k < arity; ++k) inner.push_back(Jet2::variable(z[k], k, arity, order));
        Vec w(static_cast<Index>(m));
        for (std::size_t a = 0; a < m; ++a) {
          Jet2 s = embed(c.A0[a].eval(q, order), arity, 0, order);
          for (std::size_t i = 0; i < n; ++i) s = s - embed(c.A[a][i].eval(q, order), arity, 0, order) * inner[n + m + i];
          w[static_cast<Index>(a)] = s.value;
          inner.push_back(s);
        }
        const Vec full = concat(Eigen::Map<const Vec>(z.data(), static_cast<Index>(arity)), w);
        return compose(L.L.eval(as_span(full), order), inner);
      },
      "constrained Lagrangian");
}

Vec lagrange_dalembert_force(const LagrangianSpec& L, const AffineConstraintSpec& c, const Vec& x, const Vec& y,
                             const Vec& v) {
  check_constraints(L, c);
  const auto n = static_cast<Index>(c.chart.n), m = static_cast<Index>(c.chart.m);
  const Vec w = constrained_fibre_velocity(c, x, y, v);
  const Vec z = concat(x, y, v, w);
  const Vec lw = L.L.eval(as_span(z), JetOrder::First).gradient.segment(2 * n + m, m);
  const AffineCurvature k = affine_curvature(c, x, y);
  Vec out = Vec::Zero(n);
  for (Index a = 0; a < m; ++a) out -= (k.B[static_cast<std::size_t>(a)] * v + k.A0i.row(a).transpose()) * lw[a];
  return out;
}

FirstOrderSystem lagrange_dalembert_system(const LagrangianSpec& L, const AffineConstraintSpec& c) {
  const ScalarField Lc = constrained_lagrangian(L, c);
  const auto n = static_cast<Index>(c.chart.n), m = static_cast<Index>(c.chart.m);
  FirstOrderSystem sys;
  sys.dim = 2 * c.chart.n + c.chart.m;
  sys.rhs = [L, c, Lc, n, m](const Vec& s) {
    const Vec x = s.head(n), y = s.segment(n, m), v = s.tail(n);
    const Vec ydot = constrained_fibre_velocity(c, x, y, v);
    const Jet2 j = Lc.eval(as_span(s), JetOrder::Second);
    const Vec q = concat(x, y);
    Mat A(m, n);
    for (Index a = 0; a < m; ++a)
      for (Index i = 0; i < n; ++i)
        A(a, i) = c.A[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)].value(as_span(q));
    const Mat lvv = j.hessian.block(n + m, n + m, n, n);
    const Mat lvx = j.hessian.block(n + m, 0, n, n);
    const Mat lvy = j.hessian.block(n + m, n, n, m);
    const Vec rhs = lagrange_dalembert_force(L, c, x, y, v) + j.gradient.head(n) -
                    A.transpose() * j.gradient.segment(n, m) - lvx * v - lvy * ydot;
    Vec vdot;
    try {
      vdot = linear_solve({lvv, rhs});
    } catch (const SingularMatrix& e) {
      throw SingularMatrix(std::string("constrained velocity Hessian is singular: ") + e.what());
    }
    return concat(v, ydot, vdot);
  };
  return sys;
}

TrajectoryRecord integrate_constrained(const LagrangianSpec& L, const AffineConstraintSpec& c,
                                       const ConstrainedState& ic, double T, double dt) {
  const auto n = static_cast<Index>(c.chart.n), m = static_cast<Index>(c.chart.m);
  if (ic.x.size() != n || ic.y.size() != m || ic.v.size() != n) throw DimensionMismatch("initial state has the wrong size");
  const FirstOrderSystem sys = lagrange_dalembert_system(L, c);
  const ScalarField Lc = constrained_lagrangian(L, c);
  TrajectoryRecord tr = sys.integrate(concat(ic.x, ic.y, ic.v), 0.0, T, dt);
  tr.diagnostic_names = {"constraint_residual", "energy"};
  tr.diagnostics.clear();
  for (Vec& s : tr.states) {
    const Vec x = s.head(n), y = s.segment(n, m), v = s.tail(n);
    const Vec d = sys.rhs(s);
    const Vec q = concat(x, y);
    Vec res = d.segment(n, m);
    for (Index a = 0; a < m; ++a) {
      res[a] -= c.A0[static_cast<std::size_t>(a)].value(as_span(q));
      for (Index i = 0; i < n; ++i)
        res[a] += c.A[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)].value(as_span(q)) * d[i];
    }
    const Jet2 lc = Lc.eval(as_span(s), JetOrder::First);
    const double energy = v.dot(lc.gradient.tail(n)) - lc.value;
    tr.diagnostics.push_back((Vec(2) << (m ? res.cwiseAbs().maxCoeff() : 0.0), energy).finished());
    s = concat(x, y, v, constrained_fibre_velocity(c, x, y, v));
  }
  return tr;
}

}  // namespace nls
