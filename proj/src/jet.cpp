#include "nls/jet.hpp"

#include <cmath>
#include <sstream>

#include "nls/errors.hpp"

namespace nls {

namespace {

std::size_t dim_of(JetOrder order, std::size_t arity, JetOrder need) {
  return static_cast<int>(order) >= static_cast<int>(need) ? arity : 0;
}

void require_same_shape(const Jet2& a, const Jet2& b) {
  if (a.gradient.size() != b.gradient.size() || a.hessian.rows() != b.hessian.rows()) {
    throw DomainError("jet shape mismatch");
  }
}

Mat outer_sym(const Vec& a, const Vec& b) { return a * b.transpose() + b * a.transpose(); }

}  // namespace

Jet2 Jet2::constant(double c, std::size_t arity, JetOrder order) {
  Jet2 j;
  j.value = c;
  j.gradient = Vec::Zero(static_cast<Eigen::Index>(dim_of(order, arity, JetOrder::First)));
  const auto h = static_cast<Eigen::Index>(dim_of(order, arity, JetOrder::Second));
  j.hessian = Mat::Zero(h, h);
  return j;
}

Jet2 Jet2::variable(double x, std::size_t index, std::size_t arity, JetOrder order) {
  Jet2 j = constant(x, arity, order);
  if (j.gradient.size() > 0) j.gradient[static_cast<Eigen::Index>(index)] = 1.0;
  return j;
}

JetOrder Jet2::order() const {
  if (hessian.size() > 0 || (gradient.size() > 0 && hessian.rows() == gradient.size())) {
    return JetOrder::Second;
  }
  return gradient.size() > 0 ? JetOrder::First : JetOrder::Value;
}

bool Jet2::finite() const {
  return std::isfinite(value) && gradient.allFinite() && hessian.allFinite();
}

Jet2 operator+(const Jet2& a, const Jet2& b) {
  require_same_shape(a, b);
  return {a.value + b.value, a.gradient + b.gradient, a.hessian + b.hessian};
}

Jet2 operator-(const Jet2& a, const Jet2& b) {
  require_same_shape(a, b);
  return {a.value - b.value, a.gradient - b.gradient, a.hessian - b.hessian};
}

Jet2 operator-(const Jet2& a) { return {-a.value, -a.gradient, -a.hessian}; }

Jet2 operator*(double s, const Jet2& a) { return {s * a.value, s * a.gradient, s * a.hessian}; }

Jet2 operator*(const Jet2& a, const Jet2& b) {
  require_same_shape(a, b);
  Jet2 r;
  r.value = a.value * b.value;
  r.gradient = a.value * b.gradient + b.value * a.gradient;
  if (a.hessian.size() > 0) {
    r.hessian = a.value * b.hessian + b.value * a.hessian + outer_sym(a.gradient, b.gradient);
  } else {
    r.hessian = a.hessian;
  }
  return r;
}

Jet2 operator/(const Jet2& a, const Jet2& b) {
  require_same_shape(a, b);
  if (b.value == 0.0) throw DomainError("division by zero");
  Jet2 q;
  q.value = a.value / b.value;
  q.gradient = (a.gradient - q.value * b.gradient) / b.value;
  if (a.hessian.size() > 0) {
    q.hessian = (a.hessian - q.value * b.hessian - outer_sym(q.gradient, b.gradient)) / b.value;
  } else {
    q.hessian = a.hessian;
  }
  return q;
}

Jet2 chain(const Jet2& a, double f, double df, double d2f) {
  Jet2 r;
  r.value = f;
  r.gradient = df * a.gradient;
  if (a.hessian.size() > 0) {
    r.hessian = d2f * (a.gradient * a.gradient.transpose()) + df * a.hessian;
  } else {
    r.hessian = a.hessian;
  }
  return r;
}

Jet2 pow(const Jet2& base, const Jet2& exponent) {
  require_same_shape(base, exponent);
  const double a = base.value;
  const double b = exponent.value;
  const bool constant_exponent =
      (exponent.gradient.size() == 0 || exponent.gradient.isZero(0.0)) &&
      (exponent.hessian.size() == 0 || exponent.hessian.isZero(0.0));
  if (constant_exponent) {
    const double f = std::pow(a, b);
    if (!std::isfinite(f)) throw DomainError("power is not finite");
    if (base.gradient.size() == 0) return chain(base, f, 0.0, 0.0);
    const double df = (b == 0.0) ? 0.0 : b * std::pow(a, b - 1.0);
    const double d2f = (b == 0.0 || b == 1.0) ? 0.0 : b * (b - 1.0) * std::pow(a, b - 2.0);
    if (!std::isfinite(df) || (base.hessian.size() > 0 && !std::isfinite(d2f))) {
      throw DomainError("power is not differentiable at this base");
    }
    return chain(base, f, df, d2f);
  }
  if (!(a > 0.0)) throw DomainError("variable exponent requires a positive base");
  const double f = std::pow(a, b);
  const double la = std::log(a);
  Jet2 r;
  r.value = f;
  const Vec gphi = la * exponent.gradient + (b / a) * base.gradient;
  r.gradient = f * gphi;
  if (base.hessian.size() > 0) {
    const Mat hphi = la * exponent.hessian + outer_sym(exponent.gradient, base.gradient) / a +
                     (b / a) * base.hessian -
                     (b / (a * a)) * (base.gradient * base.gradient.transpose());
    r.hessian = f * (gphi * gphi.transpose() + hphi);
  } else {
    r.hessian = base.hessian;
  }
  return r;
}

// Separate calls keep values bit-identical to std::sin/std::cos; the
// compiler would otherwise merge the pair into sincos.
[[gnu::noinline]] static double sin_of(double x) { return std::sin(x); }
[[gnu::noinline]] static double cos_of(double x) { return std::cos(x); }

Jet2 sin(const Jet2& a) {
  const double s = sin_of(a.value);
  const double c = cos_of(a.value);
  return chain(a, s, c, -s);
}

Jet2 cos(const Jet2& a) {
  const double s = sin_of(a.value);
  const double c = cos_of(a.value);
  return chain(a, c, -s, -c);
}

Jet2 tan(const Jet2& a) {
  const double t = std::tan(a.value);
  const double c = cos_of(a.value);
  if (c == 0.0 || !std::isfinite(t)) throw DomainError("tan at a pole");
  const double sec2 = 1.0 / (c * c);
  return chain(a, t, sec2, 2.0 * t * sec2);
}

Jet2 exp(const Jet2& a) {
  const double e = std::exp(a.value);
  if (!std::isfinite(e)) throw DomainError("exp overflow");
  return chain(a, e, e, e);
}

Jet2 log(const Jet2& a) {
  if (!(a.value > 0.0)) throw DomainError("log of nonpositive argument");
  return chain(a, std::log(a.value), 1.0 / a.value, -1.0 / (a.value * a.value));
}

Jet2 sqrt(const Jet2& a) {
  if (a.value < 0.0) throw DomainError("sqrt of negative argument");
  const double s = std::sqrt(a.value);
  if (a.gradient.size() == 0) return chain(a, s, 0.0, 0.0);
  if (s == 0.0) throw DomainError("sqrt is not differentiable at zero");
  return chain(a, s, 0.5 / s, -0.25 / (s * a.value));
}

Jet2 abs(const Jet2& a, double slit_eps) {
  const double m = std::abs(a.value);
  if (!(m >= slit_eps) || m == 0.0) throw DomainError("abs evaluated inside the slit ball");
  return chain(a, m, a.value > 0.0 ? 1.0 : -1.0, 0.0);
}

Jet2 compose(const Jet2& outer, std::span<const Jet2> inner) {
  if (inner.empty()) throw DomainError("compose needs at least one inner jet");
  if (outer.gradient.size() != 0 && static_cast<std::size_t>(outer.gradient.size()) != inner.size()) {
    throw DomainError("compose: outer arity does not match the number of inner jets");
  }
  const Eigen::Index k = inner[0].gradient.size();
  const bool want_grad = outer.gradient.size() > 0 && k > 0;
  const bool want_hess = want_grad && outer.hessian.size() > 0 && inner[0].hessian.size() > 0;
  Jet2 r;
  r.value = outer.value;
  if (!want_grad) {
    r.gradient = Vec(0);
    r.hessian = Mat(0, 0);
    return r;
  }
  const auto p = static_cast<Eigen::Index>(inner.size());
  Mat jac(p, k);
  for (Eigen::Index i = 0; i < p; ++i) {
    if (inner[static_cast<std::size_t>(i)].gradient.size() != k) {
      throw DomainError("compose: inner jets differ in arity");
    }
    jac.row(i) = inner[static_cast<std::size_t>(i)].gradient.transpose();
  }
  r.gradient = jac.transpose() * outer.gradient;
  if (want_hess) {
    Mat h = jac.transpose() * outer.hessian * jac;
    for (Eigen::Index i = 0; i < p; ++i) {
      h += outer.gradient[i] * inner[static_cast<std::size_t>(i)].hessian;
    }
    r.hessian = 0.5 * (h + h.transpose());
  } else {
    r.hessian = Mat(0, 0);
  }
  return r;
}

Jet2 embed(const Jet2& j, std::size_t arity, std::size_t offset, JetOrder order) {
  Jet2 r = Jet2::constant(j.value, arity, order);
  const auto o = static_cast<Eigen::Index>(offset);
  const Eigen::Index k = j.gradient.size();
  if (r.gradient.size() > 0) {
    if (k == 0) throw DomainError("embed: source jet lacks a gradient");
    r.gradient.segment(o, k) = j.gradient;
  }
  if (r.hessian.size() > 0) {
    if (j.hessian.rows() != k) throw DomainError("embed: source jet lacks a Hessian");
    r.hessian.block(o, o, k, k) = j.hessian;
  }
  return r;
}

Jet2 truncate(Jet2 j, JetOrder order) {
  if (order == JetOrder::Value) {
    j.gradient.resize(0);
    j.hessian.resize(0, 0);
  } else if (order == JetOrder::First) {
    j.hessian.resize(0, 0);
  }
  return j;
}

ScalarField::ScalarField(std::size_t arity, Evaluator f, std::string label)
    : arity_(arity), f_(std::move(f)), label_(std::move(label)) {}

ScalarField ScalarField::constant(std::size_t arity, double c) {
  return ScalarField(
      arity, [arity, c](std::span<const double>, JetOrder order) { return Jet2::constant(c, arity, order); },
      "const");
}

ScalarField ScalarField::coordinate(std::size_t arity, std::size_t index) {
  return ScalarField(
      arity,
      [arity, index](std::span<const double> z, JetOrder order) {
        return Jet2::variable(z[index], index, arity, order);
      },
      "z" + std::to_string(index + 1));
}

Jet2 ScalarField::eval(std::span<const double> point, JetOrder order) const {
  if (!f_) throw DomainError("evaluating an empty scalar field");
  if (point.size() != arity_) {
    std::ostringstream msg;
    msg << "field '" << label_ << "' expects " << arity_ << " coordinates, got " << point.size();
    throw DomainError(msg.str());
  }
  Jet2 j = f_(point, order);
  if (!j.finite()) throw DomainError("field '" + label_ + "' is not finite at the point");
  const auto need_g = static_cast<Eigen::Index>(dim_of(order, arity_, JetOrder::First));
  const auto need_h = static_cast<Eigen::Index>(dim_of(order, arity_, JetOrder::Second));
  if (j.gradient.size() < need_g || j.hessian.rows() < need_h) {
    throw DomainError("field '" + label_ + "' returned a jet of too low order");
  }
  j = truncate(std::move(j), order);
  if (j.hessian.size() > 0) {
    const double asym = (j.hessian - j.hessian.transpose()).cwiseAbs().maxCoeff();
    const double scale = 1.0 + j.hessian.cwiseAbs().maxCoeff();
    if (asym > 1e-9 * scale) throw DomainError("field '" + label_ + "' has an asymmetric Hessian");
    j.hessian = 0.5 * (j.hessian + j.hessian.transpose());
  }
  return j;
}

double ScalarField::value(std::span<const double> point) const {
  return eval(point, JetOrder::Value).value;
}

Jet2 eval_jet2(const ScalarField& f, std::span<const double> point) {
  return f.eval(point, JetOrder::Second);
}

DerivativeReport fd_check(const ScalarField& f, std::span<const double> point, double step) {
  if (!(step > 0.0)) throw DomainError("fd_check step must be positive");
  const Jet2 j = eval_jet2(f, point);
  const std::size_t k = f.arity();
  Vec z(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) z[static_cast<Eigen::Index>(i)] = point[i];

  auto val = [&](const Vec& p) { return f.value(as_span(p)); };
  DerivativeReport rep;
  rep.fd_gradient = Vec(static_cast<Eigen::Index>(k));
  rep.fd_hessian = Mat(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  const double f0 = j.value;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(k); ++i) {
    Vec zp = z, zm = z;
    zp[i] += step;
    zm[i] -= step;
    const double fp = val(zp), fm = val(zm);
    rep.fd_gradient[i] = (fp - fm) / (2.0 * step);
    rep.fd_hessian(i, i) = (fp - 2.0 * f0 + fm) / (step * step);
    for (Eigen::Index l = 0; l < i; ++l) {
      Vec pp = z, pm = z, mp = z, mm = z;
      pp[i] += step; pp[l] += step;
      pm[i] += step; pm[l] -= step;
      mp[i] -= step; mp[l] += step;
      mm[i] -= step; mm[l] -= step;
      const double hil = (val(pp) - val(pm) - val(mp) + val(mm)) / (4.0 * step * step);
      rep.fd_hessian(i, l) = hil;
      rep.fd_hessian(l, i) = hil;
    }
  }
  if (k > 0) {
    rep.gradient_deviation = (rep.fd_gradient - j.gradient).cwiseAbs().maxCoeff();
    rep.hessian_deviation = (rep.fd_hessian - j.hessian).cwiseAbs().maxCoeff();
    rep.gradient_scale = j.gradient.cwiseAbs().maxCoeff();
    rep.hessian_scale = j.hessian.cwiseAbs().maxCoeff();
  }
  return rep;
}

double directional_derivative(const ScalarField& f, std::span<const double> point,
                              std::span<const double> direction) {
  if (direction.size() != f.arity()) throw DomainError("direction has the wrong dimension");
  const Jet2 j = f.eval(point, JetOrder::First);
  double s = 0.0;
  for (std::size_t i = 0; i < direction.size(); ++i) {
    s += j.gradient[static_cast<Eigen::Index>(i)] * direction[i];
  }
  return s;
}

Mat fd_hessian_from_gradient(const std::function<Vec(const Vec&)>& gradient, const Vec& at,
                             double step) {
  const Eigen::Index k = at.size();
  Mat h(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double s = step * (1.0 + std::abs(at[i]));
    Vec zp = at, zm = at;
    zp[i] += s;
    zm[i] -= s;
    h.col(i) = (gradient(zp) - gradient(zm)) / (2.0 * s);
  }
  return 0.5 * (h + h.transpose());
}

}  // namespace nls
