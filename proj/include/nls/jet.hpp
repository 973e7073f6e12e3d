#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nls/numerics.hpp"

namespace nls {

/// How many derivative levels an evaluation must produce.
enum class JetOrder { Value = 0, First = 1, Second = 2 };

/// Value, gradient and Hessian of a scalar function at a point.
///
/// A jet of order Value carries empty gradient and Hessian; order First
/// carries a gradient and an empty Hessian. Arithmetic between jets
/// requires matching shapes, so constants must be created with the
/// arity and order of the evaluation they take part in.
struct Jet2 {
  double value = 0.0;
  Vec gradient;
  Mat hessian;

  static Jet2 constant(double c, std::size_t arity, JetOrder order);
  static Jet2 variable(double x, std::size_t index, std::size_t arity, JetOrder order);

  std::size_t arity() const { return static_cast<std::size_t>(gradient.size()); }
  JetOrder order() const;
  bool finite() const;
};

Jet2 operator+(const Jet2& a, const Jet2& b);
Jet2 operator-(const Jet2& a, const Jet2& b);
Jet2 operator*(const Jet2& a, const Jet2& b);
Jet2 operator/(const Jet2& a, const Jet2& b);
Jet2 operator-(const Jet2& a);
Jet2 operator*(double s, const Jet2& a);

Jet2 pow(const Jet2& base, const Jet2& exponent);
Jet2 sin(const Jet2& a);
Jet2 cos(const Jet2& a);
Jet2 tan(const Jet2& a);
Jet2 exp(const Jet2& a);
Jet2 log(const Jet2& a);
Jet2 sqrt(const Jet2& a);
/// |a| with the derivative of sqrt(a^2); DomainError when |a| < slit_eps.
Jet2 abs(const Jet2& a, double slit_eps);

/// Applies a scalar function with known f, f', f'' through the chain rule.
Jet2 chain(const Jet2& a, double f, double df, double d2f);

/// Chain rule for an outer jet taken with respect to the values of
/// `inner` (outer.arity() == inner.size()); the result has the arity of
/// the inner jets and the lower of the two orders.
Jet2 compose(const Jet2& outer, std::span<const Jet2> inner);

/// Re-expresses a jet with respect to a larger coordinate tuple: the
/// jet's variables occupy positions [offset, offset + arity).
Jet2 embed(const Jet2& j, std::size_t arity, std::size_t offset, JetOrder order);

/// Truncates a jet to a lower order.
Jet2 truncate(Jet2 j, JetOrder order);

/// A real function of a declared coordinate tuple, evaluable as a jet.
class ScalarField {
 public:
  using Evaluator = std::function<Jet2(std::span<const double>, JetOrder)>;

  ScalarField() = default;
  ScalarField(std::size_t arity, Evaluator f, std::string label = {});

  static ScalarField constant(std::size_t arity, double c);
  /// The coordinate function z -> z[index].
  static ScalarField coordinate(std::size_t arity, std::size_t index);

  /// Evaluates and validates the jet (shape, finiteness, Hessian symmetry).
  Jet2 eval(std::span<const double> point, JetOrder order = JetOrder::Second) const;
  double value(std::span<const double> point) const;

  std::size_t arity() const { return arity_; }
  const std::string& label() const { return label_; }
  bool valid() const { return static_cast<bool>(f_); }

 private:
  std::size_t arity_ = 0;
  Evaluator f_;
  std::string label_;
};

Jet2 eval_jet2(const ScalarField& f, std::span<const double> point);

struct DerivativeReport {
  double gradient_deviation = 0.0;  // max |AD - FD| over gradient entries
  double hessian_deviation = 0.0;   // max |AD - FD| over Hessian entries
  double gradient_scale = 0.0;      // max |AD gradient entry|
  double hessian_scale = 0.0;       // max |AD Hessian entry|
  Vec fd_gradient;
  Mat fd_hessian;
};

/// Central-difference gradient and Hessian compared against the jet.
DerivativeReport fd_check(const ScalarField& f, std::span<const double> point, double step);

double directional_derivative(const ScalarField& f, std::span<const double> point,
                              std::span<const double> direction);

/// Symmetric Hessian by central differences of an analytic gradient.
/// `step` is scaled by (1 + |z_i|) per coordinate.
Mat fd_hessian_from_gradient(const std::function<Vec(const Vec&)>& gradient, const Vec& at,
                             double step = 1e-5);

inline std::span<const double> as_span(const Vec& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace nls
