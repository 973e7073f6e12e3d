#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "nls/jet.hpp"

namespace nls {

/// Dimensions of pi: M -> N in one adapted chart (x^i, y^a).
struct BundleChart {
  std::size_t n = 1;  // base dimension
  std::size_t m = 1;  // fibre dimension
  double slit_eps = 1e-6;

  /// Throws InputError unless n, m >= 1 and slit_eps > 0.
  void validate() const;
  /// |v|_2 < slit_eps.
  bool in_slit(const Vec& v) const;
};

/// A point (x, y, v, w) of TM.
struct TangentPointM {
  Vec x, y, v, w;

  Vec flat() const;
  static TangentPointM from_flat(const BundleChart& c, const Vec& z);
  void check(const BundleChart& c) const;
};

/// A point (x, y, v) of the pullback bundle pi*TN.
struct PullbackPoint {
  Vec x, y, v;

  Vec flat() const;
  static PullbackPoint from_flat(const BundleChart& c, const Vec& z);
  void check(const BundleChart& c) const;
};

/// A point (x, y, v, w, X, Y, V, W) of TTM.
struct SecondTangentPoint {
  Vec x, y, v, w, X, Y, V, W;

  Vec flat() const;
  static SecondTangentPoint from_flat(const BundleChart& c, const Vec& z);
  /// Base point with all fibre blocks (X, Y, V, W) zero.
  static SecondTangentPoint zero_at(const TangentPointM& p);
  TangentPointM base() const { return {x, y, v, w}; }
  void check(const BundleChart& c) const;
};

/// Values and Jacobian of a vector-valued map at a point.
struct FieldJet {
  Vec value;
  Mat jacobian;  // empty when evaluated at JetOrder::Value
};

/// A vector-valued map of `arity` coordinates with `dim` components.
///
/// Vector fields on M have arity = dim = n + m; base fields on N have
/// arity = dim = n. The evaluator may compute all components jointly.
class VectorField {
 public:
  using Evaluator = std::function<std::vector<Jet2>(std::span<const double>, JetOrder)>;

  VectorField() = default;
  VectorField(std::size_t arity, std::size_t dim, Evaluator f);
  explicit VectorField(std::vector<ScalarField> components);

  /// Constant components c, arity `arity`.
  static VectorField constant(std::size_t arity, const Vec& c);

  FieldJet eval(std::span<const double> point, JetOrder order = JetOrder::First) const;
  std::vector<Jet2> eval_jets(std::span<const double> point, JetOrder order) const;
  Vec value(std::span<const double> point) const { return eval(point, JetOrder::Value).value; }

  std::size_t arity() const { return arity_; }
  std::size_t dim() const { return dim_; }

 private:
  std::size_t arity_ = 0;
  std::size_t dim_ = 0;
  Evaluator f_;
};

/// mu(x, y, v, w) = (x, y, v).
PullbackPoint mu(const TangentPointM& p);

/// Swaps the (v, w) and (X, Y) blocks.
SecondTangentPoint canonical_flip(const SecondTangentPoint& s);

/// (w1, w2)^v: tangent to t -> w1 + t w2 at t = 0. BasePointMismatch
/// unless w1 and w2 share (x, y).
SecondTangentPoint vertical_lift(const TangentPointM& w1, const TangentPointM& w2);

/// Z^c at a point of TM, for a field Z on M.
SecondTangentPoint complete_lift(const VectorField& z, const TangentPointM& at);

/// Liouville field u^a d/du^a.
SecondTangentPoint liouville(const TangentPointM& at);

/// S = dq^a (x) d/du^a: moves (X, Y) into (V, W).
SecondTangentPoint vertical_endomorphism(const SecondTangentPoint& s);

/// [Z1, Z2] = DZ2 Z1 - DZ1 Z2 for fields with arity == dim.
Vec lie_bracket(const VectorField& z1, const VectorField& z2, std::span<const double> at);

/// Concatenates blocks into one vector.
template <class... Blocks>
Vec concat(const Blocks&... blocks) {
  Vec out((blocks.size() + ... + 0));
  Eigen::Index at = 0;
  ((out.segment(at, blocks.size()) = blocks, at += blocks.size()), ...);
  return out;
}

}  // namespace nls
