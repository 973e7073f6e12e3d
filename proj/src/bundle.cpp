#include "nls/bundle.hpp"

#include <string>

#include "nls/errors.hpp"

namespace nls {

namespace {

void expect_size(const Vec& v, std::size_t k, const char* what) {
  if (static_cast<std::size_t>(v.size()) != k) {
    throw DimensionMismatch(std::string(what) + " has size " + std::to_string(v.size()) +
                            ", expected " + std::to_string(k));
  }
}

// Splits z into consecutive blocks of the given sizes.
std::vector<Vec> split(const Vec& z, std::initializer_list<std::size_t> sizes) {
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  if (static_cast<std::size_t>(z.size()) != total) {
    throw DimensionMismatch("flat vector has size " + std::to_string(z.size()) + ", expected " +
                            std::to_string(total));
  }
  std::vector<Vec> out;
  Eigen::Index at = 0;
  for (auto s : sizes) {
    out.push_back(z.segment(at, static_cast<Eigen::Index>(s)));
    at += static_cast<Eigen::Index>(s);
  }
  return out;
}

}  // namespace

void BundleChart::validate() const {
  if (n < 1 || m < 1) throw InputError("base and fibre dimensions must be at least 1");
  if (!(slit_eps > 0.0)) throw InputError("slit_eps must be positive");
}

bool BundleChart::in_slit(const Vec& v) const { return v.norm() < slit_eps; }

Vec TangentPointM::flat() const { return concat(x, y, v, w); }

TangentPointM TangentPointM::from_flat(const BundleChart& c, const Vec& z) {
  auto b = split(z, {c.n, c.m, c.n, c.m});
  return {b[0], b[1], b[2], b[3]};
}

void TangentPointM::check(const BundleChart& c) const {
  expect_size(x, c.n, "x");
  expect_size(y, c.m, "y");
  expect_size(v, c.n, "v");
  expect_size(w, c.m, "w");
}

Vec PullbackPoint::flat() const { return concat(x, y, v); }

PullbackPoint PullbackPoint::from_flat(const BundleChart& c, const Vec& z) {
  auto b = split(z, {c.n, c.m, c.n});
  return {b[0], b[1], b[2]};
}

void PullbackPoint::check(const BundleChart& c) const {
  expect_size(x, c.n, "x");
  expect_size(y, c.m, "y");
  expect_size(v, c.n, "v");
}

Vec SecondTangentPoint::flat() const { return concat(x, y, v, w, X, Y, V, W); }

SecondTangentPoint SecondTangentPoint::from_flat(const BundleChart& c, const Vec& z) {
  auto b = split(z, {c.n, c.m, c.n, c.m, c.n, c.m, c.n, c.m});
  return {b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]};
}

SecondTangentPoint SecondTangentPoint::zero_at(const TangentPointM& p) {
  return {p.x,
          p.y,
          p.v,
          p.w,
          Vec::Zero(p.x.size()),
          Vec::Zero(p.y.size()),
          Vec::Zero(p.v.size()),
          Vec::Zero(p.w.size())};
}

void SecondTangentPoint::check(const BundleChart& c) const {
  base().check(c);
  expect_size(X, c.n, "X");
  expect_size(Y, c.m, "Y");
  expect_size(V, c.n, "V");
  expect_size(W, c.m, "W");
}

VectorField::VectorField(std::size_t arity, std::size_t dim, Evaluator f)
    : arity_(arity), dim_(dim), f_(std::move(f)) {}

VectorField::VectorField(std::vector<ScalarField> components) : dim_(components.size()) {
  if (components.empty()) throw InputError("vector field needs at least one component");
  arity_ = components.front().arity();
  for (const auto& c : components) {
    if (c.arity() != arity_) throw DimensionMismatch("vector field components differ in arity");
  }
  f_ = [comps = std::move(components)](std::span<const double> p, JetOrder order) {
    std::vector<Jet2> out;
    out.reserve(comps.size());
    for (const auto& c : comps) out.push_back(c.eval(p, order));
    return out;
  };
}

VectorField VectorField::constant(std::size_t arity, const Vec& c) {
  return VectorField(arity, static_cast<std::size_t>(c.size()),
                     [arity, c](std::span<const double>, JetOrder order) {
                       std::vector<Jet2> out;
                       for (Eigen::Index i = 0; i < c.size(); ++i) {
                         out.push_back(Jet2::constant(c[i], arity, order));
                       }
                       return out;
                     });
}

std::vector<Jet2> VectorField::eval_jets(std::span<const double> point, JetOrder order) const {
  if (!f_) throw InputError("vector field is empty");
  if (point.size() != arity_) {
    throw DimensionMismatch("vector field expects " + std::to_string(arity_) + " coordinates, got " +
                            std::to_string(point.size()));
  }
  auto jets = f_(point, order);
  if (jets.size() != dim_) throw DimensionMismatch("vector field returned wrong component count");
  return jets;
}

FieldJet VectorField::eval(std::span<const double> point, JetOrder order) const {
  const auto jets = eval_jets(point, order);
  FieldJet out;
  out.value.resize(static_cast<Eigen::Index>(dim_));
  if (order != JetOrder::Value) out.jacobian.resize(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(arity_));
  for (std::size_t k = 0; k < dim_; ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    out.value[r] = jets[k].value;
    if (order != JetOrder::Value) out.jacobian.row(r) = jets[k].gradient.transpose();
  }
  return out;
}

PullbackPoint mu(const TangentPointM& p) { return {p.x, p.y, p.v}; }

SecondTangentPoint canonical_flip(const SecondTangentPoint& s) {
  return {s.x, s.y, s.X, s.Y, s.v, s.w, s.V, s.W};
}

SecondTangentPoint vertical_lift(const TangentPointM& w1, const TangentPointM& w2) {
  if (w1.x.size() != w2.x.size() || w1.y.size() != w2.y.size() || w1.x != w2.x || w1.y != w2.y) {
    throw BasePointMismatch("vertical lift needs tangent vectors at the same point of M");
  }
  SecondTangentPoint s = SecondTangentPoint::zero_at(w1);
  s.V = w2.v;
  s.W = w2.w;
  return s;
}

SecondTangentPoint complete_lift(const VectorField& z, const TangentPointM& at) {
  const std::size_t n = static_cast<std::size_t>(at.x.size());
  const std::size_t m = static_cast<std::size_t>(at.y.size());
  if (z.arity() != n + m || z.dim() != n + m) throw DimensionMismatch("complete lift needs a field on M");
  const Vec q = concat(at.x, at.y);
  const Vec u = concat(at.v, at.w);
  const FieldJet fj = z.eval(as_span(q), JetOrder::First);
  const Vec du = fj.jacobian * u;
  SecondTangentPoint s = SecondTangentPoint::zero_at(at);
  const auto ni = static_cast<Eigen::Index>(n);
  const auto mi = static_cast<Eigen::Index>(m);
  s.X = fj.value.head(ni);
  s.Y = fj.value.tail(mi);
  s.V = du.head(ni);
  s.W = du.tail(mi);
  return s;
}

SecondTangentPoint liouville(const TangentPointM& at) {
  SecondTangentPoint s = SecondTangentPoint::zero_at(at);
  s.V = at.v;
  s.W = at.w;
  return s;
}

SecondTangentPoint vertical_endomorphism(const SecondTangentPoint& s) {
  SecondTangentPoint out = s;
  out.V = s.X;
  out.W = s.Y;
  out.X.setZero();
  out.Y.setZero();
  return out;
}

Vec lie_bracket(const VectorField& z1, const VectorField& z2, std::span<const double> at) {
  if (z1.arity() != z1.dim() || z2.arity() != z2.dim() || z1.arity() != z2.arity()) {
    throw DimensionMismatch("lie bracket needs two fields on the same space");
  }
  const FieldJet a = z1.eval(at, JetOrder::First);
  const FieldJet b = z2.eval(at, JetOrder::First);
  const auto k = static_cast<Eigen::Index>(z1.dim());
  Vec out(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) acc += b.jacobian(r, c) * a.value[c] - a.jacobian(r, c) * b.value[c];
    out[r] = acc;
  }
  return out;
}

}  // namespace nls
