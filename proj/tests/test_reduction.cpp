#include <doctest.h>

#include <cmath>

#include "nls/errors.hpp"
#include "nls/reduction.hpp"
#include "support.hpp"

using namespace nls;
using namespace nls::testing;

namespace {

const char* kQuartic = "0.5*v1^2 + 0.5*w1^2 + w1*v1^2";

SodeSpec oscillator() {
  return SodeSpec(1, [](const Vec& q, const Vec&) { return Vec(-q); }, "oscillator");
}

SodeSpec free_sode() {
  return SodeSpec(1, [](const Vec& q, const Vec&) { return Vec(Vec::Zero(q.size())); }, "free");
}

// Scaling action y -> e^t y with K = y; the box keeps y away from 0.
SampleOptions scaling_box(std::size_t dim, std::size_t samples = 60) {
  SampleOptions o;
  o.samples = samples;
  Vec lo = Vec::Constant(static_cast<Eigen::Index>(dim), -1.0), hi = -lo;
  lo[1] = 0.5;
  hi[1] = 1.5;
  o.box = SampleBox{lo, hi};
  return o;
}

}  // namespace

TEST_CASE("structure constants are validated") {
  ActionSpec a = translation_action({1, 2, 1e-6});
  CHECK_NOTHROW(a.check());
  a.C[0](0, 1) = 1.0;  // not antisymmetric
  CHECK_THROWS_AS(a.check(), InputError);
  a.C[0](1, 0) = -1.0;
  CHECK_NOTHROW(a.check());
}

TEST_CASE("invariance of Lagrangians under fibre translations") {
  const auto T = translation_action({1, 1, 1e-6});
  CHECK(invariance_check(lagrangian(1, 1, kQuartic), T).max == 0.0);
  const auto bad = invariance_check(lagrangian(1, 1, "0.5*v1^2 + 0.5*w1^2 + y1*v1"), T);
  CHECK(bad.max > 0.9);
  // complete lift of the scaling generator: y d/dy + w d/dw
  const auto S = action(1, 1, {{"y1"}});
  CHECK(invariance_check(lagrangian(1, 1, "0.5*v1^2 + 0.5*(w1/y1 - v1)^2"), S, scaling_box(4)).max < 1e-12);
}

TEST_CASE("momentum map") {
  const auto T = translation_action({1, 1, 1e-6});
  CHECK(momentum_map(lagrangian(1, 1, "0.5*(v1^2 + w1^2)"), T, {vec({0.3}), vec({1}), vec({2}), vec({5})})[0] == 5.0);
  const auto L = lagrangian(1, 1, kQuartic);
  CHECK(momentum_map(L, T, {vec({0}), vec({0}), vec({0.5}), vec({1})})[0] == doctest::Approx(1.25));
  const auto h = induced_splitting(L);
  CHECK(momentum_on_horizontal(L, T, h, {100}).max < 1e-9);
  // the subduced Lagrangian is the Routhian at zero momentum
  const auto sub = subduce(L, h);
  Sampler s(11);
  for (int i = 0; i < 100; ++i) {
    const auto p = PullbackPoint::from_flat(h.chart(), s.point(SampleBox::uniform(3)));
    const Vec z = concat(p.x, p.v);
    const Vec full = horizontal_map(h, p).flat();
    CHECK(sub.Lbar.value(as_span(z)) == L.L.value(as_span(full)));
  }
}

TEST_CASE("principal check") {
  const auto T = translation_action({1, 1, 1e-6});
  CHECK(principal_check(splitting(1, 1, {"0.7*v1"}), T).max == 0.0);
  CHECK(principal_check(splitting(1, 1, {"y1*v1"}), T).max > 0.9);
  const auto L = lagrangian(1, 1, kQuartic);
  CHECK(principal_check(induced_splitting(L), T, {60}).max < 1e-7);
  const auto S = action(1, 1, {{"y1"}});
  CHECK(principal_check(splitting(1, 1, {"y1*v1"}), S, scaling_box(3)).max < 1e-12);
  const auto Ls = lagrangian(1, 1, "0.5*v1^2 + 0.5*(w1/y1 - v1)^2");
  InduceOptions io;
  io.probe_box = SampleBox{vec({-1, 0.5, -1}), vec({1, 1.5, 1})};
  CHECK(principal_check(induced_splitting(Ls, io), S, scaling_box(3, 40)).max < 1e-7);
}

TEST_CASE("connection form omega") {
  const auto T = translation_action({1, 1, 1e-6});
  CHECK(omega(splitting(1, 1, {"0"}), T, {vec({0}), vec({0}), vec({1}), vec({3})})[0] == 3.0);
  const double c = 0.7;
  const auto h = splitting(1, 1, {"0.7*v1"});
  CHECK(omega(h, T, {vec({0}), vec({0}), vec({1}), vec({c})})[0] == 0.0);
  const auto K2 = action(1, 1, {{"2"}});
  CHECK(omega(h, K2, {vec({0}), vec({0}), vec({1}), vec({c + 4})})[0] == doctest::Approx(2.0));
  const auto K0 = action(1, 1, {{"0"}});
  CHECK_THROWS_AS(omega(h, K0, {vec({0}), vec({0}), vec({1}), vec({0})}), SingularMatrix);
}

TEST_CASE("i_{Delta_h} d omega detects homogeneity") {
  const auto T = translation_action({1, 1, 1e-6});
  CHECK(connection_test_domega(splitting(1, 1, {"x1*v1"}), T).max < 1e-12);
  CHECK(connection_test_domega(splitting(1, 1, {"sqrt(v1^2)"}), T).max < 1e-12);
  // v * 2v - v^2 = v^2 at each point, so the max is the largest sampled v^2
  const auto pts = sample_points(SampleBox::uniform(3), 200, 42);
  double expected = 0.0;
  for (const Vec& p : pts) expected = std::max(expected, p[2] * p[2]);
  CHECK(connection_test_domega(splitting(1, 1, {"v1^2"}), T).max == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("Xi field") {
  const auto T = translation_action({1, 1, 1e-6});
  const auto h = splitting(1, 1, {"0.7*v1"});
  const auto on = xi_field(h, T, {vec({0.2}), vec({0.1}), vec({1}), vec({0.7})});
  CHECK(on.Y[0] == 0.0);
  CHECK(on.W[0] == 0.0);
  const auto off = xi_field(h, T, {vec({0.2}), vec({0.1}), vec({1}), vec({2.7})});
  CHECK(off.Y[0] == doctest::Approx(2.0));
  CHECK(off.W[0] == 0.0);
  CHECK(max_abs(concat(off.X, off.V)) == 0.0);

  // S(Xi) = Delta_v for the scaling action, where Kdot is non-zero
  const auto S = action(1, 1, {{"y1"}});
  const auto hs = splitting(1, 1, {"y1*v1"});
  Sampler s(21);
  for (int i = 0; i < 50; ++i) {
    const auto p = TangentPointM::from_flat({1, 1, 1e-6}, s.point(*scaling_box(4).box));
    const auto lhs = vertical_endomorphism(xi_field(hs, S, p));
    const auto rhs = liouville_fields(&hs, p, LiouvilleKind::Vertical);
    CHECK(max_abs(Vec(lhs.flat() - rhs.flat())) < 1e-9);
  }
}

TEST_CASE("Vilms lift of a base SODE") {
  const double c = 0.7;
  const auto h = splitting(1, 1, {"0.7*v1"});
  const auto g = vilms_of_sode(oscillator(), h, {vec({1}), vec({0}), vec({2}), vec({2 * c})});
  CHECK(g.X[0] == 2.0);
  CHECK(g.Y[0] == doctest::Approx(2 * c));
  CHECK(g.V[0] == -1.0);
  CHECK(g.W[0] == doctest::Approx(-c));
  const auto z = vilms_of_sode(free_sode(), splitting(1, 1, {"0"}), {vec({1}), vec({0}), vec({2}), vec({3})});
  CHECK(z.flat().tail(4) == vec({2, 0, 0, 0}));

  const auto hn = splitting(1, 1, {"x1*v1 + sin(y1)*v1^2"});
  Sampler s(6);
  for (int i = 0; i < 50; ++i) {
    const auto p = TangentPointM::from_flat(hn.chart(), s.point(SampleBox::uniform(4)));
    const auto lhs = vertical_endomorphism(vilms_of_sode(oscillator(), hn, p));
    const auto rhs = liouville_fields(&hn, p, LiouvilleKind::Horizontal);
    CHECK(max_abs(Vec(lhs.flat() - rhs.flat())) < 1e-9);
  }
}

TEST_CASE("unreduction of the oscillator along h = c v") {
  const double c = 0.7;
  const auto h = splitting(1, 1, {"0.7*v1"});
  const auto T = translation_action({1, 1, 1e-6});
  const SodeSpec gamma = unreduce(oscillator(), h, T);
  CHECK(gamma.dof() == 2);
  CHECK(submersion_residual(gamma, oscillator(), h.chart(), {100}).max == 0.0);
  const auto tr = gamma.integrate(vec({1, 0, 0, 0}), 0, 10, 1e-3);
  double drift = 0.0, base = 0.0;
  for (std::size_t k = 0; k < tr.size(); ++k) {
    drift = std::max(drift, std::abs(tr.states[k][3] - c * tr.states[k][2]));
    base = std::max(base, std::abs(tr.states[k][0] - std::cos(tr.times[k])));
  }
  CHECK(drift < 1e-7);
  CHECK(base < 1e-6);
  // y follows the integral of h = c v, i.e. c (x - x0)
  CHECK(std::abs(tr.final_state()[1] - c * (std::cos(10.0) - 1)) < 1e-6);

  const SodeSpec fr = unreduce(free_sode(), splitting(1, 1, {"0"}), T);
  CHECK(fr.force(vec({1, 2}), vec({3, 4})) == vec({0, 0}));
}

TEST_CASE("unreduction under the scaling action stays horizontal") {
  const auto S = action(1, 1, {{"y1"}});
  const auto h = splitting(1, 1, {"y1*v1"});
  const SodeSpec gamma = unreduce(oscillator(), h, S, scaling_box(3));
  const auto tr = gamma.integrate(vec({0.5, 1, 0.3, 0.3}), 0, 10, 1e-3);
  double drift = 0.0;
  for (const Vec& s : tr.states) drift = std::max(drift, std::abs(s[3] - s[1] * s[2]));
  CHECK(drift < 1e-6);
}

TEST_CASE("unreduction refuses non-principal splittings") {
  CHECK_THROWS_AS(unreduce(oscillator(), splitting(1, 1, {"y1*v1"}), translation_action({1, 1, 1e-6})), NotPrincipal);
}

TEST_CASE("generator flows") {
  const auto S = action(1, 1, {{"y1"}});
  const auto f = generator_flow(S, 0, vec({0.3}), vec({0.8}), 0.5);
  CHECK(std::abs(f.y[0] - 0.8 * std::exp(0.5)) < 1e-9);
  CHECK(std::abs(f.jac_y(0, 0) - std::exp(0.5)) < 1e-9);
  CHECK(f.jac_x(0, 0) == 0.0);
  const auto b = generator_flow(S, 0, vec({0.3}), f.y, -0.5);
  CHECK(std::abs(b.y[0] - 0.8) < 1e-9);
  const auto blow = action(1, 1, {{"y1^2"}});
  CHECK_THROWS_AS(generator_flow(blow, 0, vec({0}), vec({1}), 2.0, 200), FlowEscape);
}

TEST_CASE("Vilms lift of a principal splitting is principal") {
  const auto T = translation_action({1, 1, 1e-6});
  SampleOptions o;
  o.samples = 40;
  const std::vector<double> ts{-0.7, 0.3, 1.1};
  CHECK(vilms_principal_check(splitting(1, 1, {"x1*v1 + v1^2"}), T, ts, o).max < 1e-6);
  CHECK(vilms_principal_check(splitting(1, 1, {"y1*v1"}), T, ts, o).max > 0.1);
  CHECK(vilms_principal_check(splitting(1, 1, {"y1*v1"}), T, {0.0}, o).max == 0.0);
  const auto S = action(1, 1, {{"y1"}});
  o.box = SampleBox{vec({-1, 0.5, -1, -1, -1, -1, -1, -1}), vec({1, 1.5, 1, 1, 1, 1, 1, 1})};
  CHECK(vilms_principal_check(splitting(1, 1, {"y1*v1"}), S, {0.4}, o).max < 1e-6);
}

TEST_CASE("magnetic system: trivial and oscillator models") {
  MagneticText t;
  t.A_fibre = {"0.4"};
  const auto sys = magnetic_lp_system(t.build());
  CHECK(max_abs(Vec(sys.rhs(vec({0.3, 0.5, -0.2})).tail(2))) == 0.0);

  MagneticText o;
  o.V = "0.5*x1^2";
  const auto so = magnetic_lp_system(o.build());
  CHECK(so.rhs(vec({0.3, 0.5, -0.2})) == vec({0.5, -0.3, 0}));
}

TEST_CASE("magnetic system conserves the fibre momentum without Upsilon and C") {
  MagneticText t;
  t.n = 2;
  t.m = 2;
  t.g = {{"2 + sin(x1)^2", "0.1*x2"}, {"0.1*x2", "1.5"}};
  t.k = (Mat(2, 2) << 2, 0.5, 0.5, 1).finished();
  t.V = "x1^2 + cos(x2)";
  t.A_base = {"x2", "0.3*x1^2"};
  t.A_fibre = {"0.4", "-1.2"};
  t.Kcurv = {{{"0", "x1"}, {"-x1", "0"}}, {{"0", "1"}, {"-1", "0"}}};
  const MagneticModel M = t.build();
  const auto tr = magnetic_lp_system(M).integrate(vec({0.1, -0.2, 0.3, 0.1, 0.5, -0.4}), 0, 10, 1e-3);
  const Vec p0 = M.k * tr.states.front().tail(2) + vec({0.4, -1.2});
  double worst = 0.0;
  for (const Vec& s : tr.states) worst = std::max(worst, max_abs(Vec(M.k * s.tail(2) + vec({0.4, -1.2}) - p0)));
  CHECK(worst < 1e-7);
}

TEST_CASE("magnetic model validation") {
  MagneticText t;
  t.m = 2;
  // C^1_12 = 1 alone: k_1d C^d_12 + k_1d C^d_12 = 2 k_11, never zero
  t.C = {(Mat(2, 2) << 0, 1, -1, 0).finished(), Mat::Zero(2, 2)};
  CHECK_THROWS_AS(t.build().check(), InputError);
  MagneticText g;
  g.g = {{"-1"}};
  CHECK_THROWS_AS(g.build().check(), InputError);
}

TEST_CASE("induced splitting of the magnetic Lagrangian") {
  MagneticText t;
  t.A_fibre = {"sin(x1)"};
  const auto h = magnetic_induced_splitting(t.build());
  CHECK(h.value({vec({0.5}), vec({0}), vec({0.3})})[0] == -std::sin(0.5));
  CHECK(classify(h).verdict == Verdict::Affine);
  MagneticText z;
  CHECK(classify(magnetic_induced_splitting(z.build())).verdict == Verdict::Ehresmann);
  MagneticText s;
  s.k = Mat::Constant(1, 1, 2.0);
  s.A_fibre = {"6"};
  CHECK(magnetic_induced_splitting(s.build()).value({vec({0}), vec({0}), vec({1})})[0] == doctest::Approx(-3.0));
}

TEST_CASE("decoupling with a constant fibre potential") {
  MagneticText t;
  t.V = "0.5*x1^2";
  t.A_base = {"0.3*x1"};
  t.A_fibre = {"0.8"};
  const MagneticModel M = t.build();
  const auto r = decoupling_check(M, {100});
  CHECK(r.decoupled);
  CHECK(r.residual == 0.0);
  CHECK(r.wbar_sensitivity < 1e-9);
  REQUIRE(r.base_el_mismatch);
  CHECK(*r.base_el_mismatch < 1e-9);
  const auto full = magnetic_lp_system(M).integrate(vec({1, 0, 0.5}), 0, 10, 1e-3);
  const auto base = euler_lagrange_sode(magnetic_base_lagrangian(M), 1).integrate(vec({1, 0}), 0, 10, 1e-3);
  double worst = 0.0;
  for (std::size_t k = 0; k < full.size(); ++k) worst = std::max(worst, std::abs(full.states[k][0] - base.states[k][0]));
  CHECK(worst < 1e-6);
}

TEST_CASE("coupling through a varying fibre potential") {
  MagneticText t;
  t.A_fibre = {"x1"};
  const MagneticModel M = t.build();
  Sampler s(2);
  for (int i = 0; i < 50; ++i) {
    const Vec z = s.point(SampleBox::uniform(2));
    CHECK(std::abs(decoupling_residual(M, z.head(1), z.tail(1)) - 1.0) < 1e-9);
  }
  const auto r = decoupling_check(M);
  CHECK_FALSE(r.decoupled);
  CHECK(r.wbar_sensitivity > 0.1);
  CHECK_FALSE(r.base_el_mismatch);
}

TEST_CASE("decoupling through Upsilon cancellation") {
  MagneticText t;
  t.m = 2;
  t.A_fibre = {"cos(x1)", "-sin(x1)"};
  // Upsilon^1_12 = 1, Upsilon^2_11 = -1
  t.Upsilon = {{{"0", "1"}, {"-1", "0"}}};
  const MagneticModel M = t.build();
  const auto r = decoupling_check(M, {100});
  CHECK(r.residual < 1e-15);
  CHECK(r.decoupled);
  CHECK(r.wbar_sensitivity < 1e-9);
  REQUIRE(r.base_el_mismatch);
  CHECK(*r.base_el_mismatch < 1e-9);
  CHECK(max_abs(magnetic_quadratic_term(M, vec({0.3}), vec({0.7, -1.1}))) < 1e-15);
}
