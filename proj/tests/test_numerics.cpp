#include <doctest.h>

#include <cmath>

#include "nls/errors.hpp"
#include "nls/numerics.hpp"
#include "support.hpp"

using namespace nls;
using nls::testing::vec;

namespace {

double bisect(double (*f)(double), double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if ((f(lo) < 0) == (f(mid) < 0)) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double rk4_exp_error(double dt) {
  IvpProblem p;
  p.vector_field = [](double, const Vec& x) { return x; };
  p.state0 = vec({1.0});
  p.dt = dt;
  return std::abs(rk4_integrate(p).final_state()[0] - std::exp(1.0));
}

}  // namespace

TEST_CASE("linear_solve small systems") {
  CHECK(linear_solve({Mat::Constant(1, 1, 2.0), vec({6})})[0] == doctest::Approx(3.0));
  const Vec x = linear_solve({Mat::Identity(3, 3), vec({1, 2, 3})});
  CHECK(x == vec({1, 2, 3}));
  Mat a(2, 2);
  a << 1, 1, 0, 0;
  CHECK_THROWS_AS(linear_solve({a, vec({1, 1})}), SingularMatrix);
  CHECK_THROWS_AS(linear_solve({Mat::Zero(2, 3), vec({1, 1})}), SingularMatrix);
}

TEST_CASE("linear_solve residual bound on random well-conditioned systems") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + trial % 6;
    Mat a = Mat::Identity(k, k) * 3.0;
    Vec b(k);
    for (int i = 0; i < k; ++i) {
      b[i] = 100 * d(rng);
      for (int j = 0; j < k; ++j) a(i, j) += d(rng);
    }
    const Vec x = linear_solve({a, b});
    CHECK((a * x - b).lpNorm<Eigen::Infinity>() <= 1e-10 * (1 + b.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("linear_solve rejects nearly singular matrices") {
  Mat a(2, 2);
  a << 1, 1, 1, 1 + 1e-16;
  CHECK_THROWS_AS(linear_solve({a, vec({1, 2})}), SingularMatrix);
}

TEST_CASE("newton on a linear residual takes one iteration") {
  NewtonProblem p;
  const double v = 2.0;
  p.residual = [v](const Vec& w) { return Vec(w.array() + v * v); };
  p.jacobian = [](const Vec&) { return Mat(Mat::Identity(1, 1)); };
  p.initial_guess = vec({0});
  const auto r = newton_solve(p);
  CHECK(r.x[0] == doctest::Approx(-4.0));
  CHECK(r.iterations == 1);
}

TEST_CASE("newton on a cubic matches bisection") {
  NewtonProblem p;
  p.residual = [](const Vec& w) { return vec({w[0] * w[0] * w[0] - 8}); };
  p.jacobian = [](const Vec& w) { return Mat(Mat::Constant(1, 1, 3 * w[0] * w[0])); };
  p.initial_guess = vec({3});
  const double oracle = bisect([](double w) { return w * w * w - 8; }, 0.0, 3.0);
  CHECK(std::abs(newton_solve(p).x[0] - oracle) < 1e-10);
}

TEST_CASE("newton without a real root fails") {
  NewtonProblem p;
  p.residual = [](const Vec& w) { return vec({w[0] * w[0] + 1}); };
  p.jacobian = [](const Vec& w) { return Mat(Mat::Constant(1, 1, 2 * w[0])); };
  p.initial_guess = vec({0});
  CHECK_THROWS_AS(newton_solve(p), NumericalError);
  p.initial_guess = vec({0.5});
  CHECK_THROWS_AS(newton_solve(p), NumericalError);
}

TEST_CASE("newton validates its parameters") {
  NewtonProblem p;
  p.residual = [](const Vec& w) { return w; };
  p.jacobian = [](const Vec&) { return Mat(Mat::Identity(1, 1)); };
  p.initial_guess = vec({1});
  p.tol = 0;
  CHECK_THROWS_AS(newton_solve(p), InputError);
  p.tol = 1e-10;
  p.max_iter = 0;
  CHECK_THROWS_AS(newton_solve(p), InputError);
}

TEST_CASE("rk4 constant and exponential") {
  IvpProblem p;
  p.vector_field = [](double, const Vec& x) { return Vec(Vec::Zero(x.size())); };
  p.state0 = vec({5});
  p.dt = 0.3;
  const auto rec = rk4_integrate(p);
  CHECK(rec.final_state()[0] == 5.0);
  CHECK(rec.times.back() == 1.0);
  CHECK(rec.size() == 5);  // steps 0.3, 0.6, 0.9 and a final 0.1
  CHECK(rk4_exp_error(0.01) < 1e-8);
}

TEST_CASE("rk4 is fourth order") {
  for (double dt : {0.1, 0.05, 0.02}) {
    const double ratio = rk4_exp_error(dt) / rk4_exp_error(dt / 2);
    CHECK(ratio >= 14.0);
    CHECK(ratio <= 18.0);
  }
}

TEST_CASE("rk4 reports blow-up") {
  IvpProblem p;
  p.vector_field = [](double, const Vec& x) { return Vec(x.cwiseInverse()); };
  p.state0 = vec({0.0});
  CHECK_THROWS_AS(rk4_integrate(p), NonFiniteState);
  p.state0 = vec({1.0});
  p.vector_field = [](double, const Vec& x) { return Vec(x.array().square() * 100.0); };
  p.t1 = 10;
  CHECK_THROWS_AS(rk4_integrate(p), NonFiniteState);
}

TEST_CASE("rk4 validates the interval") {
  IvpProblem p;
  p.vector_field = [](double, const Vec& x) { return x; };
  p.state0 = vec({1});
  p.t1 = 0;
  CHECK_THROWS_AS(rk4_integrate(p), InputError);
  p.t1 = 1;
  p.dt = 2;
  CHECK_THROWS_AS(rk4_integrate(p), InputError);
}
