#include "nls/numerics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "nls/errors.hpp"

namespace nls {

namespace {

bool all_finite(const Vec& v) { return v.allFinite(); }

// Scales each row to unit max-norm; throws on an all-zero row.
Vec row_scales(const Mat& a) {
  Vec s(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double r = a.row(i).cwiseAbs().maxCoeff();
    if (!(r > 0.0)) {
      throw SingularMatrix("row " + std::to_string(i) + " is zero");
    }
    s[i] = 1.0 / r;
  }
  return s;
}

}  // namespace

double condition_estimate(const Mat& a) {
  if (a.rows() == 0) return 1.0;
  const Vec s = row_scales(a);
  const Mat scaled = s.asDiagonal() * a;
  Eigen::PartialPivLU<Mat> lu(scaled);
  const double rc = lu.rcond();
  return rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
}

Vec linear_solve(const LinearSystem& sys, const LinearSolveOptions& opts) {
  const Mat& a = sys.matrix;
  if (a.rows() != a.cols()) throw SingularMatrix("matrix is not square");
  if (a.rows() != sys.rhs.size()) throw SingularMatrix("rhs size does not match matrix");
  if (!a.allFinite() || !all_finite(sys.rhs)) throw SingularMatrix("non-finite entries");
  if (a.rows() == 0) return Vec(0);

  const Vec s = row_scales(a);
  const Mat scaled = s.asDiagonal() * a;
  Eigen::PartialPivLU<Mat> lu(scaled);
  const Mat& packed = lu.matrixLU();
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    if (!(std::abs(packed(i, i)) >= opts.pivot_tol)) {
      std::ostringstream msg;
      msg << "pivot " << i << " has magnitude " << std::abs(packed(i, i));
      throw SingularMatrix(msg.str());
    }
  }
  const double rc = lu.rcond();
  if (!(rc * opts.max_condition >= 1.0)) {
    throw SingularMatrix("condition estimate exceeds bound");
  }
  Vec x = lu.solve(s.asDiagonal() * sys.rhs);
  // one step of iterative refinement keeps the residual at roundoff level
  const Vec r = sys.rhs - a * x;
  x += lu.solve(s.asDiagonal() * r);
  return x;
}

NewtonResult newton_solve(const NewtonProblem& p) {
  if (!(p.tol > 0.0)) throw InputError("tol must be positive");
  if (p.max_iter < 1) throw InputError("max_iter must be at least 1");

  NewtonResult out;
  out.x = p.initial_guess;
  Vec f = p.residual(out.x);
  double norm = f.lpNorm<Eigen::Infinity>();
  if (!std::isfinite(norm)) throw NoConvergence("residual is not finite at the initial guess");

  for (int it = 0; it < p.max_iter; ++it) {
    if (norm <= p.tol) {
      out.residual_norm = norm;
      return out;
    }
    const Vec step = linear_solve({p.jacobian(out.x), -f});
    double lambda = 1.0;
    Vec trial = out.x + step;
    Vec ftrial = p.residual(trial);
    double tnorm = ftrial.lpNorm<Eigen::Infinity>();
    for (int halving = 0; halving < 20 && !(tnorm < norm); ++halving) {
      lambda *= 0.5;
      trial = out.x + lambda * step;
      ftrial = p.residual(trial);
      tnorm = ftrial.lpNorm<Eigen::Infinity>();
    }
    out.x = std::move(trial);
    f = std::move(ftrial);
    norm = tnorm;
    out.iterations = it + 1;
    if (!std::isfinite(norm)) break;
  }
  if (norm <= p.tol) {
    out.residual_norm = norm;
    return out;
  }
  std::ostringstream msg;
  msg << "Newton did not converge in " << p.max_iter << " iterations (residual " << norm << ")";
  throw NoConvergence(msg.str());
}

std::size_t rk4_step_count(double t0, double t1, double dt) {
  const double ratio = (t1 - t0) / dt;
  auto n = static_cast<std::size_t>(std::ceil(ratio - 1e-9));
  return n == 0 ? 1 : n;
}

TrajectoryRecord rk4_integrate(const IvpProblem& p) {
  if (!(p.t1 > p.t0)) throw InputError("t1 must exceed t0");
  if (!(p.dt > 0.0) || p.dt > (p.t1 - p.t0) * (1.0 + 1e-12)) {
    throw InputError("dt must lie in (0, t1 - t0]");
  }
  if (!all_finite(p.state0)) throw NonFiniteState("initial state is not finite");

  const std::size_t steps = rk4_step_count(p.t0, p.t1, p.dt);
  TrajectoryRecord rec;
  rec.times.reserve(steps + 1);
  rec.states.reserve(steps + 1);
  rec.times.push_back(p.t0);
  rec.states.push_back(p.state0);

  Vec x = p.state0;
  auto eval = [&](double t, const Vec& s) {
    Vec k = p.vector_field(t, s);
    if (!all_finite(k)) {
      std::ostringstream msg;
      msg << "vector field is not finite at t = " << t;
      throw NonFiniteState(msg.str());
    }
    return k;
  };

  for (std::size_t k = 0; k < steps; ++k) {
    const double t = p.t0 + static_cast<double>(k) * p.dt;
    const double tn = (k + 1 == steps) ? p.t1 : p.t0 + static_cast<double>(k + 1) * p.dt;
    const double h = tn - t;
    const Vec k1 = eval(t, x);
    const Vec k2 = eval(t + 0.5 * h, x + 0.5 * h * k1);
    const Vec k3 = eval(t + 0.5 * h, x + 0.5 * h * k2);
    const Vec k4 = eval(tn, x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!all_finite(x)) {
      std::ostringstream msg;
      msg << "state is not finite at t = " << tn;
      throw NonFiniteState(msg.str());
    }
    rec.times.push_back(tn);
    rec.states.push_back(x);
  }
  return rec;
}

}  // namespace nls
