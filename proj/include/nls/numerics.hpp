#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nls {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct LinearSystem {
  Mat matrix;
  Vec rhs;
};

struct LinearSolveOptions {
  double pivot_tol = 1e-13;       // relative to the row scale
  double max_condition = 1e14;    // reciprocal-condition guard
};

/// Solves A x = b by row-equilibrated LU with partial pivoting.
/// Throws SingularMatrix when a pivot falls below pivot_tol (rows are
/// scaled to unit max-norm first) or the condition estimate exceeds
/// max_condition.
Vec linear_solve(const LinearSystem& sys, const LinearSolveOptions& opts = {});

/// Condition estimate (1-norm, via LU) of the row-equilibrated matrix.
double condition_estimate(const Mat& a);

struct NewtonProblem {
  std::function<Vec(const Vec&)> residual;
  std::function<Mat(const Vec&)> jacobian;
  Vec initial_guess;
  double tol = 1e-10;
  int max_iter = 50;
};

struct NewtonResult {
  Vec x;
  int iterations = 0;
  double residual_norm = 0.0;
};

/// Damped Newton iteration. The step is halved (up to 20 times) while
/// the infinity norm of the residual fails to decrease.
NewtonResult newton_solve(const NewtonProblem& p);

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<std::string> diagnostic_names;
  std::vector<Vec> diagnostics;  // one row per recorded time, may be empty

  std::size_t size() const { return times.size(); }
  const Vec& final_state() const { return states.back(); }
};

struct IvpProblem {
  std::function<Vec(double, const Vec&)> vector_field;
  Vec state0;
  double t0 = 0.0;
  double t1 = 1.0;
  double dt = 1e-2;
};

/// Number of steps the fixed-step integrator takes on [t0, t1].
std::size_t rk4_step_count(double t0, double t1, double dt);

/// Classical fixed-step RK4. The last step is shortened to land on t1.
/// Records the state at t0 and after every step.
TrajectoryRecord rk4_integrate(const IvpProblem& p);

}  // namespace nls
