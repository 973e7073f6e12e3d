#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "nls/splitting.hpp"

namespace nls {

/// A Lagrangian L(x, y, v, w) on TM.
struct LagrangianSpec {
  BundleChart chart;
  ScalarField L;  // arity 2(n + m)
  std::optional<double> homogeneity_degree;
  bool smooth_at_zero = true;  // false when L involves abs or sqrt

  void check() const;
};

/// Second-order equations q'' = f(q, u) on a configuration space of
/// dimension `dof`; states are flat (q, u).
class SodeSpec {
 public:
  using Force = std::function<Vec(const Vec& q, const Vec& u)>;

  SodeSpec() = default;
  SodeSpec(std::size_t dof, Force f, std::string provenance);

  Vec force(const Vec& q, const Vec& u) const;
  /// (u, f(q, u)) at the flat state (q, u).
  Vec vector_field(const Vec& state) const;
  TrajectoryRecord integrate(const Vec& state0, double t0, double t1, double dt) const;

  std::size_t dof() const { return dof_; }
  const std::string& provenance() const { return provenance_; }

 private:
  std::size_t dof_ = 0;
  Force f_;
  std::string provenance_;
};

/// Autonomous first-order system s' = F(s).
struct FirstOrderSystem {
  std::size_t dim = 0;
  std::function<Vec(const Vec&)> rhs;

  TrajectoryRecord integrate(const Vec& state0, double t0, double t1, double dt) const;
};

/// Euler-Lagrange equations of L(q, u) with `dof` coordinates q: solves
/// L_uu f = L_q - L_uq u at each point. SingularHessian when L_uu is singular.
SodeSpec euler_lagrange_sode(const ScalarField& L, std::size_t dof);
SodeSpec euler_lagrange_sode(const LagrangianSpec& L);

/// Energy u . dL/du - L at the flat state (q, u).
double lagrangian_energy(const ScalarField& L, const Vec& state);

struct RegularityReport {
  double det = 0.0;        // det of d2L/dw dw
  double condition = 0.0;  // condition estimate, infinite when singular
  bool regular = false;    // det != 0 and condition below 1e14
};

RegularityReport fibre_regularity(const LagrangianSpec& L, const TangentPointM& at);

struct InduceOptions {
  double tol = 1e-10;
  int max_iter = 50;
  int continuation_steps = 10;  // ray parameter step 1 / continuation_steps
  bool probe = true;            // branch probe at construction
  std::size_t probe_points = 5;
  std::uint64_t probe_seed = 42;
  std::optional<SampleBox> probe_box;  // (x, y, v), default [-1, 1]
};

struct InducedSolve {
  Vec w;
  int final_iterations = 0;  // Newton iterations of the last continuation step
  int total_iterations = 0;
  double residual = 0.0;     // |dL/dw| at the solution
};

/// Solves dL/dw (x, y, v, w) = 0 for w by continuation along s v, s = 0..1,
/// seeding each step with the previous root (first seed w = 0).
InducedSolve induced_solve(const LagrangianSpec& L, const PullbackPoint& p, const InduceOptions& opts = {});

/// Runs Newton from ten seeds at sample points; BranchAmbiguity when two
/// seeds converge to different roots.
void branch_probe(const LagrangianSpec& L, const InduceOptions& opts = {});

/// The Newton-backed splitting h with dL/dw o h = 0. Gradients of h come from
/// the implicit function formula dh/dz = -(L_ww)^-1 L_wz.
SplittingSpec induced_splitting(const LagrangianSpec& L, const InduceOptions& opts = {});

/// max over samples of |dL/dw o h|.
ResidualSummary defining_relation_check(const LagrangianSpec& L, const SplittingSpec& h,
                                        const SampleOptions& opts = {});

/// max over samples (x, y, v) and a of |(dL/dy^a) o h|.
ResidualSummary symmetry_condition_check(const LagrangianSpec& L, const SplittingSpec& h,
                                         const SampleOptions& opts = {});

/// max over samples on the horizontal manifold of |Gamma_L(dL/dw^a)|.
ResidualSummary tangency_check(const LagrangianSpec& L, const SplittingSpec& h, const SampleOptions& opts = {});

struct SubducedLagrangian {
  ScalarField Lbar;  // arity 2n, coordinates (x, v)
  Vec y_ref;
  double y_independence = 0.0;
};

/// Lbar(x, v) = L(x, y_ref, v, h(x, y_ref, v)). y_ref defaults to the
/// y-part of the first sample. NotSubducible when Lo h depends on y by more
/// than 1e-6 over the samples.
SubducedLagrangian subduce(const LagrangianSpec& L, const SplittingSpec& h, const SampleOptions& opts = {},
                           std::optional<Vec> y_ref = std::nullopt);

struct ProjectionReport {
  double base_deviation = 0.0;      // max_t |x_full - x_reduced|
  double horizontality_drift = 0.0; // max_t |w - h(x, y, v)|
  double reduced_el_residual = 0.0; // max_t EL residual of Lbar along the full solution
  double min_abs_det_lbar = 0.0;    // regularity of Lbar along the reduced run
  TrajectoryRecord full;            // flat (x, y, v, w) states
  TrajectoryRecord reduced;         // flat (x, v) states
};

/// Integrates Gamma_L from (x0, y0, v0, w0) with w0 = h(x0, y0, v0) unless
/// given, and Gamma_Lbar from (x0, v0).
ProjectionReport projection_verify(const LagrangianSpec& L, const SplittingSpec& h, const SubducedLagrangian& sub,
                                   const Vec& x0, const Vec& v0, const Vec& y0, double T, double dt,
                                   std::optional<Vec> w0 = std::nullopt);

/// max |Delta(L) - 2 L| over samples of TM (skipping the slit).
ResidualSummary two_homogeneity_check(const LagrangianSpec& L, const SampleOptions& opts = {});

/// HypothesisFailed unless |Delta(L) - 2 L| < 1e-8 at the samples; then the
/// Euler residual max |v dh/dv - h| of the induced splitting.
ResidualSummary homogeneity_of_induced(const LagrangianSpec& L, const SplittingSpec& h,
                                       const SampleOptions& opts = {});

}  // namespace nls
