#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nls/bundle.hpp"
#include "nls/sampling.hpp"

namespace nls {

enum class SplittingProvenance { Explicit, InducedByLagrangian, AffineFromConstraints, Vilms };

const char* provenance_name(SplittingProvenance p);

/// Coefficients h^a(x, y, v) of a nonlinear splitting.
///
/// The evaluator receives the flat point (x, y, v) and returns m jets of
/// arity 2n + m. When smooth_at_zero is false, points with |v| < slit_eps
/// are rejected with DomainError before the evaluator is called.
class SplittingSpec {
 public:
  using Evaluator = std::function<std::vector<Jet2>(std::span<const double>, JetOrder)>;

  SplittingSpec() = default;
  SplittingSpec(BundleChart chart, Evaluator f, bool smooth_at_zero, SplittingProvenance provenance,
                std::vector<std::string> labels = {});

  /// One scalar field of arity 2n + m per fibre coordinate.
  static SplittingSpec from_fields(BundleChart chart, std::vector<ScalarField> coefficients,
                                   bool smooth_at_zero,
                                   SplittingProvenance provenance = SplittingProvenance::Explicit);

  std::vector<Jet2> eval(std::span<const double> xyv, JetOrder order) const;
  std::vector<Jet2> eval(const PullbackPoint& p, JetOrder order) const;
  Vec value(const PullbackPoint& p) const;
  /// Coefficient values and the m x (2n+m) Jacobian.
  FieldJet jacobian(const PullbackPoint& p) const;

  bool admissible(const Vec& v) const { return smooth_at_zero_ || !chart_.in_slit(v); }

  const BundleChart& chart() const { return chart_; }
  bool smooth_at_zero() const { return smooth_at_zero_; }
  SplittingProvenance provenance() const { return provenance_; }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  BundleChart chart_;
  Evaluator f_;
  bool smooth_at_zero_ = true;
  SplittingProvenance provenance_ = SplittingProvenance::Explicit;
  std::vector<std::string> labels_;
};

/// (x, y, v) -> (x, y, v, h(x, y, v)).
TangentPointM horizontal_map(const SplittingSpec& h, const PullbackPoint& p);
/// P_h(x, y, v, w) = (x, y, v, h(x, y, v)).
TangentPointM project_horizontal(const SplittingSpec& h, const TangentPointM& w);
/// P_v(x, y, v, w) = (x, y, 0, w - h(x, y, v)).
TangentPointM project_vertical(const SplittingSpec& h, const TangentPointM& w);

/// P_v as a map TM -> TM on flat coordinates (x, y, v, w), differentiable.
VectorField vertical_projector_map(const SplittingSpec& h);

/// X^h(m) = h(m, X(pi(m))) for a base field X (arity n, dim n).
TangentPointM horizontal_lift_field(const SplittingSpec& h, const VectorField& base_field,
                                    const Vec& x, const Vec& y);

/// X^h as a vector field on M: components (X(x), h(x, y, X(x))).
VectorField horizontal_lift_vector_field(const SplittingSpec& h, const VectorField& base_field);

/// A base curve: t -> (x(t), dx/dt(t)).
struct BaseCurve {
  std::function<Vec(double)> position;
  std::function<Vec(double)> velocity;
};

/// Integrates dy/dt = h(x(t), y, dx/dt(t)) with y(t0) = y0. States are flat
/// TM points (x, y, dx/dt, h); the diagnostic "lift_defect" is the gap
/// between the step secant slope of y and the trapezoid mean of h.
TrajectoryRecord horizontal_lift_curve(const SplittingSpec& h, const BaseCurve& curve, const Vec& y0,
                                       double t0, double t1, double dt);

/// Lifts c and c o theta (theta increasing, theta(s0) = t0) and returns the
/// largest y-gap at matched parameters; the unreparametrized lift is
/// Hermite-interpolated at theta(s_k).
double reparametrization_gap(const SplittingSpec& h, const BaseCurve& curve, const Vec& y0,
                             const std::function<double(double)>& theta,
                             const std::function<double(double)>& dtheta, double s0, double s1,
                             double dt);

enum class Verdict { Ehresmann, Affine, Homogeneous, General };
const char* verdict_name(Verdict v);

struct SampleOptions {
  std::size_t samples = 200;
  std::uint64_t seed = 42;
  std::optional<SampleBox> box;  // default [-1, 1] in every coordinate
  ExecPolicy policy = ExecPolicy::Parallel;
};

/// Residual keys:
///   euler        max |v^i dh/dv^i - h|
///   linearity    max |d2h/dv dv|
///   secant       max |h(v) + h(-v) - h(2v) - h(-2v)|
///   intercept    max |h(x, y, 0)|, absent when h is not smooth at v = 0
///   scale        max |h|
///   tolerance    1e-7 (1 + scale)
struct ClassificationReport {
  Verdict verdict = Verdict::General;
  std::map<std::string, std::optional<double>> residuals;
  std::size_t sample_count = 0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
  std::uint64_t seed = 0;
};

ClassificationReport classify(const SplittingSpec& h, const SampleOptions& opts = {});

/// The Vilms lift: a splitting of T pi: TM -> TN in the chart whose base
/// is (x, v), fibre (y, w) and base velocity (X, V). Coefficients are
/// Y = h(x, y, X) and W = h_x(x, y, X) v + h_y(x, y, X) w + h_v(x, y, X) V.
/// Second-order jets of W use differences of its exact gradient.
SplittingSpec vilms_lift(const SplittingSpec& h);

/// Vertical projection of the Vilms lift on a point of TTM, from the
/// coordinate formula: (X, Y, V, W) -> (0, Y - Y_h, 0, W - W_h).
SecondTangentPoint vilms_vertical_projection(const SplittingSpec& h, const SecondTangentPoint& s);

/// The same projection as sigma o T(P_v) o sigma.
SecondTangentPoint vilms_vertical_projection_oracle(const SplittingSpec& h,
                                                    const SecondTangentPoint& s);

struct VilmsLiftComparison {
  double complete_lift_residual = 0.0;        // (h(d/dx^j))^c vs Vilms lift of d/dx^j
  std::optional<double> vertical_difference;  // (h(d/dx^j))^v vs Vilms lift of d/dv^j
};

VilmsLiftComparison vilms_complete_lift_check(const SplittingSpec& h, std::size_t j,
                                              const TangentPointM& at);

/// R(X, Y) = [X^h, Y^h] - [X, Y]^h at (x, y), as a tangent vector to M
/// (v-block is the base part of the difference and vanishes).
TangentPointM curvature_rbar(const SplittingSpec& h, const VectorField& X, const VectorField& Y,
                             const Vec& x, const Vec& y);

struct PointwiseCurvature {
  TangentPointM value;          // from constant extensions
  double extension_gap = 0.0;   // against a second, non-constant extension
};

/// R_m(u, v) through constant extensions; NotWellDefined when a second
/// extension through the same vectors changes the result by more than 1e-7.
PointwiseCurvature curvature_pointwise(const SplittingSpec& h, const Vec& u, const Vec& v,
                                       const Vec& x, const Vec& y);

/// h^a = -A^a_i v^i + A^a_0 with A (m x n) and A_0 (m) fields of (x, y).
struct AffineSplittingData {
  BundleChart chart;
  std::vector<std::vector<ScalarField>> A;  // A[a][i]
  std::vector<ScalarField> A0;              // A0[a]
  double reconstruction_residual = 0.0;
};

AffineSplittingData affine_decompose(const SplittingSpec& h, const SampleOptions& opts = {});
SplittingSpec affine_splitting(const AffineSplittingData& d);

/// The horizontal frame H_i = d/dx^i - A^a_i d/dy^a as fields on M.
VectorField horizontal_frame(const AffineSplittingData& d, std::size_t i);

struct AffineCurvature {
  std::vector<Mat> B;  // B[a](i, j): [H_i, H_j] = B^a_ij d/dy^a
  Mat A0i;             // A0i(a, i) = H_i(A_0^a) + A_0(A^a_i)
};

AffineCurvature affine_curvature(const AffineSplittingData& d, const Vec& x, const Vec& y);

/// zeta^i (v^j B^a_ij + A^a_0i) d/dy^a at w_pt, zeta a base vector.
TangentPointM rbar_zero(const AffineSplittingData& d, const Vec& zeta, const TangentPointM& w_pt);

enum class LiouvilleKind { Delta, Horizontal, Vertical, Zero };

/// Delta = u d/du, Delta_h = v d/dv + h d/dw, Delta_v = (w - h) d/dw,
/// Delta_0 = h(x, y, 0) d/dw. `h` may be null for Delta.
SecondTangentPoint liouville_fields(const SplittingSpec* h, const TangentPointM& at,
                                    LiouvilleKind which);

}  // namespace nls
