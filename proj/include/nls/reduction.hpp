#pragma once

// Principal actions on the fibres, momentum maps, principal splittings,
// unreduction of base SODEs and the magnetic Lagrange-Poincare system.
//
// Actions are infinitesimal only: the fundamental fields are
// E~_g = K^b_g(x, y) d/dy^b, so column g of K is the generator E~_g.

#include <optional>
#include <string>
#include <vector>

#include "nls/lagrangian.hpp"
#include "nls/splitting.hpp"

namespace nls {

struct ActionSpec {
  BundleChart chart;
  std::vector<std::vector<ScalarField>> K;  // K[b][g] = K^b_g, fields of (x, y)
  std::vector<Mat> C;                       // C[c](a, b) = C^c_ab

  /// Field shapes, antisymmetry and the Jacobi identity of C (1e-12).
  void check() const;
  /// K^b_g at q = (x, y).
  Mat matrix(const Vec& q) const;
  /// Kdot^b_g = v^i dK^b_g/dx^i + w^e dK^b_g/dy^e.
  Mat matrix_dot(const TangentPointM& p) const;
  /// E~_g as a vector field on M (arity n + m).
  VectorField generator(std::size_t g) const;
};

/// Fibre translations: K = identity, abelian.
ActionSpec translation_action(const BundleChart& chart);

ResidualSummary invariance_check(const LagrangianSpec& L, const ActionSpec& action, const SampleOptions& opts = {});

/// J_g = K^a_g dL/dw^a.
Vec momentum_map(const LagrangianSpec& L, const ActionSpec& action, const TangentPointM& at);

/// max over samples of |J o h|.
ResidualSummary momentum_on_horizontal(const LagrangianSpec& L, const ActionSpec& action, const SplittingSpec& h,
                                       const SampleOptions& opts = {});

/// max over samples, a and g of
/// |v^i dK^a_g/dx^i + h^b dK^a_g/dy^b - K^b_g dh^a/dy^b|.
ResidualSummary principal_check(const SplittingSpec& h, const ActionSpec& action, const SampleOptions& opts = {});

/// omega^b = (K^-1)^b_g (w^g - h^g).
Vec omega(const SplittingSpec& h, const ActionSpec& action, const TangentPointM& at);

/// max over samples of |K^-1 (v^i dh/dv^i - h)|, the components of
/// i_{Delta_h} d omega up to sign.
ResidualSummary connection_test_domega(const SplittingSpec& h, const ActionSpec& action,
                                       const SampleOptions& opts = {});

/// Xi = (w - h)^g (d/dy^g + (K^-1)^b_g Kdot^d_b d/dw^d).
SecondTangentPoint xi_field(const SplittingSpec& h, const ActionSpec& action, const TangentPointM& at);

/// The Vilms lift of a base SODE: v d/dx + h d/dy + f d/dv
/// + (h_x v + h_y w + h_v f) d/dw.
SecondTangentPoint vilms_of_sode(const SodeSpec& gamma_bar, const SplittingSpec& h, const TangentPointM& at);

/// Gamma = Gamma_bar^Vilms + Xi as a SODE on M. NotPrincipal when
/// principal_check exceeds 1e-7 on the given samples.
SodeSpec unreduce(const SodeSpec& gamma_bar, const SplittingSpec& h, const ActionSpec& action,
                  const SampleOptions& opts = {});

/// max over samples of |TT pi(Gamma) - Gamma_bar(T pi)|: the (x, v)
/// blocks of Gamma against Gamma_bar.
ResidualSummary submersion_residual(const SodeSpec& gamma, const SodeSpec& gamma_bar, const BundleChart& chart,
                                    const SampleOptions& opts = {});

/// max over the recorded flat (x, y, v, w) states of |w - h(x, y, v)|.
double horizontality_drift(const SplittingSpec& h, const TrajectoryRecord& tr);

/// S(Xi) = Delta_v and S(Gamma_bar^Vilms) = Delta_h on sampled points of TM.
struct LiftIdentityReport {
  ResidualSummary xi_vs_delta_v;
  ResidualSummary vilms_vs_delta_h;
};
LiftIdentityReport lift_identity_check(const SplittingSpec& h, const ActionSpec& action, const SodeSpec& gamma_bar,
                                       const SampleOptions& opts = {});

/// Flow of E~_g for time t with its (x, y)-Jacobian, by RK4 with a fixed
/// number of steps. FlowEscape when the state stops being finite.
struct FibreFlow {
  Vec y;
  Mat jac_x;  // m x n
  Mat jac_y;  // m x m
};
FibreFlow generator_flow(const ActionSpec& action, std::size_t g, const Vec& x, const Vec& y, double t,
                         int steps = 64);

/// Equivariance of the Vilms vertical projector under T(T Phi) for the
/// flows of each generator at the given times, on sampled points of TTM.
/// T(T Phi) is realized by a central difference of T Phi.
ResidualSummary vilms_principal_check(const SplittingSpec& h, const ActionSpec& action,
                                      const std::vector<double>& times, const SampleOptions& opts = {});

/// L = 1/2 g_ij v^i v^j + 1/2 k_ab wb^a wb^b - V + A_i v^i + A_a wb^a in
/// quasi-velocities (x, v, wb). All fields are functions of x.
struct MagneticModel {
  std::size_t n = 1, m = 1;
  std::vector<std::vector<ScalarField>> g;          // g[i][j]
  Mat k;                                            // k(a, b), constant
  ScalarField V;
  std::vector<ScalarField> A_base;                  // A_i
  std::vector<ScalarField> A_fibre;                 // A_a
  std::vector<std::vector<std::vector<ScalarField>>> Upsilon;  // Upsilon[i][b][a] = Upsilon^b_ia
  std::vector<std::vector<std::vector<ScalarField>>> Kcurv;    // Kcurv[a][i][j] = K^a_ij
  std::vector<Mat> C;                                          // C[c](a, b) = C^c_ab

  /// Shapes, k symmetric and invertible, bi-invariance of k (1e-12), and
  /// g positive definite at `samples` seeded points of [-1, 1]^n.
  void check(std::size_t samples = 20, std::uint64_t seed = 42) const;
};

/// Values and first derivatives of the model fields at x.
struct MagneticFields {
  Mat g;                      // n x n
  std::vector<Mat> dg;        // dg[k](i, j) = d g_ij / dx^k
  double V = 0.0;
  Vec dV;                     // n
  Vec A_base;                 // n
  Mat dA_base;                // (i, k) = d A_i / dx^k
  Vec A_fibre;                // m
  Mat dA_fibre;               // (a, k) = d A_a / dx^k
  std::vector<Mat> Upsilon;   // Upsilon[i](b, a)
  std::vector<Mat> Kcurv;     // Kcurv[a](i, j)
};
MagneticFields magnetic_fields(const MagneticModel& model, const Vec& x);

/// The Lagrange-Poincare equations of the magnetic Lagrangian as a
/// first-order system on (x, v, wb).
FirstOrderSystem magnetic_lp_system(const MagneticModel& model);

/// k_bg Upsilon^b_ia wb^a wb^g, per base index i. The equations are
/// evaluated as written; this term is exposed for inspection only.
Vec magnetic_quadratic_term(const MagneticModel& model, const Vec& x, const Vec& wbar);

/// dl/dwb = k wb + A_a(x) at the flat state (x, v, wb).
Vec magnetic_fibre_momentum(const MagneticModel& model, const Vec& state);

/// h^a = -k^{ab} A_b(x), as an affine splitting (no velocity dependence)
/// on the chart (n, m).
SplittingSpec magnetic_induced_splitting(const MagneticModel& model);

/// Lbar = 1/2 g v v - V + A_i v^i on TN.
ScalarField magnetic_base_lagrangian(const MagneticModel& model);

/// max over i, g of |-K^a_ij v^j k_ag + Upsilon^a_ig A_a + dA_g/dx^i| at (x, v).
double decoupling_residual(const MagneticModel& model, const Vec& x, const Vec& v);

struct DecouplingReport {
  double residual = 0.0;               // max |-K^a_ij v^j k_ag + Upsilon^a_ig A_a + dA_g/dx^i|
  bool decoupled = false;              // residual < 1e-8
  double wbar_sensitivity = 0.0;       // max |vdot(wb) - vdot(wb')|
  std::optional<double> base_el_mismatch;  // vdot against EL of Lbar, when decoupled
};
DecouplingReport decoupling_check(const MagneticModel& model, const SampleOptions& opts = {});

}  // namespace nls
