#pragma once

// Affine nonholonomic constraints y' + A(x, y) x' = A_0(x, y), read as the
// affine splitting h = -A v + A_0, and their Lagrange-d'Alembert dynamics.

#include "nls/lagrangian.hpp"
#include "nls/splitting.hpp"

namespace nls {

/// Same data as an affine splitting: A[a][i] and A0[a] are fields of (x, y).
using AffineConstraintSpec = AffineSplittingData;

/// A point (x, y, v); the fibre velocity is w = -A v + A_0.
struct ConstrainedState {
  Vec x, y, v;
};

/// w = -A(x, y) v + A_0(x, y).
Vec constrained_fibre_velocity(const AffineConstraintSpec& c, const Vec& x, const Vec& y, const Vec& v);

/// L_c(x, y, v) = L(x, y, v, -A v + A_0), arity 2n + m.
ScalarField constrained_lagrangian(const LagrangianSpec& L, const AffineConstraintSpec& c);

/// (-B^a_ij v^j - A^a_0i) dL/dw^a, evaluated on the constraint.
Vec lagrange_dalembert_force(const LagrangianSpec& L, const AffineConstraintSpec& c, const Vec& x, const Vec& y,
                             const Vec& v);

/// x' = v, y' = -A v + A_0 and v' from
/// d/dt(dL_c/dv) - dL_c/dx + A^T dL_c/dy = lagrange_dalembert_force.
FirstOrderSystem lagrange_dalembert_system(const LagrangianSpec& L, const AffineConstraintSpec& c);

/// RK4 on (x, y, v). Recorded states are (x, y, v, w) with w rebuilt from
/// the constraint; diagnostics are "constraint_residual" (|y' + A x' - A_0|
/// recomputed from the vector field) and "energy" (v dL_c/dv - L_c).
TrajectoryRecord integrate_constrained(const LagrangianSpec& L, const AffineConstraintSpec& c,
                                       const ConstrainedState& ic, double T, double dt);

}  // namespace nls
