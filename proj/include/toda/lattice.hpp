#pragma once

#include "toda/grid.hpp"
#include "toda/state.hpp"

namespace toda {

// Exponential interaction potential V(R) = e^{-R} - 1 + R, V >= 0, V(0) = 0.
inline double potential(double R) { return std::expm1(-R) + R; }
inline double potential_d1(double R) { return 1.0 - std::exp(-R); }
inline double potential_d2(double R) { return std::exp(-R); }

struct StateDerivative {
    Field Qdot;
    Field Pdot;
};

/**
 * Right-hand side of the lattice equations:
 *   Qdot = P,  Pdot_n = e^{-(Q_n - Q_{n-1})} - e^{-(Q_{n+1} - Q_n)},
 * with ghost sites clamped to the grid's asymptotic values.
 */
StateDerivative toda_rhs(const LatticeState& state);

// In-place force (the Pdot part only); used by the integrators.
void toda_force(const LatticeGrid& grid, const Field& Q, Field& out);

/**
 * H = sum_n (P_n^2/2 + V(R_n)) over the truncated grid, plus the left edge
 * spring V(Q_{n_min} - left_value) so the value is exactly conserved by the
 * clamped dynamics.
 */
double hamiltonian(const HamiltonianState& state);
double hamiltonian(const LatticeState& state);

// H'(U) = (V'(R), P) in the (R, P) slots.
HamiltonianState grad_hamiltonian(const HamiltonianState& state);

// H''(U) u = (V''(R) r, p); self-adjoint in the flat pairing.
TangentField hessian_apply(const HamiltonianState& state, const TangentField& u);

// J (x, y) = ((S - I) y, (I - S^{-1}) x) with zero-Dirichlet tangent ghosts.
TangentField j_apply(const TangentField& u);

/**
 * Symplectic dual pairing <u, J^{-1} dU> = <p, dQ> - <q, dP>, evaluated
 * directly in (q, p) variables so no inverse of J is ever formed.
 */
double symplectic_pairing(const TangentField& u, const TangentField& dU);

/**
 * Linearized force about a background, (I - S^{-1})[e^{-R} (S - I) q] in
 * position variables.  tension has N+1 entries, e^{-R} per bond including the
 * two ghost bonds; tangent ghosts are zero.
 */
void linearized_force(const LatticeGrid& grid, const Field& tension, const Field& q, Field& out);

} // namespace toda
