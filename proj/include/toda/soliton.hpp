#pragma once

#include "toda/grid.hpp"
#include "toda/state.hpp"

#include <vector>

namespace toda {

enum class ParamKind { Gamma, Kappa };

/**
 * Wavenumbers and phases of an m-soliton.  Kappas are kept sorted ascending
 * (the dominance arguments behind the resolution estimates assume an order)
 * with the phases permuted alongside.  m = 0 is the rest state.
 *
 * Phase convention: gamma_j is the phase of the explicit hyperbolic-cosine
 * one-soliton.  The tau-determinant evaluation shifts each phase internally by
 * half the log of the diagonal interaction weight so that the m = 1 determinant
 * profile coincides with one_soliton for the same (kappa, gamma).
 */
struct SolitonParams {
    std::vector<double> kappas;
    std::vector<double> gammas;

    SolitonParams() = default;
    SolitonParams(std::vector<double> k, std::vector<double> g);

    int m() const { return static_cast<int>(kappas.size()); }
    double kappa_min() const;
    double total_jump() const;                       // -2 sum kappa
    double speed(int i) const;                       // sinh(kappa_i) / kappa_i

    // xi flattening (gamma_1, kappa_1, ..., gamma_m, kappa_m)
    Eigen::VectorXd xi() const;
    static SolitonParams from_xi(const Eigen::VectorXd& xi);

    SolitonParams with_soliton(double kappa, double gamma) const;
    SolitonParams without_largest() const;
};

/**
 * Asymptotic phase offsets of the constituent solitons, from determinants of
 * the interaction matrix alpha_ij = 1/(1 - e^{-(kappa_i+kappa_j)}).
 *
 * zeta_plus/minus are the offsets measured against one_soliton in this
 * library's phase convention (a lone soliton shifts by zero).  raw_plus/minus
 * are the bare determinant ratios of the trailing/leading principal minors,
 * which differ from zeta by the diagonal normalization  -log(alpha_jj)/2  per
 * soliton; the differences zeta+ - zeta- agree between the two.
 */
struct PhaseShifts {
    Eigen::VectorXd zeta_plus, zeta_minus;
    Eigen::VectorXd raw_plus, raw_minus;
};

// Explicit one-soliton, Q_n = log[cosh(th_n)/cosh(th_{n+1})] - kappa with
// th_n = kappa n - t sinh(kappa) + gamma; P = dQ/dt in closed form.
LatticeState one_soliton(double kappa, double gamma, double t, const LatticeGrid& grid);

// log cosh evaluated without overflow.
double log_cosh(double x);

// A grid whose clamp values match the soliton asymptotics Q(-inf)=0, Q(inf)=-2 sum kappa.
LatticeGrid soliton_grid(int n_min, int n_max, const SolitonParams& params);

/**
 * Full family evaluation at one time: the exact state, its analytic second
 * time derivative, and the 2m parameter tangents (dQ, dP, dR per field, in xi
 * order).  Everything comes from scaled log-determinant evaluations of the tau
 * function, so arbitrarily large |kappa n - sinh(kappa) t| is safe.
 */
struct FamilyEval {
    LatticeState state;
    Field Pdot;
    std::vector<TangentField> tangents;   // size 2m when requested
};

enum FamilyParts : unsigned {
    kState = 1u,
    kPdot = 2u,
    kTangents = 4u,
};

FamilyEval eval_family(const SolitonParams& params, double t, const LatticeGrid& grid,
                       unsigned parts = kState);

LatticeState m_soliton(const SolitonParams& params, double t, const LatticeGrid& grid);

// e^{-R} per bond over the grid, N+1 values including the two ghost bonds.
Field soliton_tension(const SolitonParams& params, double t, const LatticeGrid& grid);

/**
 * Parameter derivative of the profile as a tangent field.  With fd_check the
 * analytic field is verified against a Richardson-extrapolated central
 * difference (step h = 1e-5) and a failure throws with both residuals.
 */
TangentField soliton_derivative(const SolitonParams& params, double t, const LatticeGrid& grid,
                                ParamKind kind, int index, bool fd_check = false);

std::vector<TangentField> soliton_tangents(const SolitonParams& params, double t,
                                           const LatticeGrid& grid);

PhaseShifts phase_shifts(const SolitonParams& params);

struct ResolutionResidual {
    double l1 = 0.0;
    bool boundary_flag = false;   // a soliton core within 10 sites of the grid edge
};

// l1 distance between the m-soliton and the zeta-shifted sum of one-solitons.
ResolutionResidual resolution_residual(const SolitonParams& params, double t, const LatticeGrid& grid);

struct ProfileIdentityResidual {
    double residual[2] = {0.0, 0.0};  // sup residual for candidate factors 1 and 2
    int resolved_factor = 0;
    double dtU_norm = 0.0;
};

/**
 * Tests d/dt U + c * sum_i sinh(kappa_i) d/dgamma_i U = 0 for c in {1, 2} and
 * reports which factor the profile actually satisfies.
 */
ProfileIdentityResidual profile_identity_residual(const SolitonParams& params, double t,
                                                  const LatticeGrid& grid);

// The factor resolved by profile_identity_residual; other modules read it from
// here instead of hard-coding a constant.
int resolved_profile_factor(const SolitonParams& params, const LatticeGrid& grid, double t = 0.0);

/**
 * Measure the asymptotic phase offsets from the profile itself: around each
 * well-separated soliton core, fit the offset delta_j that best matches
 * one_soliton(kappa_j, gamma_j + delta_j) plus the background drop of the
 * cores already passed.  Independent of the determinant formula for zeta.
 */
Eigen::VectorXd fit_phase_offsets(const SolitonParams& params, double t, const LatticeGrid& grid);

} // namespace toda
