#pragma once

#include "toda/lattice.hpp"
#include "toda/soliton.hpp"
#include "toda/weight.hpp"

#include <string>
#include <vector>

namespace toda {

enum class Integrator { Leapfrog, ImplicitMidpoint };

inline const char* integrator_name(Integrator in) {
    return in == Integrator::Leapfrog ? "leapfrog" : "implicit-midpoint";
}

struct TrajectoryMeta {
    std::string integrator;
    double dt = 0.0;
    double t0 = 0.0, t1 = 0.0;
    std::string background;
    bool blew_up = false;
    double h_drift_max = 0.0;        // max |H(t) - H(0)| over records (nonlinear runs)
    double boundary_max = 0.0;       // max boundary contamination over records
};

struct Trajectory {
    std::vector<double> times;
    std::vector<LatticeState> states;
    TrajectoryMeta meta;
};

struct TangentTrajectory {
    std::vector<double> times;
    std::vector<TangentField> states;
    SolitonParams background;
    TrajectoryMeta meta;
};

/**
 * Symplectic integration of the nonlinear flow, velocity leapfrog by default
 * with implicit midpoint as the cross-check scheme.  States are recorded every
 * record_every time units (plus the endpoints).  Blow-up truncates the
 * trajectory and sets the flag instead of throwing.
 */
Trajectory integrate_toda(const LatticeState& s0, double t0, double t1, double dt,
                          double record_every, Integrator scheme = Integrator::Leapfrog);

/**
 * Linearized flow about the exact m-soliton family (m = 0 gives the free
 * lattice).  The background enters through its closed form only, evaluated at
 * each step midpoint and frozen for the step; the step itself is implicit
 * midpoint, which is symplectic for the frozen system and second order
 * overall.  Defines the two-parameter evolution Phi(t, s).
 */
TangentTrajectory integrate_linearized(const SolitonParams& background, const TangentField& u0,
                                       double t0, double t1, double dt, double record_every);

// One implicit-midpoint step of the linearized flow; exposed for composition tests.
void linearized_step(const SolitonParams& background, const LatticeGrid& grid, double t,
                     double dt, Field& q, Field& p);

/**
 * The 2m neutral directions {d_gamma_i U, d_kappa_i U} at time t with the
 * matrix of their mutual symplectic pairings (antisymmetric, 2x2 block
 * structure) and its condition number.
 *
 * The kappa tangents carry a non-decaying tail (-2 per soliton), so they are
 * valid pairing functionals but not admissible directions to subtract from
 * square-summable data.  directions[] therefore holds tail-lifted copies (a
 * smooth step cancels the tail) that stay in the decaying class; gamma
 * directions coincide with the modes.
 */
struct ProjectionBasis {
    std::vector<TangentField> modes;        // pairing functionals (family tangents)
    std::vector<TangentField> directions;   // decaying subtraction directions
    Eigen::MatrixXd pair_matrix;            // A_ij = pairing(mode_i, mode_j)
    Eigen::MatrixXd direction_matrix;       // M_ij = pairing(direction_j, mode_i)
    double cond = 0.0;

    Eigen::VectorXd pairings_of(const TangentField& u) const;
};

ProjectionBasis projection_basis(const SolitonParams& params, double t, const LatticeGrid& grid);

/**
 * Remove components along the localized directions so that every pairing
 * <u, J^{-1} d_{xi_j} U(t)> vanishes while the result stays decaying (the
 * conservation law, and hence X_m invariance under the flow, holds only
 * there); idempotent.  Rejects a direction matrix conditioned worse than
 * cond_threshold.
 */
TangentField project_Xm(const TangentField& u, double t, const SolitonParams& params,
                        double cond_threshold = 1e8);

/**
 * Conservation defect of the 2m symplectic pairings along the trajectory.
 * The kappa tangents grow linearly in time (the speed variation displaces the
 * soliton secularly), so the absolute drift is also reported relative to the
 * Cauchy-Schwarz scale ||u|| ||mode(t)|| of each pairing.
 */
struct PairingDrift {
    double absolute = 0.0;
    double relative = 0.0;
};

PairingDrift pairing_drift(const TangentTrajectory& traj, const SolitonParams& params);

struct DecayFit {
    double rate = 0.0;            // fitted decay rate (positive = decay)
    double fit_residual = 0.0;    // rms residual of the linear fit in log space
    double beta = 0.0;            // theoretical c a - 2 sinh(a/2)
    bool window_shortened = false;
    std::vector<double> times;
    std::vector<double> log_norms;
};

/**
 * Least-squares decay rate of log || e^{a(n - c t - T)} u(t) || over the
 * trajectory, discarding the first fifth of the time span as transient.
 */
DecayFit decay_rate(const TangentTrajectory& traj, const WeightFrame& frame);

} // namespace toda
