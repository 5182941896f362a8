#pragma once

#include "toda/dynamics.hpp"

#include <cstdint>

namespace toda {

/**
 * Symplectic pairings of the family tangents.
 *
 * A is the dynamical matrix A_ij = <J^{-1} d_{xi_i} U, d_{xi_j} U> in the
 * (q, p) dual pairing; it is what the modulation equation A xi_dot = b
 * inverts, and it is exactly conserved along the family.  Because the kappa
 * tangents carry non-decaying tails, its kappa-kappa cross entries approach
 * order-one constants rather than zero.
 *
 * A_localized evaluates the same pairings on the tail-lifted (decaying)
 * representers; this is the matrix with the per-soliton 2x2 block structure
 * [[0, alpha0_k], [-alpha0_k, alpha1_k]] and exponentially small off-block
 * entries, and the structure diagnostics below refer to it.
 */
struct GramMatrix {
    Eigen::MatrixXd A;
    Eigen::MatrixXd A_inv;
    Eigen::MatrixXd A_localized;
    double cond = 0.0;           // condition of A
    double off_block_max = 0.0;  // of A_localized
    Eigen::VectorXd alpha0;      // A_localized(2k, 2k+1) per soliton
    Eigen::VectorXd alpha1;      // A_localized(2k+1, 2k+1) per soliton (zero here)
};

GramMatrix gram_matrix(const SolitonParams& params, double t, const LatticeGrid& grid,
                       double cond_threshold = 1e8);

struct ModulationFitResult {
    Eigen::VectorXd xi;
    TangentField v;                      // u - U(t, xi), with analytic r slot
    std::vector<TangentField> modes;     // family tangents at the fitted xi
    int newton_iters = 0;
    double pairing_max = 0.0;            // largest |<v, J^{-1} d_xi U>| at convergence
};

struct ModulationOptions {
    double tube_radius = 0.05;           // flat (r, p) norm bound on v
    double pairing_tol = 1e-10;
    int max_iters = 50;
};

/**
 * Tubular coordinates: Newton iteration on the 2m pairing conditions
 * F_j(xi) = <J^{-1} d_{xi_j} U(t, xi), u - U(t, xi)> = 0 with the Gram matrix
 * as the Jacobian and step halving as damping.  Non-convergence and tube exit
 * are rejected with the iterate history in the message.
 */
ModulationFitResult modulation_fit(const LatticeState& u, double t, const Eigen::VectorXd& xi_guess,
                                   const ModulationOptions& opts = {});

struct ResidualSplit {
    Field R1;                 // H'(U+v) - H'(U) - H''(U) v, R slot (P slot is zero)
    Field R2;                 // [H''(U(t; xi0)) - H''(U(t; xi))] v, R slot
    double R_weighted = 0.0;  // || R1 + R2 ||_a in the frame at time t
    double bound_ratio = 0.0; // ||R||_a / ((||v||_inf + |xi - xi0|) ||v||_a)
};

ResidualSplit residual_split(const SolitonParams& frozen, const Eigen::VectorXd& xi_now,
                             const TangentField& v, double t, const WeightFrame& frame);

// Modulation right-hand side b_j = <R, d_{xi_j} U>; together with the Gram
// matrix this gives the modulation equation A xi_dot = b.
Eigen::VectorXd modulation_rhs(const ResidualSplit& split, const std::vector<TangentField>& modes);

struct PerturbationSpec {
    enum class Shape { DeltaSpike, GaussianBump, ProjectedRandom };
    Shape shape = Shape::GaussianBump;
    double amplitude = 1e-3;
    double location = 0.0;
    double width = 3.0;
    std::uint64_t seed = 1;
    bool project = true;       // project into X_m before scaling
};

TangentField make_perturbation(const PerturbationSpec& spec, const SolitonParams& params,
                               double t, const LatticeGrid& grid);

struct StabilityConfig {
    SolitonParams params;
    LatticeGrid grid;
    double t0 = 0.0, t1 = 60.0;
    double dt = 2e-3;
    double record_every = 0.05;
    WeightFrame frame{0.4, 1.5, 0.0, 0.0};
    PerturbationSpec perturbation;
    ModulationOptions fit;
    Integrator scheme = Integrator::Leapfrog;
};

struct ModulationSample {
    double t = 0.0;
    Eigen::VectorXd xi;
    double v_flat = 0.0;            // flat (r, p) norm of v
    double v_sup = 0.0;             // sup norm of (r, p)
    double v_weighted_log = 0.0;    // log of the frame-weighted (r, p) norm
    double pairing_max = 0.0;
    int newton_iters = 0;
    double h_value = 0.0;           // H(u(t))
    double R_weighted = 0.0;
    Eigen::VectorXd b;              // modulation rhs at this sample
    double gram_cond = 0.0;
};

struct ModulationRecord {
    SolitonParams initial_params;
    LatticeGrid grid;
    WeightFrame frame;
    std::vector<ModulationSample> samples;
    bool truncated = false;
    std::string truncation_reason;
    TrajectoryMeta integ_meta;

    // post-run fits over the window after the transient fifth
    double decay_rate_weighted = 0.0;
    double decay_fit_residual = 0.0;

    const ModulationSample& at_time(double t) const;
    Eigen::VectorXd xi_delta(double ta, double tb) const;   // xi(tb) - xi(ta)
};

/**
 * Full nonlinear stability experiment: perturb the m-soliton, integrate the
 * lattice, re-fit the modulation parameters at every output time and record
 * the perturbation norms, pairing residuals, and modulation right-hand side.
 * A tube exit truncates the record with the reason instead of throwing.
 */
ModulationRecord run_stability_experiment(const StabilityConfig& config);

struct XiDotEstimate {
    std::vector<double> times;
    std::vector<double> fd_norm;        // |xi_dot| by central difference of the record
    std::vector<double> model_norm;     // |A^{-1} b|
    std::vector<double> mismatch;       // |fd - model|
    std::vector<double> bound_ratio;    // |xi_dot| / ||R||_a
    double fitted_K = 0.0;              // max of bound_ratio
};

// Compares the finite-difference xi_dot with the modulation equation solution
// A^{-1} b and with the Cauchy-Schwarz bound K ||R||_a.
XiDotEstimate xi_dot_estimate(const ModulationRecord& record);

// <H'(U), v> in the flat (R, P) pairing; the profile identity makes this
// vanish on gamma-orthogonal perturbations.
double grad_pairing(const HamiltonianState& U, const TangentField& v);

} // namespace toda
