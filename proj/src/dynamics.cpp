#include "toda/dynamics.hpp"

#include <Eigen/SVD>

#include <sstream>

namespace toda {

namespace {

constexpr double kBlowUpBound = 1e8;

bool finite_and_bounded(const Field& a, const Field& b) {
    return a.allFinite() && b.allFinite() &&
           a.cwiseAbs().maxCoeff() < kBlowUpBound && b.cwiseAbs().maxCoeff() < kBlowUpBound;
}

int steps_for(double t0, double t1, double& dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("integrate: dt must be positive");
    if (dt > 0.1) throw std::invalid_argument("integrate: dt must not exceed 0.1");
    if (!(t1 > t0)) throw std::invalid_argument("integrate: need t1 > t0");
    const int n = std::max(1, static_cast<int>(std::llround((t1 - t0) / dt)));
    dt = (t1 - t0) / n;
    return n;
}

void midpoint_step_nonlinear(const LatticeGrid& grid, Field& Q, Field& P, double dt) {
    // midpoint state z solves z = u0 + (dt/2) f(z); fixed point iteration
    Field Qm = Q, Pm = P, force(grid.size());
    for (int it = 0; it < 100; ++it) {
        toda_force(grid, Qm, force);
        Field Qn = Q + 0.5 * dt * Pm;
        Field Pn = P + 0.5 * dt * force;
        const double delta = (Qn - Qm).cwiseAbs().maxCoeff() + (Pn - Pm).cwiseAbs().maxCoeff();
        Qm.swap(Qn);
        Pm.swap(Pn);
        if (delta < 1e-14) break;
    }
    Q = 2.0 * Qm - Q;
    P = 2.0 * Pm - P;
}

} // namespace

Trajectory integrate_toda(const LatticeState& s0, double t0, double t1, double dt,
                          double record_every, Integrator scheme) {
    require_finite(s0.Q, "integrate_toda");
    require_finite(s0.P, "integrate_toda");
    int nsteps = steps_for(t0, t1, dt);
    const int stride = std::max(1, static_cast<int>(std::llround(record_every / dt)));

    Trajectory traj;
    traj.meta.integrator = integrator_name(scheme);
    traj.meta.dt = dt;
    traj.meta.t0 = t0;
    traj.meta.t1 = t1;
    traj.meta.background = "nonlinear";

    Field Q = s0.Q, P = s0.P;
    const double H0 = hamiltonian(s0);
    auto record = [&](double t) {
        LatticeState s(s0.grid, Q, P);
        traj.meta.h_drift_max = std::max(traj.meta.h_drift_max, std::abs(hamiltonian(s) - H0));
        traj.meta.boundary_max = std::max(traj.meta.boundary_max, s.boundary_contamination());
        traj.times.push_back(t);
        traj.states.push_back(std::move(s));
    };
    record(t0);

    Field force(s0.grid.size());
    if (scheme == Integrator::Leapfrog) toda_force(s0.grid, Q, force);
    for (int s = 0; s < nsteps; ++s) {
        if (scheme == Integrator::Leapfrog) {
            P += 0.5 * dt * force;
            Q += dt * P;
            toda_force(s0.grid, Q, force);
            P += 0.5 * dt * force;
        } else {
            midpoint_step_nonlinear(s0.grid, Q, P, dt);
        }
        if (!finite_and_bounded(Q, P)) {
            traj.meta.blew_up = true;
            break;
        }
        if ((s + 1) % stride == 0 || s + 1 == nsteps) record(t0 + (s + 1) * dt);
    }
    return traj;
}

void linearized_step(const SolitonParams& background, const LatticeGrid& grid, double t,
                     double dt, Field& q, Field& p) {
    const int N = grid.size();
    const Field tension = soliton_tension(background, t + 0.5 * dt, grid);

    // (I - dt^2/4 K) q+ = q + dt p + dt^2/4 K q, then p+ = p + dt/2 K (q + q+),
    // with K q = linearized_force; tridiagonal symmetric positive definite.
    Field Kq(N);
    linearized_force(grid, tension, q, Kq);
    const double c = 0.25 * dt * dt;
    Field rhs = q + dt * p + c * Kq;

    // Thomas solve of (I - c K)
    Field diag(N), lower(N);   // lower[i] couples (i-1, i)
    for (int i = 0; i < N; ++i) {
        diag[i] = 1.0 + c * (tension[i] + tension[i + 1]);
        lower[i] = -c * tension[i];   // lower[0] multiplies the zero ghost
    }
    Field cp(N), dp(N);
    cp[0] = lower[1] / diag[0];   // super-diagonal of row 0 couples sites 0,1 = -c tension[1]
    dp[0] = rhs[0] / diag[0];
    for (int i = 1; i < N; ++i) {
        const double m = diag[i] - lower[i] * cp[i - 1];
        if (i + 1 < N) cp[i] = lower[i + 1] / m;
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / m;
    }
    Field qn(N);
    qn[N - 1] = dp[N - 1];
    for (int i = N - 2; i >= 0; --i) qn[i] = dp[i] - cp[i] * qn[i + 1];

    Field Kqsum(N);
    linearized_force(grid, tension, Field(q + qn), Kqsum);
    p += 0.5 * dt * Kqsum;
    q = qn;
}

TangentTrajectory integrate_linearized(const SolitonParams& background, const TangentField& u0,
                                       double t0, double t1, double dt, double record_every) {
    require_finite(u0.q, "integrate_linearized");
    require_finite(u0.p, "integrate_linearized");
    int nsteps = steps_for(t0, t1, dt);
    const int stride = std::max(1, static_cast<int>(std::llround(record_every / dt)));

    TangentTrajectory traj;
    traj.background = background;
    traj.meta.integrator = "implicit-midpoint";
    traj.meta.dt = dt;
    traj.meta.t0 = t0;
    traj.meta.t1 = t1;
    traj.meta.background = background.m() == 0 ? "rest" : "m-soliton";

    Field q = u0.q, p = u0.p;
    traj.times.push_back(t0);
    traj.states.push_back(TangentField(u0.grid, q, p));
    for (int s = 0; s < nsteps; ++s) {
        linearized_step(background, u0.grid, t0 + s * dt, dt, q, p);
        if (!finite_and_bounded(q, p)) {
            traj.meta.blew_up = true;
            break;
        }
        if ((s + 1) % stride == 0 || s + 1 == nsteps) {
            traj.times.push_back(t0 + (s + 1) * dt);
            traj.states.push_back(TangentField(u0.grid, q, p));
        }
    }
    return traj;
}

Eigen::VectorXd ProjectionBasis::pairings_of(const TangentField& u) const {
    Eigen::VectorXd out(static_cast<int>(modes.size()));
    for (size_t j = 0; j < modes.size(); ++j)
        out[static_cast<int>(j)] = symplectic_pairing(u, modes[j]);
    return out;
}

ProjectionBasis projection_basis(const SolitonParams& params, double t, const LatticeGrid& grid) {
    ProjectionBasis basis;
    basis.modes = soliton_tangents(params, t, grid);
    const int k = static_cast<int>(basis.modes.size());

    basis.directions = basis.modes;
    for (int l = 0; l < params.m(); ++l) {
        // lift the -2 tail of each kappa tangent with a smooth step through the
        // soliton core; the lifted copy decays in both directions
        TangentField& dir = basis.directions[2 * l + 1];
        const double core =
            (t * std::sinh(params.kappas[l]) - params.gammas[l]) / params.kappas[l];
        for (int i = 0; i < grid.size(); ++i)
            dir.q[i] += 1.0 + std::tanh((grid.site(i) - core) / 3.0);
        dir.r.reset();
    }

    basis.pair_matrix.resize(k, k);
    basis.direction_matrix.resize(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            basis.pair_matrix(i, j) = symplectic_pairing(basis.modes[i], basis.modes[j]);
            basis.direction_matrix(i, j) = symplectic_pairing(basis.directions[j], basis.modes[i]);
        }
    if (k > 0) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(basis.direction_matrix);
        const auto& sv = svd.singularValues();
        basis.cond = sv[0] / sv[k - 1];
    }
    return basis;
}

TangentField project_Xm(const TangentField& u, double t, const SolitonParams& params,
                        double cond_threshold) {
    if (params.m() == 0) return u;
    ProjectionBasis basis = projection_basis(params, t, u.grid);
    if (!(basis.cond < cond_threshold)) {
        std::ostringstream os;
        os << "project_Xm: direction matrix condition " << basis.cond << " exceeds threshold "
           << cond_threshold;
        throw std::runtime_error(os.str());
    }
    // coefficients c with pairing(u - sum c_j d_j, b_i) = 0 for all i
    const int k = static_cast<int>(basis.modes.size());
    Eigen::VectorXd rhs = basis.pairings_of(u);
    Eigen::VectorXd c = basis.direction_matrix.fullPivLu().solve(rhs);
    TangentField out = u;
    for (int j = 0; j < k; ++j) {
        out.q -= c[j] * basis.directions[j].q;
        out.p -= c[j] * basis.directions[j].p;
    }
    out.r.reset();
    return out;
}

PairingDrift pairing_drift(const TangentTrajectory& traj, const SolitonParams& params) {
    PairingDrift out;
    if (traj.states.empty()) return out;
    const LatticeGrid& grid = traj.states.front().grid;
    Eigen::VectorXd initial;
    for (size_t k = 0; k < traj.times.size(); ++k) {
        ProjectionBasis basis = projection_basis(params, traj.times[k], grid);
        Eigen::VectorXd pr = basis.pairings_of(traj.states[k]);
        if (k == 0) {
            initial = pr;
            continue;
        }
        const double unorm = traj.states[k].flat_norm();
        for (int j = 0; j < pr.size(); ++j) {
            const double d = std::abs(pr[j] - initial[j]);
            out.absolute = std::max(out.absolute, d);
            const double scale = unorm * basis.modes[j].flat_norm();
            if (scale > 0.0) out.relative = std::max(out.relative, d / scale);
        }
    }
    return out;
}

DecayFit decay_rate(const TangentTrajectory& traj, const WeightFrame& frame) {
    DecayFit fit;
    fit.beta = frame.beta;
    if (traj.times.size() < 4) throw std::invalid_argument("decay_rate: trajectory too short");

    const double t0 = traj.times.front(), t1 = traj.times.back();
    const double window_start = t0 + 0.2 * (t1 - t0);
    for (size_t k = 0; k < traj.times.size(); ++k) {
        if (traj.times[k] < window_start) continue;
        const double lw = weighted_log_norm(traj.states[k], frame, traj.times[k]);
        if (!std::isfinite(lw)) {
            fit.window_shortened = true;
            break;
        }
        fit.times.push_back(traj.times[k]);
        fit.log_norms.push_back(lw);
    }
    if (fit.times.size() < 3) throw std::runtime_error("decay_rate: fit window collapsed");

    const int n = static_cast<int>(fit.times.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        sx += fit.times[i];
        sy += fit.log_norms[i];
        sxx += fit.times[i] * fit.times[i];
        sxy += fit.times[i] * fit.log_norms[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / n;
    double rss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double e = fit.log_norms[i] - (intercept + slope * fit.times[i]);
        rss += e * e;
    }
    fit.rate = -slope;
    fit.fit_residual = std::sqrt(rss / n);
    return fit;
}

} // namespace toda
