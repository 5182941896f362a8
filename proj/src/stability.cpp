#include "toda/stability.hpp"

#include "toda/dynamics.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <random>
#include <sstream>

namespace toda {

namespace {

// v = u - U(t, xi) with the r slot taken from clamped Q differences on each
// side, so kappa drift between u and the fitted family stays out of the tails.
TangentField perturbation_between(const LatticeState& u, const FamilyEval& fam) {
    const LatticeGrid& gu = u.grid;
    const int N = gu.size();
    TangentField v(gu, u.Q - fam.state.Q, u.P - fam.state.P);
    Field r(N);
    for (int i = 0; i < N; ++i) {
        const double ru = gu.value(u.Q, gu.site(i) + 1) - u.Q[i];
        const double rf = fam.state.grid.value(fam.state.Q, gu.site(i) + 1) - fam.state.Q[i];
        r[i] = ru - rf;
    }
    v.r = std::move(r);
    return v;
}

Eigen::VectorXd pairings(const TangentField& v, const std::vector<TangentField>& modes) {
    Eigen::VectorXd F(static_cast<int>(modes.size()));
    for (size_t j = 0; j < modes.size(); ++j)
        F[static_cast<int>(j)] = symplectic_pairing(v, modes[j]);
    return F;
}

Eigen::MatrixXd mode_pair_matrix(const std::vector<TangentField>& modes) {
    const int k = static_cast<int>(modes.size());
    Eigen::MatrixXd A(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) A(i, j) = symplectic_pairing(modes[i], modes[j]);
    return A;
}

double flat_norm_rp(const TangentField& v) {
    return std::hypot(v.r_field().norm(), v.p.norm());
}

double sup_norm_rp(const TangentField& v) {
    return std::max(v.r_field().cwiseAbs().maxCoeff(), v.p.cwiseAbs().maxCoeff());
}

} // namespace

namespace {

// Tangents of the asymptotic per-soliton coordinates (gamma_j^pm, kappa_j):
// varying kappa_l at fixed finite-time phases also drags every asymptotic
// phase through the interaction shifts zeta_j(kappa), so the kappa tangent
// acquires gamma-mode bumps on the other solitons.  Subtracting
// d zeta_j / d kappa_l times the gamma modes removes them; the 2x2 block
// structure of the Gram matrix lives in these coordinates.
std::vector<TangentField> asymptotic_tangents(const SolitonParams& params,
                                              const std::vector<TangentField>& modes,
                                              bool plus_regime) {
    const int m = params.m();
    auto zeta_at = [&](const Eigen::VectorXd& xi) {
        PhaseShifts z = phase_shifts(SolitonParams::from_xi(xi));
        return plus_regime ? z.zeta_plus : z.zeta_minus;
    };
    std::vector<TangentField> out = modes;
    const double h = 1e-6;
    for (int l = 0; l < m; ++l) {
        Eigen::VectorXd xp = params.xi(), xm = params.xi();
        xp[2 * l + 1] += h;
        xm[2 * l + 1] -= h;
        Eigen::VectorXd dz = (zeta_at(xp) - zeta_at(xm)) / (2.0 * h);
        TangentField& tk = out[2 * l + 1];
        for (int j = 0; j < m; ++j) {
            tk.q -= dz[j] * modes[2 * j].q;
            tk.p -= dz[j] * modes[2 * j].p;
        }
        tk.r.reset();
    }
    return out;
}

} // namespace

GramMatrix gram_matrix(const SolitonParams& params, double t, const LatticeGrid& grid,
                       double cond_threshold) {
    const int m = params.m();
    GramMatrix g;
    ProjectionBasis basis = projection_basis(params, t, grid);
    g.A = mode_pair_matrix(basis.modes);

    // structure matrix: asymptotic coordinates plus the tail lift per kappa
    std::vector<double> core(m);
    for (int l = 0; l < m; ++l)
        core[l] = (t * std::sinh(params.kappas[l]) - params.gammas[l]) / params.kappas[l];
    const bool plus_regime = (m < 2) || core.back() >= core.front();
    std::vector<TangentField> structure = asymptotic_tangents(params, basis.modes, plus_regime);
    for (int l = 0; l < m; ++l) {
        TangentField& tk = structure[2 * l + 1];
        for (int i = 0; i < grid.size(); ++i)
            tk.q[i] += 1.0 + std::tanh((grid.site(i) - core[l]) / 3.0);
    }
    g.A_localized = mode_pair_matrix(structure);
    g.alpha0.resize(m);
    g.alpha1.resize(m);
    for (int k = 0; k < m; ++k) {
        g.alpha0[k] = g.A_localized(2 * k, 2 * k + 1);
        g.alpha1[k] = g.A_localized(2 * k + 1, 2 * k + 1);
    }
    g.off_block_max = 0.0;
    for (int i = 0; i < 2 * m; ++i)
        for (int j = 0; j < 2 * m; ++j)
            if (i / 2 != j / 2)
                g.off_block_max = std::max(g.off_block_max, std::abs(g.A_localized(i, j)));

    if (m > 0) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(g.A, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        g.cond = sv[0] / sv[2 * m - 1];
        if (!(g.cond < cond_threshold)) {
            std::ostringstream os;
            os << "gram_matrix: singular pairing matrix, condition " << g.cond;
            throw std::runtime_error(os.str());
        }
        g.A_inv = g.A.fullPivLu().inverse();
    }
    return g;
}

ModulationFitResult modulation_fit(const LatticeState& u, double t, const Eigen::VectorXd& xi_guess,
                                   const ModulationOptions& opts) {
    Eigen::VectorXd xi = xi_guess;
    std::vector<double> history;

    FamilyEval fam = eval_family(SolitonParams::from_xi(xi), t, u.grid, kState | kTangents);
    TangentField v = perturbation_between(u, fam);
    if (flat_norm_rp(v) > opts.tube_radius) {
        std::ostringstream os;
        os << "modulation_fit: initial guess outside the tubular neighborhood, |v| = "
           << flat_norm_rp(v) << " > " << opts.tube_radius;
        throw std::runtime_error(os.str());
    }
    Eigen::VectorXd F = pairings(v, fam.tangents);

    int it = 0;
    for (; it < opts.max_iters; ++it) {
        history.push_back(F.cwiseAbs().maxCoeff());
        if (history.back() <= opts.pairing_tol) break;

        Eigen::MatrixXd A = mode_pair_matrix(fam.tangents);
        Eigen::VectorXd step = A.transpose().fullPivLu().solve(F);

        double lambda = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 10; ++halving) {
            Eigen::VectorXd xi_try = xi + lambda * step;
            bool valid = true;
            FamilyEval fam_try;
            try {
                fam_try = eval_family(SolitonParams::from_xi(xi_try), t, u.grid,
                                      kState | kTangents);
            } catch (const std::exception&) {
                valid = false;
            }
            if (valid) {
                TangentField v_try = perturbation_between(u, fam_try);
                Eigen::VectorXd F_try = pairings(v_try, fam_try.tangents);
                if (F_try.cwiseAbs().maxCoeff() < history.back()) {
                    xi = xi_try;
                    fam = std::move(fam_try);
                    v = std::move(v_try);
                    F = std::move(F_try);
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if (!accepted) break;
    }

    const double final_pairing = F.cwiseAbs().maxCoeff();
    if (final_pairing > opts.pairing_tol) {
        std::ostringstream os;
        os << "modulation_fit: Newton stalled after " << it << " iterations; |F| history:";
        for (double h : history) os << " " << h;
        throw std::runtime_error(os.str());
    }
    if (flat_norm_rp(v) > opts.tube_radius) {
        std::ostringstream os;
        os << "modulation_fit: fitted perturbation left the tube, |v| = " << flat_norm_rp(v);
        throw std::runtime_error(os.str());
    }

    ModulationFitResult out;
    out.xi = xi;
    out.v = std::move(v);
    out.modes = std::move(fam.tangents);
    out.newton_iters = it;
    out.pairing_max = final_pairing;
    return out;
}

ResidualSplit residual_split(const SolitonParams& frozen, const Eigen::VectorXd& xi_now,
                             const TangentField& v, double t, const WeightFrame& frame) {
    const LatticeGrid& grid = v.grid;
    const int N = grid.size();
    HamiltonianState Uc = HamiltonianState::from_state(
        m_soliton(SolitonParams::from_xi(xi_now), t, grid));
    HamiltonianState Uf = HamiltonianState::from_state(m_soliton(frozen, t, grid));

    const Field vr = v.r_field();
    ResidualSplit out;
    out.R1.resize(N);
    out.R2.resize(N);
    for (int i = 0; i < N; ++i) {
        out.R1[i] = potential_d1(Uc.R[i] + vr[i]) - potential_d1(Uc.R[i]) -
                    potential_d2(Uc.R[i]) * vr[i];
        out.R2[i] = (potential_d2(Uf.R[i]) - potential_d2(Uc.R[i])) * vr[i];
    }
    const Field R = out.R1 + out.R2;
    out.R_weighted = weighted_norm(R, grid, frame, t);

    const double dxi = (xi_now - frozen.xi()).norm();
    const double denom = (sup_norm_rp(v) + dxi) * weighted_norm_rp(v, frame, t);
    out.bound_ratio = (denom > 0.0) ? out.R_weighted / denom : 0.0;
    return out;
}

Eigen::VectorXd modulation_rhs(const ResidualSplit& split, const std::vector<TangentField>& modes) {
    const Field R = split.R1 + split.R2;
    Eigen::VectorXd b(static_cast<int>(modes.size()));
    for (size_t j = 0; j < modes.size(); ++j) {
        if (!modes[j].r) throw std::invalid_argument("modulation_rhs: modes need analytic r slots");
        b[static_cast<int>(j)] = R.dot(*modes[j].r);
    }
    return b;
}

TangentField make_perturbation(const PerturbationSpec& spec, const SolitonParams& params,
                               double t, const LatticeGrid& grid) {
    TangentField v(grid);
    const int N = grid.size();
    switch (spec.shape) {
        case PerturbationSpec::Shape::DeltaSpike: {
            const int n = std::clamp(static_cast<int>(std::lround(spec.location)),
                                     grid.n_min, grid.n_max);
            v.p[grid.index(n)] = 1.0;
            break;
        }
        case PerturbationSpec::Shape::GaussianBump: {
            for (int i = 0; i < N; ++i) {
                const double x = (grid.site(i) - spec.location) / spec.width;
                v.p[i] = std::exp(-0.5 * x * x);
            }
            break;
        }
        case PerturbationSpec::Shape::ProjectedRandom: {
            std::mt19937_64 rng(spec.seed);
            std::normal_distribution<double> N01;
            for (int i = 0; i < N; ++i) {
                const double env = std::exp(-std::abs(grid.site(i) - spec.location) / spec.width);
                v.q[i] = env * N01(rng);
                v.p[i] = env * N01(rng);
            }
            break;
        }
    }
    if (spec.amplitude == 0.0) return TangentField(grid);
    if (spec.project && params.m() > 0) v = project_Xm(v, t, params);
    const double norm = flat_norm_rp(v);
    if (norm == 0.0) throw std::runtime_error("make_perturbation: degenerate perturbation");
    const double s = spec.amplitude / norm;
    v.q *= s;
    v.p *= s;
    v.r.reset();
    return v;
}

const ModulationSample& ModulationRecord::at_time(double t) const {
    const ModulationSample* best = nullptr;
    double gap = std::numeric_limits<double>::infinity();
    for (const auto& s : samples) {
        const double d = std::abs(s.t - t);
        if (d < gap) {
            gap = d;
            best = &s;
        }
    }
    if (!best) throw std::runtime_error("ModulationRecord: empty record");
    return *best;
}

Eigen::VectorXd ModulationRecord::xi_delta(double ta, double tb) const {
    return at_time(tb).xi - at_time(ta).xi;
}

ModulationRecord run_stability_experiment(const StabilityConfig& config) {
    ModulationRecord record;
    record.initial_params = config.params;
    record.grid = config.grid;
    record.frame = config.frame;

    LatticeState U0 = m_soliton(config.params, config.t0, config.grid);
    TangentField v0 = make_perturbation(config.perturbation, config.params, config.t0, config.grid);
    LatticeState u0(U0.grid, U0.Q + v0.q, U0.P + v0.p);

    Trajectory traj = integrate_toda(u0, config.t0, config.t1, config.dt, config.record_every,
                                     config.scheme);
    record.integ_meta = traj.meta;
    if (traj.meta.blew_up) {
        record.truncated = true;
        record.truncation_reason = "integration blow-up";
    }

    Eigen::VectorXd xi = config.params.xi();
    const SolitonParams frozen = config.params;
    for (size_t k = 0; k < traj.times.size(); ++k) {
        const double t = traj.times[k];
        ModulationFitResult fit;
        try {
            fit = modulation_fit(traj.states[k], t, xi, config.fit);
        } catch (const std::exception& e) {
            record.truncated = true;
            record.truncation_reason = e.what();
            break;
        }
        xi = fit.xi;

        ModulationSample s;
        s.t = t;
        s.xi = fit.xi;
        s.v_flat = flat_norm_rp(fit.v);
        s.v_sup = sup_norm_rp(fit.v);
        s.v_weighted_log = weighted_log_norm_rp(fit.v, config.frame, t);
        s.pairing_max = fit.pairing_max;
        s.newton_iters = fit.newton_iters;
        s.h_value = hamiltonian(traj.states[k]);

        ResidualSplit split = residual_split(frozen, fit.xi, fit.v, t, config.frame);
        s.R_weighted = split.R_weighted;
        s.b = modulation_rhs(split, fit.modes);
        Eigen::MatrixXd A = mode_pair_matrix(fit.modes);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
        s.gram_cond = svd.singularValues()[0] / svd.singularValues()[A.cols() - 1];
        record.samples.push_back(std::move(s));
    }

    // decay fit of the weighted norm over the post-transient window
    if (record.samples.size() >= 4) {
        const double t0 = record.samples.front().t, t1 = record.samples.back().t;
        const double start = t0 + 0.2 * (t1 - t0);
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int n = 0;
        for (const auto& s : record.samples) {
            if (s.t < start || !std::isfinite(s.v_weighted_log)) continue;
            sx += s.t;
            sy += s.v_weighted_log;
            sxx += s.t * s.t;
            sxy += s.t * s.v_weighted_log;
            ++n;
        }
        if (n >= 3) {
            const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
            const double intercept = (sy - slope * sx) / n;
            double rss = 0.0;
            int cnt = 0;
            for (const auto& s : record.samples) {
                if (s.t < start || !std::isfinite(s.v_weighted_log)) continue;
                const double e = s.v_weighted_log - (intercept + slope * s.t);
                rss += e * e;
                ++cnt;
            }
            record.decay_rate_weighted = -slope;
            record.decay_fit_residual = std::sqrt(rss / cnt);
        }
    }
    return record;
}

XiDotEstimate xi_dot_estimate(const ModulationRecord& record) {
    XiDotEstimate est;
    const auto& s = record.samples;
    for (size_t k = 1; k + 1 < s.size(); ++k) {
        const double dt = s[k + 1].t - s[k - 1].t;
        if (!(dt > 0.0)) continue;
        Eigen::VectorXd fd = (s[k + 1].xi - s[k - 1].xi) / dt;

        GramMatrix g = gram_matrix(SolitonParams::from_xi(s[k].xi), s[k].t, record.grid);
        Eigen::VectorXd model = g.A_inv * s[k].b;

        est.times.push_back(s[k].t);
        est.fd_norm.push_back(fd.norm());
        est.model_norm.push_back(model.norm());
        est.mismatch.push_back((fd - model).norm());
        est.bound_ratio.push_back(s[k].R_weighted > 0.0 ? fd.norm() / s[k].R_weighted : 0.0);
    }
    for (double r : est.bound_ratio) est.fitted_K = std::max(est.fitted_K, r);
    return est;
}

double grad_pairing(const HamiltonianState& U, const TangentField& v) {
    HamiltonianState g = grad_hamiltonian(U);
    return g.R.dot(v.r_field()) + g.P.dot(v.p);
}

} // namespace toda
