#include "toda/soliton.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace toda {

SolitonParams::SolitonParams(std::vector<double> k, std::vector<double> g)
    : kappas(std::move(k)), gammas(std::move(g)) {
    if (kappas.size() != gammas.size())
        throw std::invalid_argument("SolitonParams: kappa/gamma length mismatch");
    for (double kap : kappas)
        if (!(kap > 0.0) || !std::isfinite(kap))
            throw std::invalid_argument("SolitonParams: kappa must be positive");
    for (double gam : gammas)
        if (!std::isfinite(gam)) throw std::invalid_argument("SolitonParams: non-finite gamma");

    std::vector<int> order(kappas.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return kappas[a] < kappas[b]; });
    std::vector<double> ks(kappas.size()), gs(kappas.size());
    for (size_t i = 0; i < order.size(); ++i) {
        ks[i] = kappas[order[i]];
        gs[i] = gammas[order[i]];
    }
    for (size_t i = 1; i < ks.size(); ++i)
        if (!(ks[i] > ks[i - 1]))
            throw std::invalid_argument("SolitonParams: kappas must be distinct");
    kappas = std::move(ks);
    gammas = std::move(gs);
}

double SolitonParams::kappa_min() const {
    if (kappas.empty()) throw std::logic_error("kappa_min of empty params");
    return kappas.front();
}

double SolitonParams::total_jump() const {
    return -2.0 * std::accumulate(kappas.begin(), kappas.end(), 0.0);
}

double SolitonParams::speed(int i) const { return std::sinh(kappas.at(i)) / kappas.at(i); }

Eigen::VectorXd SolitonParams::xi() const {
    Eigen::VectorXd out(2 * m());
    for (int i = 0; i < m(); ++i) {
        out[2 * i] = gammas[i];
        out[2 * i + 1] = kappas[i];
    }
    return out;
}

SolitonParams SolitonParams::from_xi(const Eigen::VectorXd& xi) {
    if (xi.size() % 2 != 0) throw std::invalid_argument("from_xi: odd length");
    const int m = static_cast<int>(xi.size()) / 2;
    std::vector<double> ks(m), gs(m);
    for (int i = 0; i < m; ++i) {
        gs[i] = xi[2 * i];
        ks[i] = xi[2 * i + 1];
    }
    return SolitonParams(std::move(ks), std::move(gs));
}

SolitonParams SolitonParams::with_soliton(double kappa, double gamma) const {
    std::vector<double> ks = kappas, gs = gammas;
    ks.push_back(kappa);
    gs.push_back(gamma);
    return SolitonParams(std::move(ks), std::move(gs));
}

SolitonParams SolitonParams::without_largest() const {
    if (kappas.empty()) throw std::logic_error("without_largest of empty params");
    std::vector<double> ks(kappas.begin(), kappas.end() - 1);
    std::vector<double> gs(gammas.begin(), gammas.end() - 1);
    return SolitonParams(std::move(ks), std::move(gs));
}

double log_cosh(double x) {
    const double ax = std::abs(x);
    return ax + std::log1p(std::exp(-2.0 * ax)) - M_LN2;
}

LatticeGrid soliton_grid(int n_min, int n_max, const SolitonParams& params) {
    return LatticeGrid(n_min, n_max, 0.0, params.total_jump());
}

LatticeState one_soliton(double kappa, double gamma, double t, const LatticeGrid& grid_in) {
    if (!(kappa > 0.0)) throw std::invalid_argument("one_soliton: kappa must be positive");
    LatticeGrid grid(grid_in.n_min, grid_in.n_max, 0.0, -2.0 * kappa);
    const double s = std::sinh(kappa);
    const int N = grid.size();
    Field Q(N), P(N);
    for (int i = 0; i < N; ++i) {
        const int n = grid.site(i);
        const double th0 = kappa * n - t * s + gamma;
        const double th1 = th0 + kappa;
        Q[i] = log_cosh(th0) - log_cosh(th1) - kappa;
        P[i] = -s * (std::tanh(th0) - std::tanh(th1));
    }
    return LatticeState(grid, std::move(Q), std::move(P));
}

namespace {

// Precomputed parameter data shared by all site evaluations.
struct TauParams {
    int m = 0;
    Eigen::VectorXd kappa, sigma, coshk;     // sinh/cosh of kappa
    Eigen::VectorXd gamma_det;               // gamma + log(alpha_jj)/2
    Eigen::VectorXd A;                       // 1/(e^{2 kappa_i} - 1)
    Eigen::MatrixXd alpha;                   // 1/(1 - e^{-(ki+kj)})
    Eigen::MatrixXd B;                       // 1/(e^{ki+kj} - 1)

    explicit TauParams(const SolitonParams& p) {
        m = p.m();
        kappa.resize(m);
        sigma.resize(m);
        coshk.resize(m);
        gamma_det.resize(m);
        A.resize(m);
        alpha.resize(m, m);
        B.resize(m, m);
        for (int i = 0; i < m; ++i) {
            kappa[i] = p.kappas[i];
            sigma[i] = std::sinh(kappa[i]);
            coshk[i] = std::cosh(kappa[i]);
            A[i] = 1.0 / std::expm1(2.0 * kappa[i]);
        }
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                alpha(i, j) = 1.0 / (-std::expm1(-(kappa[i] + kappa[j])));
                B(i, j) = 1.0 / std::expm1(kappa[i] + kappa[j]);
            }
        for (int i = 0; i < m; ++i)
            gamma_det[i] = p.gammas[i] + 0.5 * std::log(alpha(i, i));
    }
};

// One lattice site of the scaled tau evaluation:
//   det(I + C) = exp(-2 sum m_i) * det(diag(e^{2 m_i}) + G),
//   G_ij = exp(-((s_i - m_i) + (s_j - m_j))) alpha_ij,  m_i = min(s_i, 0),
// so all matrix entries stay bounded however large the phases get.
struct TauSite {
    const TauParams& par;
    double n, t;
    Eigen::MatrixXd G;
    Eigen::LLT<Eigen::MatrixXd> llt;
    double logtau = 0.0;

    TauSite(const TauParams& par_, double n_, double t_) : par(par_), n(n_), t(t_) {
        const int m = par.m;
        if (m == 0) return;
        Eigen::VectorXd s(m), mm(m);
        for (int i = 0; i < m; ++i) {
            s[i] = par.kappa[i] * n - par.sigma[i] * t + par.gamma_det[i];
            mm[i] = std::min(s[i], 0.0);
        }
        G.resize(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                G(i, j) = std::exp(-((s[i] - mm[i]) + (s[j] - mm[j]))) * par.alpha(i, j);
        Eigen::MatrixXd X = G;
        for (int i = 0; i < m; ++i) X(i, i) += std::exp(2.0 * mm[i]);
        llt.compute(X);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("tau matrix I + C lost positive definiteness (numerical breakdown)");
        double ld = 0.0;
        for (int i = 0; i < m; ++i) ld += std::log(llt.matrixL()(i, i));
        logtau = -2.0 * mm.sum() + 2.0 * ld;
    }

    // tr[X^{-1} W] and tr[X^{-1} Wa X^{-1} Wb] through the Cholesky congruence
    // Y = L^{-1} W L^{-T}, which keeps the nearly singular far-field X benign.
    Eigen::MatrixXd congruence(const Eigen::MatrixXd& W) const {
        Eigen::MatrixXd Y = llt.matrixL().solve(W);
        return llt.matrixL().solve(Y.transpose()).transpose();
    }
    double trace(const Eigen::MatrixXd& W) const { return congruence(W).trace(); }
    double trace2(const Eigen::MatrixXd& Wa, const Eigen::MatrixXd& Wb) const {
        return (congruence(Wa) * congruence(Wb)).trace();
    }
};

// Entrywise coefficient matrices c such that dE = (c o E); derivatives of
// log tau are then tr[X^{-1} (c o G)] in the scaled variables.
struct TauCoeffs {
    const TauParams& par;
    double n, t;

    Eigen::MatrixXd c_t() const {
        const int m = par.m;
        Eigen::MatrixXd c(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) c(i, j) = par.sigma[i] + par.sigma[j];
        return c;
    }
    Eigen::MatrixXd c_tt() const { return c_t().cwiseProduct(c_t()); }
    Eigen::MatrixXd c_gamma(int l) const {
        const int m = par.m;
        Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m, m);
        for (int j = 0; j < m; ++j) {
            c(l, j) -= 1.0;
            c(j, l) -= 1.0;
        }
        return c;
    }
    Eigen::MatrixXd c_kappa(int l) const {
        const int m = par.m;
        const double D = n - t * par.coshk[l] - par.A[l];
        Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m, m);
        for (int j = 0; j < m; ++j) {
            c(l, j) -= D + par.B(l, j);
            c(j, l) -= D + par.B(j, l);
        }
        return c;
    }
    Eigen::MatrixXd c_gamma_t(int l) const { return c_gamma(l).cwiseProduct(c_t()); }
    Eigen::MatrixXd c_kappa_t(int l) const {
        const int m = par.m;
        Eigen::MatrixXd c = c_kappa(l).cwiseProduct(c_t());
        for (int j = 0; j < m; ++j) {
            c(l, j) += par.coshk[l];
            c(j, l) += par.coshk[l];
        }
        return c;
    }
};

// Per-site derivative bундle of log tau.
struct SiteDerivs {
    double lt = 0.0, dt = 0.0, dtt = 0.0;
    Eigen::VectorXd dg, dk, dgt, dkt;   // size m each
};

SiteDerivs eval_site(const TauParams& par, double n, double t, unsigned parts) {
    SiteDerivs out;
    const int m = par.m;
    out.dg.setZero(m);
    out.dk.setZero(m);
    out.dgt.setZero(m);
    out.dkt.setZero(m);
    if (m == 0) return out;

    TauSite site(par, n, t);
    TauCoeffs co{par, n, t};
    out.lt = site.logtau;

    Eigen::MatrixXd Wt;
    if (parts & (kState | kPdot | kTangents)) {
        Wt = co.c_t().cwiseProduct(site.G);
        out.dt = site.trace(Wt);
    }
    if (parts & kPdot) {
        const Eigen::MatrixXd Wtt = co.c_tt().cwiseProduct(site.G);
        out.dtt = site.trace(Wtt) - site.trace2(Wt, Wt);
    }
    if (parts & kTangents) {
        for (int l = 0; l < m; ++l) {
            const Eigen::MatrixXd Wg = co.c_gamma(l).cwiseProduct(site.G);
            const Eigen::MatrixXd Wk = co.c_kappa(l).cwiseProduct(site.G);
            out.dg[l] = site.trace(Wg);
            out.dk[l] = site.trace(Wk);
            out.dgt[l] = site.trace(co.c_gamma_t(l).cwiseProduct(site.G)) - site.trace2(Wg, Wt);
            out.dkt[l] = site.trace(co.c_kappa_t(l).cwiseProduct(site.G)) - site.trace2(Wk, Wt);
        }
    }
    return out;
}

} // namespace

FamilyEval eval_family(const SolitonParams& params, double t, const LatticeGrid& grid_in,
                       unsigned parts) {
    const TauParams par(params);
    const int m = params.m();
    LatticeGrid grid = (m > 0) ? soliton_grid(grid_in.n_min, grid_in.n_max, params)
                               : LatticeGrid(grid_in.n_min, grid_in.n_max, 0.0, 0.0);
    const int N = grid.size();

    FamilyEval fam;
    fam.state.grid = grid;
    fam.state.Q.setZero(N);
    fam.state.P.setZero(N);
    if (parts & kPdot) fam.Pdot.setZero(N);
    if (parts & kTangents) {
        fam.tangents.assign(2 * m, TangentField(grid));
        for (auto& tf : fam.tangents) tf.r = Field::Zero(N);
    }
    if (m == 0) return fam;

    // log tau and derivatives on sites n_min .. n_max + 2 (R needs two extra)
    const int M = N + 2;
    std::vector<SiteDerivs> d(M);
    for (int k = 0; k < M; ++k)
        d[k] = eval_site(par, static_cast<double>(grid.n_min + k), t, parts);

    const double jump = params.total_jump();
    for (int i = 0; i < N; ++i) {
        fam.state.Q[i] = d[i].lt - d[i + 1].lt + jump;
        fam.state.P[i] = d[i].dt - d[i + 1].dt;
        if (parts & kPdot) fam.Pdot[i] = d[i].dtt - d[i + 1].dtt;
    }
    if (parts & kTangents) {
        for (int l = 0; l < m; ++l) {
            TangentField& tg = fam.tangents[2 * l];       // gamma_l
            TangentField& tk = fam.tangents[2 * l + 1];   // kappa_l
            for (int i = 0; i < N; ++i) {
                tg.q[i] = d[i].dg[l] - d[i + 1].dg[l];
                tg.p[i] = d[i].dgt[l] - d[i + 1].dgt[l];
                (*tg.r)[i] = 2.0 * d[i + 1].dg[l] - d[i].dg[l] - d[i + 2].dg[l];
                tk.q[i] = d[i].dk[l] - d[i + 1].dk[l] - 2.0;
                tk.p[i] = d[i].dkt[l] - d[i + 1].dkt[l];
                (*tk.r)[i] = 2.0 * d[i + 1].dk[l] - d[i].dk[l] - d[i + 2].dk[l];
            }
        }
    }
    return fam;
}

LatticeState m_soliton(const SolitonParams& params, double t, const LatticeGrid& grid) {
    return eval_family(params, t, grid, kState).state;
}

Field soliton_tension(const SolitonParams& params, double t, const LatticeGrid& grid) {
    const int N = grid.size();
    Field out(N + 1);
    if (params.m() == 0) {
        out.setOnes();
        return out;
    }
    const TauParams par(params);
    // bond b joins sites n_min+b-1 and n_min+b; e^{-R_n} = tau_n tau_{n+2} / tau_{n+1}^2,
    // so bond b needs log tau at sites n_min+b-1 .. n_min+b+1
    std::vector<double> lt(N + 4);
    for (int k = 0; k < N + 4; ++k)
        lt[k] = TauSite(par, static_cast<double>(grid.n_min - 1 + k), t).logtau;
    for (int b = 0; b <= N; ++b)
        out[b] = std::exp(lt[b] + lt[b + 2] - 2.0 * lt[b + 1]);
    return out;
}

std::vector<TangentField> soliton_tangents(const SolitonParams& params, double t,
                                           const LatticeGrid& grid) {
    return eval_family(params, t, grid, kState | kTangents).tangents;
}

TangentField soliton_derivative(const SolitonParams& params, double t, const LatticeGrid& grid,
                                ParamKind kind, int index, bool fd_check) {
    if (index < 0 || index >= params.m())
        throw std::invalid_argument("soliton_derivative: index out of range");
    auto tangents = soliton_tangents(params, t, grid);
    const TangentField& tf = tangents[2 * index + (kind == ParamKind::Kappa ? 1 : 0)];

    if (fd_check) {
        const double h = 1e-5;
        auto perturbed = [&](double dx) {
            Eigen::VectorXd xi = params.xi();
            xi[2 * index + (kind == ParamKind::Kappa ? 1 : 0)] += dx;
            return m_soliton(SolitonParams::from_xi(xi), t, grid);
        };
        auto central = [&](double hh) {
            LatticeState plus = perturbed(hh), minus = perturbed(-hh);
            return std::make_pair(Field((plus.Q - minus.Q) / (2.0 * hh)),
                                  Field((plus.P - minus.P) / (2.0 * hh)));
        };
        auto [dQ1, dP1] = central(h);
        auto [dQ2, dP2] = central(h / 2.0);
        Field dQ = (4.0 * dQ2 - dQ1) / 3.0;
        Field dP = (4.0 * dP2 - dP1) / 3.0;
        const double scale = std::max({tf.q.cwiseAbs().maxCoeff(), tf.p.cwiseAbs().maxCoeff(), 1e-12});
        const double err = std::max((dQ - tf.q).cwiseAbs().maxCoeff(), (dP - tf.p).cwiseAbs().maxCoeff());
        if (err > 1e-6 * scale) {
            std::ostringstream os;
            os << "soliton_derivative: analytic/finite-difference mismatch " << err
               << " (relative to scale " << scale << ")";
            throw std::runtime_error(os.str());
        }
    }
    return tf;
}

PhaseShifts phase_shifts(const SolitonParams& params) {
    const int m = params.m();
    PhaseShifts out;
    out.zeta_plus.setZero(m);
    out.zeta_minus.setZero(m);
    out.raw_plus.setZero(m);
    out.raw_minus.setZero(m);
    if (m == 0) return out;

    const TauParams par(params);
    auto logdet_block = [&](int lo, int hi) {   // alpha[lo..hi] inclusive; empty -> 0
        if (lo > hi) return 0.0;
        const int k = hi - lo + 1;
        Eigen::MatrixXd blk = par.alpha.block(lo, lo, k, k);
        Eigen::LLT<Eigen::MatrixXd> llt(blk);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("phase_shifts: interaction matrix not positive definite");
        double ld = 0.0;
        for (int i = 0; i < k; ++i) ld += std::log(llt.matrixL()(i, i));
        return 2.0 * ld;
    };

    for (int j = 0; j < m; ++j) {
        out.raw_plus[j] = 0.5 * (logdet_block(j + 1, m - 1) - logdet_block(j, m - 1));
        out.raw_minus[j] = 0.5 * (logdet_block(0, j - 1) - logdet_block(0, j));
        const double diag = 0.5 * std::log(par.alpha(j, j));
        out.zeta_plus[j] = out.raw_plus[j] + diag;
        out.zeta_minus[j] = out.raw_minus[j] + diag;
    }
    return out;
}

ResolutionResidual resolution_residual(const SolitonParams& params, double t,
                                       const LatticeGrid& grid) {
    ResolutionResidual out;
    const PhaseShifts zeta = phase_shifts(params);
    const Eigen::VectorXd& z = (t >= 0.0) ? zeta.zeta_plus : zeta.zeta_minus;

    LatticeState qm = m_soliton(params, t, grid);
    Field sum = Field::Zero(grid.size());
    for (int j = 0; j < params.m(); ++j) {
        LatticeState s1 = one_soliton(params.kappas[j], params.gammas[j] + z[j], t, grid);
        sum += s1.Q;
        const double core = (t * std::sinh(params.kappas[j]) - (params.gammas[j] + z[j])) /
                            params.kappas[j];
        if (core < grid.n_min + 10 || core > grid.n_max - 10) out.boundary_flag = true;
    }
    out.l1 = (qm.Q - sum).lpNorm<1>();
    return out;
}

ProfileIdentityResidual profile_identity_residual(const SolitonParams& params, double t,
                                                  const LatticeGrid& grid) {
    ProfileIdentityResidual out;
    FamilyEval fam = eval_family(params, t, grid, kState | kPdot | kTangents);
    const int m = params.m();
    Field comboQ = Field::Zero(grid.size());
    Field comboP = Field::Zero(grid.size());
    for (int l = 0; l < m; ++l) {
        const double s = std::sinh(params.kappas[l]);
        comboQ += s * fam.tangents[2 * l].q;
        comboP += s * fam.tangents[2 * l].p;
    }
    // dQ/dt = P and dP/dt = Pdot analytically
    out.dtU_norm = std::max(fam.state.P.cwiseAbs().maxCoeff(), fam.Pdot.cwiseAbs().maxCoeff());
    for (int c = 1; c <= 2; ++c) {
        const double rq = (fam.state.P + c * comboQ).cwiseAbs().maxCoeff();
        const double rp = (fam.Pdot + c * comboP).cwiseAbs().maxCoeff();
        out.residual[c - 1] = std::max(rq, rp);
    }
    out.resolved_factor = (out.residual[0] <= out.residual[1]) ? 1 : 2;
    return out;
}

int resolved_profile_factor(const SolitonParams& params, const LatticeGrid& grid, double t) {
    if (params.m() == 0) return 1;
    return profile_identity_residual(params, t, grid).resolved_factor;
}

Eigen::VectorXd fit_phase_offsets(const SolitonParams& params, double t, const LatticeGrid& grid) {
    const int m = params.m();
    Eigen::VectorXd offsets(m);
    if (m == 0) return offsets;
    LatticeState qm = m_soliton(params, t, grid);

    // core positions (without shifts; the fit window just has to contain the core)
    std::vector<double> core(m);
    for (int j = 0; j < m; ++j)
        core[j] = (t * std::sinh(params.kappas[j]) - params.gammas[j]) / params.kappas[j];

    for (int j = 0; j < m; ++j) {
        // half the distance to the nearest other core, capped by the grid
        double sep = std::numeric_limits<double>::infinity();
        for (int k = 0; k < m; ++k)
            if (k != j) sep = std::min(sep, std::abs(core[k] - core[j]) / 2.0);
        sep = std::min(sep, 40.0);
        const int lo = std::max(grid.n_min, static_cast<int>(std::floor(core[j] - sep + 1)));
        const int hi = std::min(grid.n_max, static_cast<int>(std::ceil(core[j] + sep - 1)));
        if (hi - lo < 8)
            throw std::runtime_error("fit_phase_offsets: cores are not separated enough to fit");

        // background drop from the cores already passed (to the left of this one)
        double base = 0.0;
        for (int k = 0; k < m; ++k)
            if (core[k] < core[j]) base += -2.0 * params.kappas[k];

        const double kap = params.kappas[j];
        const double sig = std::sinh(kap);
        auto window_error = [&](double delta) {
            double acc = 0.0;
            for (int n = lo; n <= hi; ++n) {
                const double th0 = kap * n - t * sig + params.gammas[j] + delta;
                const double q1 = log_cosh(th0) - log_cosh(th0 + kap) - kap;
                const double d = qm.Q[grid.index(n)] - base - q1;
                acc += d * d;
            }
            return acc;
        };

        // golden-section search on a generous bracket
        double a = -4.0, b = 4.0;
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        double c1 = b - gr * (b - a), c2 = a + gr * (b - a);
        double f1 = window_error(c1), f2 = window_error(c2);
        for (int it = 0; it < 200; ++it) {
            if (f1 < f2) {
                b = c2; c2 = c1; f2 = f1;
                c1 = b - gr * (b - a);
                f1 = window_error(c1);
            } else {
                a = c1; c1 = c2; f1 = f2;
                c2 = a + gr * (b - a);
                f2 = window_error(c2);
            }
            if (b - a < 1e-12) break;
        }
        offsets[j] = 0.5 * (a + b);
    }
    return offsets;
}

} // namespace toda
