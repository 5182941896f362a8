#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "toda/lattice.hpp"
#include "toda/soliton.hpp"

#include <random>

using namespace toda;

namespace {

// Interior sup-norm of the lattice-equation residual: force computed from Q
// against the tau-function's analytic second time derivative.
double equation_residual(const SolitonParams& params, double t, const LatticeGrid& grid) {
    FamilyEval fam = eval_family(params, t, grid, kState | kPdot);
    auto rhs = toda_rhs(fam.state);
    double err = 0.0;
    for (int i = 2; i < grid.size() - 2; ++i)
        err = std::max(err, std::abs(rhs.Pdot[i] - fam.Pdot[i]));
    return err;
}

// Recursive cofactor determinant, the second route for the phase-shift checks.
double cofactor_det(const Eigen::MatrixXd& a) {
    const int n = static_cast<int>(a.rows());
    if (n == 0) return 1.0;
    if (n == 1) return a(0, 0);
    double det = 0.0, sign = 1.0;
    for (int j = 0; j < n; ++j) {
        Eigen::MatrixXd minor(n - 1, n - 1);
        for (int r = 1; r < n; ++r) {
            int cc = 0;
            for (int c = 0; c < n; ++c)
                if (c != j) minor(r - 1, cc++) = a(r, c);
        }
        det += sign * a(0, j) * cofactor_det(minor);
        sign = -sign;
    }
    return det;
}

Eigen::MatrixXd interaction_matrix(const SolitonParams& p) {
    const int m = p.m();
    Eigen::MatrixXd a(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            a(i, j) = 1.0 / (-std::expm1(-(p.kappas[i] + p.kappas[j])));
    return a;
}

} // namespace

TEST_CASE("one_soliton: closed-form value, limits, monotonicity") {
    LatticeGrid g(-60, 60);
    LatticeState s = one_soliton(1.0, 0.0, 0.0, g);

    // frozen from extended-precision evaluation of log(1/cosh 1) - 1
    const long double q0 = -std::log(std::cosh(1.0L)) - 1.0L;
    CHECK(static_cast<double>(q0) == doctest::Approx(-1.433781).epsilon(1e-6));
    CHECK(s.Q[g.index(0)] == doctest::Approx(static_cast<double>(q0)).epsilon(1e-15));

    CHECK(std::abs(s.Q[0] - 0.0) < 1e-12);
    CHECK(std::abs(s.Q[g.size() - 1] - (-2.0)) < 1e-12);
    for (int i = 0; i + 1 < g.size(); ++i) CHECK(s.Q[i + 1] <= s.Q[i] + 1e-13);
    CHECK(s.boundary_contamination() < 1e-12);
}

TEST_CASE("one_soliton: traveling-wave property is exact") {
    LatticeGrid g(-40, 40);
    const double kappa = 0.7, gamma = 0.25, t = 3.2;
    LatticeState a = one_soliton(kappa, gamma, t, g);
    LatticeState b = one_soliton(kappa, gamma - t * std::sinh(kappa), 0.0, g);
    CHECK((a.Q - b.Q).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((a.P - b.P).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("one_soliton survives phases far outside double exp range") {
    LatticeGrid g(-2000, 2000);
    LatticeState s = one_soliton(1.4, 0.0, 0.0, g);
    CHECK(s.Q.allFinite());
    CHECK(std::abs(s.Q[0]) < 1e-12);
    CHECK(std::abs(s.Q[g.size() - 1] + 2.8) < 1e-12);
}

TEST_CASE("m_soliton with m = 1 reproduces one_soliton pointwise") {
    LatticeGrid g(-50, 50);
    for (double kappa : {0.4, 1.0, 1.3}) {
        for (double t : {-7.0, 0.0, 4.5}) {
            SolitonParams p({kappa}, {0.35});
            LatticeState det_form = m_soliton(p, t, g);
            LatticeState cosh_form = one_soliton(kappa, 0.35, t, g);
            CHECK((det_form.Q - cosh_form.Q).cwiseAbs().maxCoeff() < 1e-12);
            CHECK((det_form.P - cosh_form.P).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("m_soliton is an exact solution for m in {1,2,3}, random draws") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> kdist(0.3, 1.5), gdist(-2.0, 2.0), tdist(-6.0, 6.0);
    LatticeGrid g(-200, 199);
    for (int m = 1; m <= 3; ++m) {
        for (int rep = 0; rep < 3; ++rep) {
            std::vector<double> ks, gs;
            while (static_cast<int>(ks.size()) < m) {
                double k = kdist(rng);
                bool ok = true;
                for (double kk : ks) ok = ok && std::abs(kk - k) > 0.1;
                if (ok) ks.push_back(k);
            }
            for (int i = 0; i < m; ++i) gs.push_back(gdist(rng));
            SolitonParams p(ks, gs);
            const double t = tdist(rng);
            CHECK(equation_residual(p, t, g) < 1e-8);
        }
    }
}

TEST_CASE("m_soliton: total jump approaches -2 sum kappa as the grid grows") {
    SolitonParams p({0.5, 1.0}, {0.0, 0.0});
    double prev_gap = 1.0;
    for (int half : {30, 60, 120}) {
        LatticeGrid g(-half, half);
        LatticeState s = m_soliton(p, 0.0, g);
        const double jump = s.Q[g.size() - 1] - s.Q[0];
        const double gap = std::abs(jump - (-3.0));
        CHECK(gap < prev_gap + 1e-15);
        prev_gap = gap;
    }
    CHECK(prev_gap < 1e-12);
}

TEST_CASE("m_soliton is invariant under permuting the (kappa, gamma) pairs") {
    LatticeGrid g(-60, 60);
    SolitonParams a({0.5, 1.0, 1.4}, {0.3, -0.2, 1.0});
    SolitonParams b({1.4, 0.5, 1.0}, {1.0, 0.3, -0.2});
    LatticeState sa = m_soliton(a, 1.5, g);
    LatticeState sb = m_soliton(b, 1.5, g);
    CHECK((sa.Q - sb.Q).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((sa.P - sb.P).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("soliton_derivative: closed-form gamma derivative for m = 1") {
    LatticeGrid g(-40, 40);
    const double kappa = 0.9, gamma = 0.2, t = 1.1;
    SolitonParams p({kappa}, {gamma});
    TangentField dg = soliton_derivative(p, t, g, ParamKind::Gamma, 0);

    const double s = std::sinh(kappa);
    double err = 0.0;
    for (int i = 0; i < g.size(); ++i) {
        const double th0 = kappa * g.site(i) - t * s + gamma;
        const double th1 = th0 + kappa;
        err = std::max(err, std::abs(dg.q[i] - (std::tanh(th0) - std::tanh(th1))));
    }
    CHECK(err < 1e-12);

    // derivative of a monotone profile is single-signed
    CHECK(dg.q.maxCoeff() <= 1e-15);
    // decays in both directions
    CHECK(std::abs(dg.q[0]) < 1e-10);
    CHECK(std::abs(dg.q[g.size() - 1]) < 1e-10);
}

TEST_CASE("soliton_derivative: analytic fields match the finite-difference oracle") {
    LatticeGrid g(-80, 80);
    SolitonParams p({0.6, 1.1}, {0.4, -0.7});
    for (int idx = 0; idx < 2; ++idx) {
        CHECK_NOTHROW(soliton_derivative(p, 2.3, g, ParamKind::Gamma, idx, true));
        CHECK_NOTHROW(soliton_derivative(p, 2.3, g, ParamKind::Kappa, idx, true));
    }

    // independent oracle, in-test: Richardson central difference of Q, P and R
    auto fam = eval_family(p, 2.3, g, kState | kTangents);
    const double h = 1e-5;
    for (int comp = 0; comp < 4; ++comp) {
        auto state_at = [&](double dx) {
            Eigen::VectorXd xi = p.xi();
            xi[comp] += dx;
            return eval_family(SolitonParams::from_xi(xi), 2.3, g, kState).state;
        };
        auto central = [&](double hh) {
            auto sp = state_at(hh), sm = state_at(-hh);
            return std::make_pair(Field((sp.Q - sm.Q) / (2 * hh)), Field((sp.P - sm.P) / (2 * hh)));
        };
        auto [q1, p1] = central(h);
        auto [q2, p2] = central(h / 2);
        Field dQ = (4.0 * q2 - q1) / 3.0;
        Field dP = (4.0 * p2 - p1) / 3.0;
        CHECK((dQ - fam.tangents[comp].q).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((dP - fam.tangents[comp].p).cwiseAbs().maxCoeff() < 1e-6);
        // the tangent's analytic r agrees with (S - I) applied to its q away from edges
        Field r = *fam.tangents[comp].r;
        for (int i = 1; i < g.size() - 2; ++i)
            CHECK(std::abs(r[i] - (fam.tangents[comp].q[i + 1] - fam.tangents[comp].q[i])) < 1e-12);
    }
}

TEST_CASE("phase_shifts: m = 1 values and two-route determinant agreement") {
    SolitonParams p({1.0}, {0.0});
    PhaseShifts z = phase_shifts(p);
    // bare determinant ratio = -log(alpha_11)/2 = log(1 - e^{-2})/2, frozen value
    const double raw = 0.5 * std::log(-std::expm1(-2.0));
    CHECK(raw == doctest::Approx(-0.072707).epsilon(1e-5));
    CHECK(z.raw_plus[0] == doctest::Approx(raw).epsilon(1e-13));
    CHECK(z.raw_minus[0] == doctest::Approx(raw).epsilon(1e-13));
    // a lone soliton acquires no shift in its own phase convention
    CHECK(std::abs(z.zeta_plus[0]) < 1e-14);
    CHECK(std::abs(z.zeta_minus[0]) < 1e-14);
}

TEST_CASE("phase_shifts: m = 2 determinants two ways, convention-free differences") {
    SolitonParams p({0.5, 1.0}, {0.0, 0.0});
    PhaseShifts z = phase_shifts(p);
    Eigen::MatrixXd a = interaction_matrix(p);

    // direct cofactor evaluation of every principal minor used
    const double det_full = cofactor_det(a);
    const double det_11 = a(0, 0), det_22 = a(1, 1);
    CHECK(det_full > 0.0);

    const double raw_plus_0 = 0.5 * std::log(det_22 / det_full);
    const double raw_plus_1 = -0.5 * std::log(det_22);
    const double raw_minus_0 = -0.5 * std::log(det_11);
    const double raw_minus_1 = 0.5 * std::log(det_11 / det_full);
    CHECK(z.raw_plus[0] == doctest::Approx(raw_plus_0).epsilon(1e-12));
    CHECK(z.raw_plus[1] == doctest::Approx(raw_plus_1).epsilon(1e-12));
    CHECK(z.raw_minus[0] == doctest::Approx(raw_minus_0).epsilon(1e-12));
    CHECK(z.raw_minus[1] == doctest::Approx(raw_minus_1).epsilon(1e-12));

    // net interaction shift is independent of the diagonal normalization
    for (int j = 0; j < 2; ++j)
        CHECK(z.zeta_plus[j] - z.zeta_minus[j] ==
              doctest::Approx(z.raw_plus[j] - z.raw_minus[j]).epsilon(1e-13));

    // the faster soliton ends unshifted at +inf, the slower at -inf
    CHECK(std::abs(z.zeta_plus[1]) < 1e-14);
    CHECK(std::abs(z.zeta_minus[0]) < 1e-14);
}

TEST_CASE("resolution_residual: m = 1 vanishes identically") {
    LatticeGrid g(-60, 60);
    SolitonParams p({0.8}, {0.4});
    auto res = resolution_residual(p, 5.0, g);
    CHECK(res.l1 < 1e-11);
    CHECK_FALSE(res.boundary_flag);
}

TEST_CASE("resolution_residual: exponential decay in |t| for m = 2") {
    SolitonParams p({0.5, 1.0}, {0.0, 0.0});
    LatticeGrid g(-160, 160);
    const double r20 = resolution_residual(p, 20.0, g).l1;
    const double r40 = resolution_residual(p, 40.0, g).l1;
    CHECK(r40 < r20 / 10.0);

    // log-residual slope stays negative and stable when the grid is enlarged
    auto slope = [&](const LatticeGrid& gg) {
        const double a = std::log(resolution_residual(p, 15.0, gg).l1);
        const double b = std::log(resolution_residual(p, 30.0, gg).l1);
        return (b - a) / 15.0;
    };
    const double s1 = slope(g);
    const double s2 = slope(LatticeGrid(-220, 220));
    CHECK(s1 < 0.0);
    CHECK(std::abs(s1 - s2) < 0.05 * std::abs(s1));

    // backward time uses the minus shifts
    const double rm = resolution_residual(p, -30.0, LatticeGrid(-220, 80)).l1;
    CHECK(rm < resolution_residual(p, -15.0, LatticeGrid(-220, 80)).l1 / 5.0);
}

TEST_CASE("resolution_residual flags cores near the boundary") {
    SolitonParams p({0.5, 1.0}, {0.0, 0.0});
    LatticeGrid g(-30, 30);
    auto res = resolution_residual(p, 30.0, g);   // fast core is near n = 35
    CHECK(res.boundary_flag);
}

TEST_CASE("profile identity: factor 1 under this tau convention, factor 2 fails") {
    LatticeGrid g(-80, 80);
    for (auto params : {SolitonParams({0.9}, {0.1}), SolitonParams({0.5, 1.0}, {0.7, -0.3})}) {
        auto res = profile_identity_residual(params, 1.3, g);
        CHECK(res.resolved_factor == 1);
        CHECK(res.residual[0] < 1e-6);
        CHECK(res.residual[1] > 0.1 * res.dtU_norm);
        CHECK(resolved_profile_factor(params, g, 1.3) == 1);
    }
}

TEST_CASE("profile identity residual is invariant under phase translation") {
    LatticeGrid g(-60, 60);
    SolitonParams p({0.5, 1.0}, {0.2, -0.4});
    auto r0 = profile_identity_residual(p, 0.8, g);
    // shift every gamma by sinh(kappa_i) * dt and rewind time by dt: same profile
    const double dt = 2.0;
    SolitonParams q({0.5, 1.0},
                    {0.2 - dt * std::sinh(0.5), -0.4 - dt * std::sinh(1.0)});
    auto r1 = profile_identity_residual(q, 0.8 - dt, g);
    CHECK(r0.residual[0] == doctest::Approx(r1.residual[0]).epsilon(1e-8).scale(1e-8));
    CHECK(r0.residual[1] == doctest::Approx(r1.residual[1]).epsilon(1e-10));
}

TEST_CASE("SolitonParams: ordering, validation, xi round trip") {
    SolitonParams p({1.2, 0.4}, {0.1, 0.9});
    CHECK(p.kappas[0] == 0.4);
    CHECK(p.gammas[0] == 0.9);
    CHECK(p.kappas[1] == 1.2);

    CHECK_THROWS_AS(SolitonParams({-1.0}, {0.0}), std::invalid_argument);
    CHECK_THROWS_AS(SolitonParams({0.5, 0.5}, {0.0, 0.0}), std::invalid_argument);

    Eigen::VectorXd xi = p.xi();
    CHECK(xi[0] == 0.9);
    CHECK(xi[1] == 0.4);
    SolitonParams q = SolitonParams::from_xi(xi);
    CHECK(q.kappas == p.kappas);
    CHECK(q.gammas == p.gammas);
}

TEST_CASE("tau evaluation stays positive definite far from the cores") {
    SolitonParams p({0.31, 0.77, 1.49}, {1.9, -1.9, 0.0});
    LatticeGrid g(-300, 300);
    for (double t : {-80.0, 0.0, 80.0}) {
        LatticeState s = m_soliton(p, t, g);   // throws if det(I+C) degenerates
        CHECK(s.Q.allFinite());
        CHECK(s.P.allFinite());
    }
}
