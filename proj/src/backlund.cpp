#include "toda/backlund.hpp"

#include "toda/lattice.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <random>
#include <sstream>

namespace toda {

namespace {

void fill_coefficients(BTPair& pair) {
    const LatticeGrid& g = pair.upper.grid;
    const int N = g.size();
    pair.alpha.resize(N);
    pair.beta.resize(N + 1);
    for (int i = 0; i < N; ++i) {
        const double Qp = pair.lower.Q[i];
        const double Q = pair.upper.Q[i];
        pair.alpha[i] = std::exp(-(Qp - Q - pair.kappa_m));
    }
    for (int i = 0; i <= N; ++i) {
        const double Q = (i < N) ? pair.upper.Q[i] : g.right_value;
        const double Qp_minus = (i > 0) ? pair.lower.Q[i - 1] : pair.lower.grid.left_value;
        pair.beta[i] = std::exp(-(Q - Qp_minus + pair.kappa_m));
    }
    if (!pair.alpha.allFinite() || !pair.beta.allFinite())
        throw std::runtime_error("BTPair: alpha/beta overflowed; states are not BT-compatible");
}

// (N+1) x N extended bidiagonal matrices with the decaying-boundary ghost row.
Eigen::MatrixXd chat_matrix(const BTPair& pair) {
    const int N = pair.grid().size();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N + 1, N);
    A(0, 0) = -pair.beta[0];                      // ghost row at n_min - 1
    for (int r = 1; r <= N; ++r) {
        A(r, r - 1) = pair.alpha[r - 1];
        if (r < N) A(r, r) = -pair.beta[r];
    }
    return A;
}

Eigen::MatrixXd c_matrix(const BTPair& pair) {
    const int N = pair.grid().size();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N + 1, N);
    for (int r = 0; r < N; ++r) {
        A(r, r) = pair.alpha[r];
        if (r > 0) A(r, r - 1) = -pair.beta[r];
    }
    A(N, N - 1) = -pair.beta[N];                  // ghost row at n_max + 1
    return A;
}

double pivot_cond(const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>& cod) {
    const auto& R = cod.matrixT();
    double pmax = 0.0, pmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < cod.rank(); ++i) {
        const double v = std::abs(R(i, i));
        pmax = std::max(pmax, v);
        pmin = std::min(pmin, v);
    }
    return (pmin > 0.0) ? pmax / pmin : std::numeric_limits<double>::infinity();
}

} // namespace

struct BTWork {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod_chat, cod_c;
    double cond_chat = 0.0, cond_c = 0.0;
    Field g;            // d_{gamma_m} Q of the upper family (Chat kernel / C cokernel)
    Field dkmQ, dkmP;   // d_{kappa_m} (Q, P)
    Field Ldiag, Mdiag, Lg;
    double shift_denom = 0.0;
};

namespace {

const BTWork& workspace(const BTPair& pair) {
    if (pair.work) return *pair.work;
    if (!pair.upper_params)
        throw std::invalid_argument(
            "Backlund solve: pair carries no family parameters (build it with add_soliton)");
    auto w = std::make_shared<BTWork>();
    auto tangents = soliton_tangents(*pair.upper_params, pair.time, pair.grid());
    const int m = pair.upper_params->m();
    w->g = tangents[2 * (m - 1)].q;
    w->dkmQ = tangents[2 * (m - 1) + 1].q;
    w->dkmP = tangents[2 * (m - 1) + 1].p;
    w->Ldiag = pair.L_diag();
    w->Mdiag = pair.M_diag();
    w->Lg = w->Ldiag.cwiseProduct(w->g);
    w->shift_denom = w->Lg.dot(w->dkmQ) + w->g.dot(w->dkmP);
    w->cod_chat.compute(chat_matrix(pair));
    w->cod_c.compute(c_matrix(pair));
    w->cond_chat = pivot_cond(w->cod_chat);
    w->cond_c = pivot_cond(w->cod_c);
    pair.work = w;
    return *pair.work;
}

} // namespace

BTPair make_bt_pair(const LatticeState& lower, const LatticeState& upper, double kappa_m) {
    require_same_span(lower.grid, upper.grid, "make_bt_pair");
    if (!(kappa_m > 0.0)) throw std::invalid_argument("make_bt_pair: kappa_m must be positive");
    BTPair pair;
    pair.lower = lower;
    pair.upper = upper;
    pair.kappa_m = kappa_m;
    fill_coefficients(pair);
    return pair;
}

double bt_lower_phase_offset(double kappa_j, double kappa_m) {
    if (!(kappa_m > kappa_j))
        throw std::invalid_argument("bt_lower_phase_offset: need kappa_m > kappa_j");
    return kappa_j + 0.5 * (std::log(-std::expm1(-(kappa_j + kappa_m))) -
                            std::log(-std::expm1(-(kappa_m - kappa_j))));
}

double bt_lower_phase_offset_dkappa(double kappa_j, double kappa_m) {
    return 1.0 + 0.5 * (1.0 / std::expm1(kappa_j + kappa_m) + 1.0 / std::expm1(kappa_m - kappa_j));
}

double bt_lower_phase_offset_dkappam(double kappa_j, double kappa_m) {
    return 0.5 * (1.0 / std::expm1(kappa_j + kappa_m) - 1.0 / std::expm1(kappa_m - kappa_j));
}

BTPair add_soliton(const SolitonParams& lower_params, double kappa_new, double gamma_new,
                   double t, const LatticeGrid& grid, double validate_tol) {
    SolitonParams upper_params = lower_params.with_soliton(kappa_new, gamma_new);
    if (upper_params.kappas.back() != kappa_new)
        throw std::invalid_argument("add_soliton: kappa_new must exceed the existing wavenumbers");

    // the lower family carries the phase correspondence of the hierarchy
    SolitonParams lower_shifted = lower_params;
    for (int j = 0; j < lower_shifted.m(); ++j)
        lower_shifted.gammas[j] += bt_lower_phase_offset(lower_shifted.kappas[j], kappa_new);

    BTPair pair;
    pair.lower = (lower_shifted.m() > 0) ? m_soliton(lower_shifted, t, grid)
                                         : LatticeState(LatticeGrid(grid.n_min, grid.n_max, 0.0, 0.0));
    pair.upper = m_soliton(upper_params, t, grid);
    pair.kappa_m = kappa_new;
    pair.time = t;
    pair.lower_params = lower_shifted;
    pair.upper_params = upper_params;
    fill_coefficients(pair);

    const double res = bt_residual(pair).sup();
    if (res > validate_tol) {
        std::ostringstream os;
        os << "add_soliton: Backlund residual " << res << " exceeds tolerance " << validate_tol;
        throw std::runtime_error(os.str());
    }
    return pair;
}

BTResidual bt_residual(const BTPair& pair) {
    const int N = pair.grid().size();
    const double twocosh = 2.0 * std::cosh(pair.kappa_m);
    BTResidual r;
    r.F1 = pair.upper.P + pair.alpha + pair.beta.head(N);
    r.F2 = pair.lower.P + pair.alpha + pair.beta.tail(N);
    r.F1.array() -= twocosh;
    r.F2.array() -= twocosh;
    return r;
}

Field apply_operator(const BTPair& pair, BTOperator op, const Field& x) {
    const int N = pair.grid().size();
    if (x.size() != N) throw std::invalid_argument("apply_operator: grid mismatch");
    Field out(N);
    switch (op) {
        case BTOperator::C:
            for (int i = 0; i < N; ++i)
                out[i] = pair.alpha[i] * x[i] - pair.beta[i] * LatticeGrid::tangent_value(x, i - 1);
            break;
        case BTOperator::Chat:
            for (int i = 0; i < N; ++i)
                out[i] = pair.alpha[i] * x[i] - pair.beta[i + 1] * LatticeGrid::tangent_value(x, i + 1);
            break;
        case BTOperator::L:
            out = pair.L_diag().cwiseProduct(x);
            break;
        case BTOperator::M:
            out = pair.M_diag().cwiseProduct(x);
            break;
    }
    return out;
}

SemigroupT semigroup(const BTPair& pair) {
    const LatticeGrid& g = pair.grid();
    if (!g.contains(0))
        throw std::invalid_argument("semigroup: the grid must contain the base site n = 0");
    const int N = g.size();
    // summand(k) = -(2 Q'_k - Q_k - Q_{k+1} - 2 kappa_m) = log(alpha_k / beta_{k+1})
    Field summand(N);
    for (int i = 0; i < N; ++i)
        summand[i] = std::log(pair.alpha[i]) - std::log(pair.beta[i + 1]);

    SemigroupT T;
    T.grid = g;
    T.log_values.setZero(N);
    const int i0 = g.index(0);
    for (int i = i0 + 1; i < N; ++i) T.log_values[i] = T.log_values[i - 1] + summand[i - 1];
    for (int i = i0 - 1; i >= 0; --i) T.log_values[i] = T.log_values[i + 1] - summand[i];
    return T;
}

namespace {

double log_slope(const SemigroupT& T, int lo, int hi) {
    // least squares of log T(n) against n over sites [lo, hi]
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (int n = lo; n <= hi; ++n) {
        const double x = n, y = T.log_values[T.grid.index(n)];
        sx += x; sy += y; sxx += x * x; sxy += x * y;
        ++cnt;
    }
    return (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
}

Field extended_rhs_chat(const Field& y) {
    Field b(y.size() + 1);
    b[0] = 0.0;
    b.tail(y.size()) = y;
    return b;
}

Field extended_rhs_c(const Field& y) {
    Field b(y.size() + 1);
    b.head(y.size()) = y;
    b[y.size()] = 0.0;
    return b;
}

} // namespace

double SemigroupT::forward_slope() const {
    const int third = grid.size() / 3;
    return log_slope(*this, grid.n_max - third, grid.n_max);
}

double SemigroupT::backward_slope() const {
    const int third = grid.size() / 3;
    return log_slope(*this, grid.n_min, grid.n_min + third);
}

namespace {

Field solve_chat_impl(const BTPair& pair, const Field& y, SolveInfo* info, bool strict) {
    const int N = pair.grid().size();
    if (y.size() != N) throw std::invalid_argument("solve_chat: grid mismatch");
    const BTWork& w = workspace(pair);

    Field x = w.cod_chat.solve(extended_rhs_chat(y));
    Field q = x - (x.dot(w.g) / w.g.squaredNorm()) * w.g;

    const double ynorm = y.norm();
    const double rel = (ynorm > 0.0) ? (apply_operator(pair, BTOperator::Chat, q) - y).norm() / ynorm : 0.0;
    if (info) {
        info->residual_rel = rel;
        info->cond_estimate = w.cond_chat;
        info->kernel_pairing = q.dot(w.g);
    }
    if (strict && ynorm > 0.0 && rel > 1e-8) {
        std::ostringstream os;
        os << "solve_chat: relative residual " << rel << " (condition estimate " << w.cond_chat << ")";
        throw std::runtime_error(os.str());
    }
    return q;
}

} // namespace

Field solve_chat(const BTPair& pair, const Field& y, SolveInfo* info) {
    return solve_chat_impl(pair, y, info, true);
}

namespace {

Field solve_c_impl(const BTPair& pair, const Field& y, SolveInfo* info, double orth_tol,
                   bool strict) {
    const int N = pair.grid().size();
    if (y.size() != N) throw std::invalid_argument("solve_c: grid mismatch");
    const BTWork& w = workspace(pair);

    const double pairing = y.dot(w.g);
    const double scale = y.norm() * w.g.norm();
    if (info) info->cokernel_pairing = pairing;
    if (strict && scale > 0.0 && std::abs(pairing) > orth_tol * scale) {
        std::ostringstream os;
        os << "solve_c: right-hand side is not orthogonal to the cokernel, <y, d_gamma_m Q> = "
           << pairing << " against tolerance " << orth_tol * scale;
        throw std::invalid_argument(os.str());
    }

    Field qp = w.cod_c.solve(extended_rhs_c(y));
    const double ynorm = y.norm();
    const double rel = (ynorm > 0.0) ? (apply_operator(pair, BTOperator::C, qp) - y).norm() / ynorm : 0.0;
    if (info) {
        info->residual_rel = rel;
        info->cond_estimate = w.cond_c;
    }
    if (strict && ynorm > 0.0 && rel > 1e-8) {
        std::ostringstream os;
        os << "solve_c: relative residual " << rel << " (condition estimate " << w.cond_c << ")";
        throw std::runtime_error(os.str());
    }
    return qp;
}

} // namespace

Field solve_c(const BTPair& pair, const Field& y, SolveInfo* info, double orth_tol) {
    return solve_c_impl(pair, y, info, orth_tol, true);
}

LBTResidual lbt_residual(const BTPair& pair, const Field& qp, const Field& pp,
                         const Field& q, const Field& p) {
    const int N = pair.grid().size();
    LBTResidual r;
    r.DF1.resize(N);
    r.DF2.resize(N);
    for (int i = 0; i < N; ++i) {
        const double qp_m = LatticeGrid::tangent_value(qp, i - 1);
        const double q_p = LatticeGrid::tangent_value(q, i + 1);
        const double L = pair.alpha[i] - pair.beta[i];
        const double M = pair.alpha[i] - pair.beta[i + 1];
        r.DF1[i] = p[i] + L * q[i] + pair.beta[i] * qp_m - pair.alpha[i] * qp[i];
        r.DF2[i] = pp[i] + pair.alpha[i] * q[i] - pair.beta[i + 1] * q_p - M * qp[i];
    }
    return r;
}

namespace {

// kernel-mode shift (q, p) -> (q + mu g, p - mu L g) enforcing the kappa_m
// orthogonality <p, dQ_k> - <q, dP_k> = 0; it leaves both linearized Backlund
// relations invariant since Chat g = 0 and the p-change cancels L (mu g).
void kappa_orthogonality_shift(const BTWork& w, Field& q, Field& p) {
    const double pairing = p.dot(w.dkmQ) - q.dot(w.dkmP);
    const double mu = pairing / w.shift_denom;
    q += mu * w.g;
    p -= mu * w.Lg;
}

} // namespace

namespace {

TangentField lbt_forward_impl(const BTPair& pair, const TangentField& u_lower, bool strict) {
    require_same_span(pair.grid(), u_lower.grid, "lbt_forward");
    const BTWork& w = workspace(pair);

    const Field y = w.Mdiag.cwiseProduct(u_lower.q) - u_lower.p;
    Field q = solve_chat_impl(pair, y, nullptr, strict);
    Field p = apply_operator(pair, BTOperator::C, u_lower.q) - w.Ldiag.cwiseProduct(q);
    kappa_orthogonality_shift(w, q, p);
    return TangentField(pair.grid(), std::move(q), std::move(p));
}

} // namespace

TangentField lbt_forward(const BTPair& pair, const TangentField& u_lower) {
    return lbt_forward_impl(pair, u_lower, true);
}

namespace {

TangentField lbt_inverse_impl(const BTPair& pair, const TangentField& u_upper, double orth_tol,
                              bool strict) {
    require_same_span(pair.grid(), u_upper.grid, "lbt_inverse");
    const BTWork& w = workspace(pair);

    Field q = u_upper.q, p = u_upper.p;
    kappa_orthogonality_shift(w, q, p);

    const Field y = w.Ldiag.cwiseProduct(q) + p;
    Field qp = solve_c_impl(pair, y, nullptr, orth_tol, strict);
    Field pp = w.Mdiag.cwiseProduct(qp) - apply_operator(pair, BTOperator::Chat, q);
    return TangentField(pair.grid(), std::move(qp), std::move(pp));
}

} // namespace

TangentField lbt_inverse(const BTPair& pair, const TangentField& u_upper, double orth_tol) {
    return lbt_inverse_impl(pair, u_upper, orth_tol, true);
}

TangentField hierarchy_lower_tangent(const BTPair& pair, ParamKind kind, int index) {
    if (!pair.lower_params || pair.lower_params->m() == 0)
        throw std::invalid_argument("hierarchy_lower_tangent: pair has no lower family");
    const SolitonParams& lo = *pair.lower_params;
    TangentField out = soliton_derivative(lo, pair.time, pair.grid(), kind, index);
    if (kind == ParamKind::Kappa) {
        const double chain = bt_lower_phase_offset_dkappa(lo.kappas[index], pair.kappa_m);
        TangentField dg = soliton_derivative(lo, pair.time, pair.grid(), ParamKind::Gamma, index);
        out.q += chain * dg.q;
        out.p += chain * dg.p;
        if (out.r && dg.r) *out.r += chain * (*dg.r);
    }
    return out;
}

Eigen::VectorXd chat_singular_values(const BTPair& pair) {
    return Eigen::JacobiSVD<Eigen::MatrixXd>(chat_matrix(pair)).singularValues();
}

Eigen::VectorXd c_singular_values(const BTPair& pair) {
    return Eigen::JacobiSVD<Eigen::MatrixXd>(c_matrix(pair)).singularValues();
}

namespace {

// The conjugated stencils W Op W^{-1} with W = diag(e^{a(n-ct-T)}) have bounded
// entries (alpha diagonal, e^{-/+a} beta off-diagonal); building the weighted
// maps from them keeps every intermediate at the scale of the weighted data,
// which a conjugation after the fact would not (round-off would be amplified
// by the full e^{a span} dynamic range of the grid).
struct WeightedBT {
    const BTPair& pair;
    int N;
    double ea;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod_chat_w, cod_c_w;
    Field g_w;                    // weighted kernel direction
    Field dkQ_w, dkP_w;           // W^{-1}-scaled kappa functionals
    Field gq_w, gp_w;             // W^{-1}-scaled gamma functionals
    Field Lg_w;
    double shift_denom;

    WeightedBT(const BTPair& p, const WeightFrame& frame) : pair(p), N(p.grid().size()) {
        const BTWork& w = workspace(pair);
        const LatticeGrid& grid = pair.grid();
        ea = std::exp(frame.a);
        // normalize the weight at the grid center; only the relative profile
        // matters for the conjugated operator
        const double mid = frame.exponent(grid.site(N / 2), pair.time);
        Field wgt(N), winv(N);
        for (int i = 0; i < N; ++i) {
            wgt[i] = std::exp(frame.exponent(grid.site(i), pair.time) - mid);
            winv[i] = 1.0 / wgt[i];
        }
        // the family tangents are differences of order-(|n| + t) traces, so
        // their far tails sit at the absolute round-off floor instead of their
        // true (much smaller) size; clamp below the floor before weighting,
        // otherwise e^{a|n|} amplifies pure noise
        auto clamped = [&](const Field& scale, const Field& x) {
            Field out(N);
            for (int i = 0; i < N; ++i)
                out[i] = (std::abs(x[i]) < 1e-10) ? 0.0 : scale[i] * x[i];
            return out;
        };
        g_w = clamped(wgt, w.g);
        Lg_w = w.Ldiag.cwiseProduct(g_w);
        dkQ_w = clamped(winv, w.dkmQ);
        dkP_w = clamped(winv, w.dkmP);
        auto tangents = soliton_tangents(*pair.upper_params, pair.time, grid);
        const int m = pair.upper_params->m();
        gq_w = clamped(winv, tangents[2 * (m - 1)].q);
        gp_w = clamped(winv, tangents[2 * (m - 1)].p);
        shift_denom = Lg_w.dot(dkQ_w) + g_w.dot(dkP_w);

        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N + 1, N);
        A(0, 0) = -pair.beta[0] / ea;
        for (int r = 1; r <= N; ++r) {
            A(r, r - 1) = pair.alpha[r - 1];
            if (r < N) A(r, r) = -pair.beta[r] / ea;
        }
        cod_chat_w.compute(A);
        Eigen::MatrixXd B = Eigen::MatrixXd::Zero(N + 1, N);
        for (int r = 0; r < N; ++r) {
            B(r, r) = pair.alpha[r];
            if (r > 0) B(r, r - 1) = -pair.beta[r] * ea;
        }
        B(N, N - 1) = -pair.beta[N] * ea;
        cod_c_w.compute(B);
    }

    Field apply_chat_w(const Field& x) const {
        Field out(N);
        for (int i = 0; i < N; ++i)
            out[i] = pair.alpha[i] * x[i] -
                     pair.beta[i + 1] / ea * LatticeGrid::tangent_value(x, i + 1);
        return out;
    }
    Field apply_c_w(const Field& x) const {
        Field out(N);
        for (int i = 0; i < N; ++i)
            out[i] = pair.alpha[i] * x[i] -
                     pair.beta[i] * ea * LatticeGrid::tangent_value(x, i - 1);
        return out;
    }
    Field solve_chat_w(const Field& y) const {
        Field b(N + 1);
        b[0] = 0.0;
        b.tail(N) = y;
        Field x = cod_chat_w.solve(b);
        return x - (x.dot(g_w) / g_w.squaredNorm()) * g_w;
    }
    Field solve_c_w(const Field& y) const {
        Field b(N + 1);
        b.head(N) = y;
        b[N] = 0.0;
        return cod_c_w.solve(b);
    }
    void kappa_shift_w(Field& q, Field& p) const {
        const double mu = (p.dot(dkQ_w) - q.dot(dkP_w)) / shift_denom;
        q += mu * g_w;
        p -= mu * Lg_w;
    }

    // weighted forward map
    void forward(const Field& qp, const Field& pp, Field& q, Field& p) const {
        const BTWork& w = workspace(pair);
        q = solve_chat_w(w.Mdiag.cwiseProduct(qp) - pp);
        p = apply_c_w(qp) - w.Ldiag.cwiseProduct(q);
        kappa_shift_w(q, p);
    }
    // weighted inverse of B composed with the projection onto (the weighted
    // image of) X(t); the gamma condition is fixed by a momentum shift along
    // g_w, which the kernel-pair shift then leaves invariant
    void inverse(Field q, Field p, Field& qp, Field& pp) const {
        const BTWork& w = workspace(pair);
        const double pg = p.dot(gq_w) - q.dot(gp_w);
        p -= (pg / g_w.dot(gq_w)) * g_w;
        kappa_shift_w(q, p);

        Field y = w.Ldiag.cwiseProduct(q) + p;
        // cokernel of the weighted C is spanned by W^{-1} g = gq_w
        y -= (y.dot(gq_w) / gq_w.squaredNorm()) * gq_w;
        qp = solve_c_w(y);
        pp = w.Mdiag.cwiseProduct(qp) - apply_chat_w(q);
    }
};

} // namespace

NormEstimate operator_norm_estimate(const BTPair& pair, BTMap which, const WeightFrame& frame) {
    const LatticeGrid& g = pair.grid();
    const int N = g.size();

    const double mid = frame.exponent(g.site(N / 2), pair.time);
    Field wgt(N);
    for (int i = 0; i < N; ++i) wgt[i] = std::exp(frame.exponent(g.site(i), pair.time) - mid);

    Eigen::MatrixXd Op;
    if (which == BTMap::B || which == BTMap::Binv) {
        WeightedBT wb(pair, frame);
        Op.resize(2 * N, 2 * N);
        Field eq = Field::Zero(N), ep = Field::Zero(N), oq(N), op(N);
        for (int col = 0; col < 2 * N; ++col) {
            eq.setZero();
            ep.setZero();
            if (col < N) eq[col] = 1.0; else ep[col - N] = 1.0;
            if (which == BTMap::B) {
                wb.forward(eq, ep, oq, op);
            } else {
                wb.inverse(eq, ep, oq, op);
            }
            Op.col(col).head(N) = oq;
            Op.col(col).tail(N) = op;
        }
    } else {
        Op.resize(N, N);
        Field e = Field::Zero(N);
        BTOperator op = which == BTMap::C      ? BTOperator::C
                        : which == BTMap::Chat ? BTOperator::Chat
                        : which == BTMap::L    ? BTOperator::L
                                               : BTOperator::M;
        for (int col = 0; col < N; ++col) {
            e.setZero();
            e[col] = 1.0;
            Op.col(col) = apply_operator(pair, op, e);
        }
        Op = wgt.asDiagonal() * Op * wgt.cwiseInverse().asDiagonal();
    }

    auto apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return Op * v; };
    auto apply_t = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return Op.transpose() * v; };

    std::mt19937_64 rng(12345);
    std::normal_distribution<double> N01;
    Eigen::VectorXd v(Op.cols());
    for (int i = 0; i < v.size(); ++i) v[i] = N01(rng);
    v.normalize();

    NormEstimate est;
    double sigma_prev = 0.0;
    for (int it = 0; it < 3000; ++it) {
        Eigen::VectorXd Av = apply(v);
        const double sigma = Av.norm();
        est.history.push_back(sigma);
        est.iterations = it + 1;
        est.norm = sigma;
        v = apply_t(Av);
        const double nv = v.norm();
        if (nv == 0.0) { est.norm = 0.0; est.converged = true; return est; }
        v /= nv;
        if (it > 2 && std::abs(sigma - sigma_prev) <= 1e-8 * std::max(1.0, sigma)) {
            est.converged = true;
            return est;
        }
        sigma_prev = sigma;
    }
    return est;   // converged stays false; the history carries the iterates
}

} // namespace toda
