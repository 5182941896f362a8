#include "toda/lattice.hpp"

namespace toda {

void toda_force(const LatticeGrid& grid, const Field& Q, Field& out) {
    const int N = grid.size();
    out.resize(N);
    // spring tensions e^{-(Q_{n+1} - Q_n)} for bonds (n, n+1), n = n_min-1 .. n_max
    double left = std::exp(-(Q[0] - grid.left_value));
    for (int i = 0; i < N; ++i) {
        const double qn = Q[i];
        const double qp = (i + 1 < N) ? Q[i + 1] : grid.right_value;
        const double right = std::exp(-(qp - qn));
        out[i] = left - right;
        left = right;
    }
}

StateDerivative toda_rhs(const LatticeState& state) {
    require_finite(state.Q, "toda_rhs");
    require_finite(state.P, "toda_rhs");
    StateDerivative d;
    d.Qdot = state.P;
    toda_force(state.grid, state.Q, d.Pdot);
    return d;
}

double hamiltonian(const HamiltonianState& state) {
    require_finite(state.R, "hamiltonian");
    require_finite(state.P, "hamiltonian");
    double h = 0.0;
    for (int i = 0; i < state.grid.size(); ++i)
        h += 0.5 * state.P[i] * state.P[i] + potential(state.R[i]);
    return h;
}

double hamiltonian(const LatticeState& state) {
    const double edge = potential(state.Q[0] - state.grid.left_value);
    return hamiltonian(HamiltonianState::from_state(state)) + edge;
}

HamiltonianState grad_hamiltonian(const HamiltonianState& state) {
    require_finite(state.R, "grad_hamiltonian");
    require_finite(state.P, "grad_hamiltonian");
    HamiltonianState g;
    g.grid = state.grid;
    g.R = state.R.unaryExpr([](double r) { return potential_d1(r); });
    g.P = state.P;
    return g;
}

TangentField hessian_apply(const HamiltonianState& state, const TangentField& u) {
    require_same_span(state.grid, u.grid, "hessian_apply");
    TangentField out(u.grid);
    Field r = u.r_field();
    out.q = state.R.unaryExpr([](double rr) { return potential_d2(rr); }).cwiseProduct(r);
    out.p = u.p;
    out.r.reset();
    return out;
}

TangentField j_apply(const TangentField& u) {
    const int N = u.grid.size();
    TangentField out(u.grid);
    for (int i = 0; i < N; ++i) {
        out.q[i] = LatticeGrid::tangent_value(u.p, i + 1) - u.p[i];        // (S - I) p
        out.p[i] = u.q[i] - LatticeGrid::tangent_value(u.q, i - 1);        // (I - S^{-1}) q
    }
    return out;
}

double symplectic_pairing(const TangentField& u, const TangentField& dU) {
    require_same_span(u.grid, dU.grid, "symplectic_pairing");
    return u.p.dot(dU.q) - u.q.dot(dU.p);
}

void linearized_force(const LatticeGrid& grid, const Field& tension, const Field& q, Field& out) {
    const int N = grid.size();
    if (tension.size() != N + 1)
        throw std::invalid_argument("linearized_force: need N+1 bond tensions (ghost bonds included)");
    out.resize(N);
    // bond b joins sites b-1 and b (site -1 / N are zero tangent ghosts):
    //   pdot_i = f_{i+1} - f_i,  f_b = tension_b (q_b - q_{b-1})
    double f_left = tension[0] * q[0];
    for (int i = 0; i < N; ++i) {
        const double qp = (i + 1 < N) ? q[i + 1] : 0.0;
        const double f_right = tension[i + 1] * (qp - q[i]);
        out[i] = f_right - f_left;
        f_left = f_right;
    }
}

} // namespace toda
