#pragma once

#include "toda/grid.hpp"

#include <optional>

namespace toda {

/**
 * Lattice state in position/momentum form.  Masses are unit, so P stores the
 * particle velocities and Qdot = P.
 */
struct LatticeState {
    LatticeGrid grid;
    Field Q;
    Field P;

    LatticeState() = default;
    LatticeState(const LatticeGrid& g) : grid(g), Q(Field::Zero(g.size())), P(Field::Zero(g.size())) {
        Q.setConstant(0.0);
    }
    LatticeState(const LatticeGrid& g, Field q, Field p) : grid(g), Q(std::move(q)), P(std::move(p)) {
        if (Q.size() != grid.size() || P.size() != grid.size())
            throw std::invalid_argument("LatticeState: field size does not match grid");
    }

    // Largest deviation of Q from the clamped asymptotic values at the two edges.
    double boundary_contamination() const {
        return std::max(std::abs(Q[0] - grid.left_value),
                        std::abs(Q[grid.size() - 1] - grid.right_value));
    }
};

/**
 * The same state in Hamiltonian coordinates U = (R, P) with R = Q_+ - Q.
 * R[n_max] uses the right ghost value of Q.
 */
struct HamiltonianState {
    LatticeGrid grid;
    Field R;
    Field P;

    static HamiltonianState from_state(const LatticeState& s) {
        HamiltonianState h;
        h.grid = s.grid;
        h.P = s.P;
        const int N = s.grid.size();
        h.R.resize(N);
        for (int i = 0; i < N; ++i)
            h.R[i] = s.grid.value(s.Q, s.grid.site(i) + 1) - s.Q[i];
        return h;
    }

    // Reconstruct Q from R with a left anchor; exact round trip by telescoping.
    LatticeState to_state(double q_anchor) const {
        LatticeState s;
        s.grid = grid;
        s.P = P;
        const int N = grid.size();
        s.Q.resize(N);
        s.Q[0] = q_anchor;
        for (int i = 0; i + 1 < N; ++i) s.Q[i + 1] = s.Q[i] + R[i];
        return s;
    }
};

/**
 * A perturbation (q, p) of the linearized dynamics, with zero-Dirichlet ghosts.
 * r = (S - I) q is carried when the producer knows it analytically (profile
 * tangents have non-decaying q, where the naive ghost difference is wrong).
 */
struct TangentField {
    LatticeGrid grid;
    Field q;
    Field p;
    std::optional<Field> r;

    TangentField() = default;
    TangentField(const LatticeGrid& g) : grid(g), q(Field::Zero(g.size())), p(Field::Zero(g.size())) {}
    TangentField(const LatticeGrid& g, Field q_, Field p_) : grid(g), q(std::move(q_)), p(std::move(p_)) {
        if (q.size() != grid.size() || p.size() != grid.size())
            throw std::invalid_argument("TangentField: field size does not match grid");
    }

    // r from q with zero ghosts; valid for decaying perturbations.
    Field r_field() const {
        if (r) return *r;
        const int N = grid.size();
        Field out(N);
        for (int i = 0; i < N; ++i)
            out[i] = LatticeGrid::tangent_value(q, i + 1) - q[i];
        return out;
    }

    double flat_norm() const { return std::sqrt(q.squaredNorm() + p.squaredNorm()); }
};

inline TangentField operator+(const TangentField& a, const TangentField& b) {
    require_same_span(a.grid, b.grid, "TangentField+");
    TangentField out(a.grid, a.q + b.q, a.p + b.p);
    if (a.r && b.r) out.r = *a.r + *b.r;
    return out;
}

inline TangentField operator*(double s, const TangentField& a) {
    TangentField out(a.grid, s * a.q, s * a.p);
    if (a.r) out.r = s * (*a.r);
    return out;
}

} // namespace toda
