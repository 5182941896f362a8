#pragma once

#include "toda/grid.hpp"
#include "toda/state.hpp"

#include <cmath>

namespace toda {

/**
 * Moving exponential weight exp(a*(n - c*t - T)).
 *
 * The frame travels to the right with speed c; the reference time s marks when
 * initial data was weighted.  The derived rate beta = c*a - 2*sinh(a/2) is the
 * decay rate of the free linearized lattice in this norm and is precomputed.
 */
struct WeightFrame {
    double a = 0.0;
    double c = 0.0;
    double T = 0.0;
    double s = 0.0;
    double beta = 0.0;

    WeightFrame() = default;
    WeightFrame(double a_, double c_, double T_ = 0.0, double s_ = 0.0)
        : a(a_), c(c_), T(T_), s(s_), beta(c_ * a_ - 2.0 * std::sinh(a_ / 2.0)) {
        if (!std::isfinite(a) || !std::isfinite(c) || !std::isfinite(T) || !std::isfinite(s))
            throw std::invalid_argument("WeightFrame: non-finite parameter");
    }

    double exponent(int n, double t) const { return a * (static_cast<double>(n) - c * t - T); }
};

/**
 * log of the weighted l2 norm sqrt(sum exp(2a(n-ct-T)) x_n^2), evaluated in
 * shifted log-space so that frames far from the data never overflow.
 * Returns -inf for the zero field.
 */
inline double weighted_log_norm(const Field& x, const LatticeGrid& grid, const WeightFrame& frame, double t) {
    require_finite(x, "weighted_norm");
    if (!std::isfinite(t)) throw std::invalid_argument("weighted_norm: non-finite time");
    const int N = grid.size();
    if (x.size() != N) throw std::invalid_argument("weighted_norm: field size does not match grid");

    // log of each term's magnitude: a(n-ct-T) + log|x_n|
    double max_log = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < N; ++i) {
        if (x[i] == 0.0) continue;
        const double l = frame.exponent(grid.site(i), t) + std::log(std::abs(x[i]));
        if (l > max_log) max_log = l;
    }
    if (!std::isfinite(max_log)) return -std::numeric_limits<double>::infinity();
    double acc = 0.0;
    for (int i = 0; i < N; ++i) {
        if (x[i] == 0.0) continue;
        const double l = frame.exponent(grid.site(i), t) + std::log(std::abs(x[i]));
        acc += std::exp(2.0 * (l - max_log));
    }
    return max_log + 0.5 * std::log(acc);
}

inline double weighted_norm(const Field& x, const LatticeGrid& grid, const WeightFrame& frame, double t) {
    return std::exp(weighted_log_norm(x, grid, frame, t));
}

inline double log_hypot(double la, double lb) {
    const double hi = std::max(la, lb), lo = std::min(la, lb);
    if (!std::isfinite(hi)) return hi;
    return hi + 0.5 * std::log1p(std::exp(2.0 * (lo - hi)));
}

// Weighted norm of a perturbation pair, sqrt(|w q|^2 + |w p|^2).
inline double weighted_log_norm(const TangentField& u, const WeightFrame& frame, double t) {
    return log_hypot(weighted_log_norm(u.q, u.grid, frame, t),
                     weighted_log_norm(u.p, u.grid, frame, t));
}
inline double weighted_norm(const TangentField& u, const WeightFrame& frame, double t) {
    return std::exp(weighted_log_norm(u, frame, t));
}

// Same for the (r, p) representation, which is what the stability estimates use.
inline double weighted_log_norm_rp(const TangentField& u, const WeightFrame& frame, double t) {
    return log_hypot(weighted_log_norm(u.r_field(), u.grid, frame, t),
                     weighted_log_norm(u.p, u.grid, frame, t));
}
inline double weighted_norm_rp(const TangentField& u, const WeightFrame& frame, double t) {
    return std::exp(weighted_log_norm_rp(u, frame, t));
}

} // namespace toda
