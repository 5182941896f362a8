#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace toda {

using Field = Eigen::VectorXd;

/**
 * Truncated integer lattice [n_min, n_max] standing in for the infinite chain.
 *
 * Sites outside the range are Dirichlet-clamped to the asymptotic values of the
 * represented solution: left_value at n < n_min (normally 0) and right_value at
 * n > n_max (normally -2*sum(kappa)).  Kink profiles decay like exp(-2*kappa*|n|),
 * so the clamping error is controllable; states report it as boundary contamination.
 */
struct LatticeGrid {
    int n_min = 0;
    int n_max = 0;
    double left_value = 0.0;
    double right_value = 0.0;

    LatticeGrid() = default;
    LatticeGrid(int nmin, int nmax, double left = 0.0, double right = 0.0)
        : n_min(nmin), n_max(nmax), left_value(left), right_value(right) {
        if (n_max - n_min < 16)
            throw std::invalid_argument("LatticeGrid: need n_max - n_min >= 16, got [" +
                                        std::to_string(n_min) + "," + std::to_string(n_max) + "]");
    }

    int size() const { return n_max - n_min + 1; }
    int index(int n) const { return n - n_min; }
    int site(int i) const { return n_min + i; }
    bool contains(int n) const { return n >= n_min && n <= n_max; }

    // Clamped lookup: ghost sites evaluate to the asymptotic constants.
    double value(const Field& x, int n) const {
        if (n < n_min) return left_value;
        if (n > n_max) return right_value;
        return x[n - n_min];
    }

    // Zero-Dirichlet lookup for tangent (perturbation) fields.
    static double tangent_value(const Field& x, int i) {
        if (i < 0 || i >= x.size()) return 0.0;
        return x[i];
    }

    bool operator==(const LatticeGrid& o) const {
        return n_min == o.n_min && n_max == o.n_max &&
               left_value == o.left_value && right_value == o.right_value;
    }
    bool same_span(const LatticeGrid& o) const {
        return n_min == o.n_min && n_max == o.n_max;
    }
};

inline void require_same_span(const LatticeGrid& a, const LatticeGrid& b, const char* where) {
    if (!a.same_span(b))
        throw std::invalid_argument(std::string(where) + ": grid mismatch");
}

inline void require_finite(const Field& x, const char* where) {
    if (!x.allFinite())
        throw std::invalid_argument(std::string(where) + ": non-finite input field");
}

} // namespace toda
