#pragma once

#include <Eigen/Dense>

namespace ctrlmc {

struct QuadratureRule {
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;
    int size() const { return static_cast<int>(nodes.size()); }
};

// Gauss-Hermite rule for integrals against exp(-t^2) on the real line,
// computed from the symmetric Jacobi matrix of the Hermite recurrence.
QuadratureRule gauss_hermite(int order);

// Expectation rule for a standard normal: E[f(Z)] ~ sum w_i f(x_i).
QuadratureRule normal_expectation(int order);

// Composite Simpson rule for a plain dx integral over [lo, hi].
// `points` is rounded up to the next odd count >= 3.
QuadratureRule simpson(double lo, double hi, int points);

}  // namespace ctrlmc
