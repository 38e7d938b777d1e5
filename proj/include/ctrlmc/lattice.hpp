#pragma once

#include <Eigen/Dense>

namespace ctrlmc {

// Uniform 1-d node axis.
struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    int count = 2;

    double step() const { return (hi - lo) / (count - 1); }
    double node(int i) const { return lo + i * step(); }

    // Odd `count` keeps `center` exactly on a node.
    static Axis centered(double center, double half_width, int count);
};

// Local interpolation stencil: up to four taps with barycentric-style weights.
struct InterpStencil {
    int base = 0;
    int taps = 0;
    double w[4] = {0, 0, 0, 0};
};

// Four-point Lagrange cubic inside the axis; degrades to the edge cell's
// linear extension outside [lo, hi]. Weights always sum to 1, and the rule
// reproduces affine functions everywhere (cubics strictly inside).
InterpStencil interp_stencil(const Axis& axis, double x);

double interp1(const Axis& axis, const double* values, double x);

inline double interp1(const Axis& axis, const Eigen::VectorXd& values, double x) {
    return interp1(axis, values.data(), x);
}

// Tensor-product interpolation: values(i, j) lives at (ax.node(i), ay.node(j)).
double interp2(const Axis& ax, const Axis& ay, const Eigen::MatrixXd& values, double x, double y);

}  // namespace ctrlmc
