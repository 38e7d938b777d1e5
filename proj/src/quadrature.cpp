#include "ctrlmc/quadrature.hpp"

#include <cmath>

#include "ctrlmc/errors.hpp"

namespace ctrlmc {

QuadratureRule gauss_hermite(int order) {
    if (order < 1) throw ConfigError("gauss_hermite: order must be >= 1");
    QuadratureRule rule;
    if (order == 1) {
        rule.nodes = Eigen::VectorXd::Zero(1);
        rule.weights = Eigen::VectorXd::Constant(1, std::sqrt(M_PI));
        return rule;
    }
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
    for (int i = 1; i < order; ++i) {
        double beta = std::sqrt(i / 2.0);
        jacobi(i, i - 1) = beta;
        jacobi(i - 1, i) = beta;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    rule.nodes = es.eigenvalues();
    rule.weights.resize(order);
    const double mu0 = std::sqrt(M_PI);
    for (int i = 0; i < order; ++i) {
        double v0 = es.eigenvectors()(0, i);
        rule.weights[i] = mu0 * v0 * v0;
    }
    return rule;
}

QuadratureRule normal_expectation(int order) {
    QuadratureRule rule = gauss_hermite(order);
    rule.nodes *= std::sqrt(2.0);
    rule.weights /= std::sqrt(M_PI);
    return rule;
}

QuadratureRule simpson(double lo, double hi, int points) {
    if (!(hi > lo)) throw ConfigError("simpson: need hi > lo");
    if (points < 3) points = 3;
    if (points % 2 == 0) ++points;
    QuadratureRule rule;
    rule.nodes.resize(points);
    rule.weights.resize(points);
    const double step = (hi - lo) / (points - 1);
    for (int i = 0; i < points; ++i) {
        rule.nodes[i] = lo + i * step;
        double w;
        if (i == 0 || i == points - 1)
            w = 1.0;
        else if (i % 2 == 1)
            w = 4.0;
        else
            w = 2.0;
        rule.weights[i] = w * step / 3.0;
    }
    return rule;
}

}  // namespace ctrlmc
