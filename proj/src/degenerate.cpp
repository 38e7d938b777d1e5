#include "ctrlmc/degenerate.hpp"

#include <cmath>
#include <cstdio>
#include <string>
#include <utility>

#include "ctrlmc/errors.hpp"

namespace ctrlmc {

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m, double tol) {
    if (m.rows() != m.cols()) throw ConfigError("symmetric_sqrt: matrix not square");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
    if (eig.info() != Eigen::Success)
        throw NumericalError("symmetric_sqrt: eigendecomposition failed");

    Eigen::VectorXd lam = eig.eigenvalues();
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    for (int i = 0; i < lam.size(); ++i) {
        if (lam(i) < -tol * scale)
            throw ModelAssumptionError("symmetric_sqrt: negative eigenvalue " +
                                       std::to_string(lam(i)));
        lam(i) = lam(i) > 0.0 ? std::sqrt(lam(i)) : 0.0;
    }
    Eigen::MatrixXd root = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (root + root.transpose());
}

namespace {

std::string eps_suffix(double eps) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "[eps=%g]", eps);
    return std::string(buf);
}

}  // namespace

PerturbedProblem perturb(const ControlProblem& base, double epsilon,
                         PathVolFn ref_vol_override) {
    if (!(epsilon > 0.0)) throw ConfigError("perturb: epsilon must be > 0");

    PerturbedProblem out;
    out.epsilon = epsilon;
    out.problem = base;
    out.problem.name = base.name + eps_suffix(epsilon);

    const double e2 = epsilon * epsilon;
    const int d = base.dim_x;
    auto vol = base.vol;
    out.problem.vol = [vol, e2, d](double t, const PathGrid& path, const Eigen::VectorXd& u) {
        Eigen::MatrixXd s = vol(t, path, u);
        return symmetric_sqrt(s * s.transpose() + e2 * Eigen::MatrixXd::Identity(d, d));
    };

    if (ref_vol_override) {
        out.problem.ref_vol = std::move(ref_vol_override);
    } else {
        out.problem.ref_vol = [epsilon, d](double, const PathGrid&) {
            return Eigen::MatrixXd(epsilon * Eigen::MatrixXd::Identity(d, d));
        };
    }
    return out;
}

MarkovLift perturb_lift(const MarkovLift& base, double epsilon, LiftVolFn ref_vol_override) {
    if (!(epsilon > 0.0)) throw ConfigError("perturb_lift: epsilon must be > 0");

    MarkovLift out = base;
    const double e2 = epsilon * epsilon;
    auto vol = base.vol;
    out.vol = [vol, e2](int k, const Eigen::VectorXd& x, const Eigen::VectorXd& s,
                        const Eigen::VectorXd& u) {
        Eigen::MatrixXd m = vol(k, x, s, u);
        const int d = static_cast<int>(m.rows());
        return symmetric_sqrt(m * m.transpose() + e2 * Eigen::MatrixXd::Identity(d, d));
    };

    if (ref_vol_override) {
        out.ref_vol = std::move(ref_vol_override);
    } else {
        out.ref_vol = [epsilon](int, const Eigen::VectorXd& x, const Eigen::VectorXd&) {
            const int d = static_cast<int>(x.size());
            return Eigen::MatrixXd(epsilon * Eigen::MatrixXd::Identity(d, d));
        };
    }
    return out;
}

}  // namespace ctrlmc
