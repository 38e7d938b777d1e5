#pragma once

#include <Eigen/Dense>
#include <functional>

#include "ctrlmc/model.hpp"

namespace ctrlmc {

// Symmetric PSD square root via eigendecomposition. Eigenvalues within
// tol * scale below zero are clamped to zero; anything lower throws
// ModelAssumptionError.
Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m, double tol = 1e-12);

// Problem with the diffusion replaced by sqrt(sigma sigma^T + eps^2 I).
// Nondegenerate by construction: the perturbed covariance dominates eps^2 I.
struct PerturbedProblem {
    ControlProblem problem;
    double epsilon = 0.0;
};

using PathVolFn = std::function<Eigen::MatrixXd(double, const PathGrid&)>;
using LiftVolFn =
    std::function<Eigen::MatrixXd(int, const Eigen::VectorXd&, const Eigen::VectorXd&)>;

// Reference volatility defaults to eps * I; callers may supply one that
// dominates it when the reference process should track the base dynamics.
PerturbedProblem perturb(const ControlProblem& base, double epsilon,
                         PathVolFn ref_vol_override = nullptr);

// Same construction applied to a Markovian lift.
MarkovLift perturb_lift(const MarkovLift& base, double epsilon,
                        LiftVolFn ref_vol_override = nullptr);

}  // namespace ctrlmc
