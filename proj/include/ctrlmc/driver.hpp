#pragma once

#include <Eigen/Dense>

#include "ctrlmc/model.hpp"

namespace ctrlmc {

// Arguments of the nonlinear driver at one backward step: the lifted state
// (x, s) plus the second- and first-order conditional estimates.
struct DriverInput {
    int t_index = 0;
    Eigen::VectorXd x;
    Eigen::VectorXd s;
    Eigen::MatrixXd gamma;  // symmetric to 1e-12
    Eigen::VectorXd z;
};

struct DriverValue {
    double value = 0.0;
    int argmax = 0;  // first-index tie-breaking
};

// Pointwise supremum over the control grid of
//   running_reward + (1/2) tr(a_u gamma) + b_u . z,
// where a_u = vol vol^T - a0 is the control's excess diffusion.
DriverValue driver_sup(const ControlProblem& problem, const MarkovLift& lift,
                       const DriverInput& in);

}  // namespace ctrlmc
