#pragma once

// Shared problem fixtures for the tests. All coefficients are Markovian
// (read the path at the current time only) unless stated otherwise.

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "ctrlmc/kernel.hpp"
#include "ctrlmc/model.hpp"
#include "ctrlmc/rng.hpp"

namespace testutil {

// Singleton control, zero drift, constant volatility equal to the reference:
// the scheme degenerates to a plain conditional expectation and the state is
// a martingale. Default payoff is the terminal state itself.
inline ctrlmc::ControlProblem singleton_bm(double x0, double sigma, double horizon,
                                           std::function<double(double)> payoff = nullptr) {
    if (!payoff) payoff = [](double x) { return x; };
    ctrlmc::ControlProblem p;
    p.name = "singleton-bm";
    p.dim_x = 1;
    p.horizon = horizon;
    p.x0 = Eigen::VectorXd::Constant(1, x0);
    p.controls = ctrlmc::ControlGrid::scalars({0.0});
    p.drift = [](double, const ctrlmc::PathGrid&, const Eigen::VectorXd&) {
        return Eigen::VectorXd::Zero(1);
    };
    p.vol = [sigma](double, const ctrlmc::PathGrid&, const Eigen::VectorXd&) {
        return Eigen::MatrixXd::Constant(1, 1, sigma);
    };
    p.running_reward = [](double, const ctrlmc::PathGrid&, const Eigen::VectorXd&) {
        return 0.0;
    };
    p.terminal_reward = [payoff](const ctrlmc::PathGrid& path) {
        return payoff(path.eval(path.horizon())[0]);
    };
    p.ref_vol = [sigma](double, const ctrlmc::PathGrid&) {
        return Eigen::MatrixXd::Constant(1, 1, sigma);
    };
    return p;
}

// Four controls (a, b): volatility sqrt(1 + a), drift b, unit reference
// volatility, payoff sqrt(1 + x^2). Worst quadratic minimum -0.27 at
// (1.5, 0.9); worst trace term 1 - 1.5/2 = 0.25, so the step bound
// 0.25/0.27 ~ 0.926 is capped at the horizon 0.3. Small enough for the
// brute-force dynamic program, rich enough that the optimal control varies.
inline ctrlmc::ControlProblem four_control_fixture() {
    ctrlmc::ControlProblem p;
    p.name = "four-control";
    p.dim_x = 1;
    p.horizon = 0.3;
    p.x0 = Eigen::VectorXd::Zero(1);
    ctrlmc::ControlGrid grid;
    const double abs_[4][2] = {{0.0, 0.0}, {0.5, 0.3}, {1.0, 0.6}, {1.5, 0.9}};
    for (const auto& ab : abs_) {
        Eigen::VectorXd u(2);
        u << ab[0], ab[1];
        grid.points.push_back(u);
    }
    p.controls = grid;
    p.drift = [](double, const ctrlmc::PathGrid&, const Eigen::VectorXd& u) {
        return Eigen::VectorXd::Constant(1, u[1]);
    };
    p.vol = [](double, const ctrlmc::PathGrid&, const Eigen::VectorXd& u) {
        return Eigen::MatrixXd::Constant(1, 1, std::sqrt(1.0 + u[0]));
    };
    p.running_reward = [](double, const ctrlmc::PathGrid&, const Eigen::VectorXd&) {
        return 0.0;
    };
    p.terminal_reward = [](const ctrlmc::PathGrid& path) {
        const double x = path.eval(path.horizon())[0];
        return std::sqrt(1.0 + x * x);
    };
    p.ref_vol = [](double, const ctrlmc::PathGrid&) {
        return Eigen::MatrixXd::Identity(1, 1);
    };
    return p;
}

// Two controls (excess variance 0 or 1), driftless, bounded payoff with mixed
// curvature so the optimal control genuinely depends on the state.
inline ctrlmc::ControlProblem two_control_fixture() {
    ctrlmc::ControlProblem p;
    p.name = "two-control";
    p.dim_x = 1;
    p.horizon = 0.5;
    p.x0 = Eigen::VectorXd::Zero(1);
    p.controls = ctrlmc::ControlGrid::scalars({0.0, 1.0});
    p.drift = [](double, const ctrlmc::PathGrid&, const Eigen::VectorXd&) {
        return Eigen::VectorXd::Zero(1);
    };
    p.vol = [](double, const ctrlmc::PathGrid&, const Eigen::VectorXd& u) {
        return Eigen::MatrixXd::Constant(1, 1, std::sqrt(1.0 + u[0]));
    };
    p.running_reward = [](double, const ctrlmc::PathGrid&, const Eigen::VectorXd&) {
        return 0.0;
    };
    p.terminal_reward = [](const ctrlmc::PathGrid& path) {
        return std::cos(2.0 * path.eval(path.horizon())[0]);
    };
    p.ref_vol = [](double, const ctrlmc::PathGrid&) {
        return Eigen::MatrixXd::Identity(1, 1);
    };
    return p;
}

// Uncertain volatility in arithmetic form: controlled variance on a grid
// whose smallest point equals the reference variance, so every excess
// diffusion is nonnegative and every step size up to the horizon is
// admissible. Convex payoff; the value is the Bachelier price at the maximal
// volatility.
inline ctrlmc::ControlProblem uvm_arith(double x0 = 0.0, double strike = 0.0,
                                        double horizon = 1.0) {
    ctrlmc::ControlProblem p;
    p.name = "uvm-arith";
    p.dim_x = 1;
    p.horizon = horizon;
    p.x0 = Eigen::VectorXd::Constant(1, x0);
    p.controls = ctrlmc::ControlGrid::scalars({1.0, 1.5, 2.0});  // variances
    p.drift = [](double, const ctrlmc::PathGrid&, const Eigen::VectorXd&) {
        return Eigen::VectorXd::Zero(1);
    };
    p.vol = [](double, const ctrlmc::PathGrid&, const Eigen::VectorXd& u) {
        return Eigen::MatrixXd::Constant(1, 1, std::sqrt(u[0]));
    };
    p.running_reward = [](double, const ctrlmc::PathGrid&, const Eigen::VectorXd&) {
        return 0.0;
    };
    p.terminal_reward = [strike](const ctrlmc::PathGrid& path) {
        return std::max(path.eval(path.horizon())[0] - strike, 0.0);
    };
    p.ref_vol = [](double, const ctrlmc::PathGrid&) {
        return Eigen::MatrixXd::Identity(1, 1);  // variance 1 = smallest control
    };
    return p;
}

// Randomized valid 1-d one-step parameters plus their admissible step bound.
// The excess-variance ratio stays below 1.4 so the trace term is comfortably
// positive, and the drift always lies in the range of a_u (a_u > 0).
struct RandomStep {
    ctrlmc::StepParams params;
    double h0 = 0.0;
};

inline RandomStep random_step_params(ctrlmc::RngStream& rng, double h_cap = 1.0) {
    RandomStep out;
    const double a0 = std::exp(2.0 * rng.next_uniform() - 1.0);
    const double ratio = 0.1 + 1.3 * rng.next_uniform();
    const double au = ratio * a0;
    const double b = (2.0 * rng.next_uniform() - 1.0) * 0.8 * std::sqrt(au);
    out.params.a0 = Eigen::MatrixXd::Constant(1, 1, a0);
    out.params.a_u = Eigen::MatrixXd::Constant(1, 1, au);
    out.params.b_u = Eigen::VectorXd::Constant(1, b);
    const double m_g = -b * b / (2.0 * au);
    const double min_second = 1.0 - 0.5 * ratio;
    out.h0 = (m_g < 0.0) ? std::min(h_cap, min_second / (-m_g)) : h_cap;
    out.params.h = 0.0;  // caller picks h relative to h0
    return out;
}

}  // namespace testutil
