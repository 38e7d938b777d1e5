#include "ctrlmc/problems.hpp"

#include <cmath>

#include "ctrlmc/errors.hpp"

namespace ctrlmc {

double black_scholes_call(double spot, double strike, double sigma, double t) {
    if (!(spot > 0) || !(strike > 0) || !(sigma > 0) || !(t > 0))
        throw ConfigError("black_scholes_call: inputs must be positive");
    const double sq = sigma * std::sqrt(t);
    const double d1 = (std::log(spot / strike) + 0.5 * sigma * sigma * t) / sq;
    const double d2 = d1 - sq;
    auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
    return spot * cdf(d1) - strike * cdf(d2);
}

namespace {

Eigen::VectorXd vec1(double v) {
    Eigen::VectorXd x(1);
    x[0] = v;
    return x;
}

Eigen::MatrixXd mat1(double v) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = v;
    return m;
}

double zero_running(double, const PathGrid&, const Eigen::VectorXd&) { return 0.0; }

// Lognormal spot in log space, singleton control; the reference volatility is
// deliberately below the control volatility so the correction terms are live.
BuiltinProblem make_bs_call() {
    const double spot0 = 100.0;
    const double strike = 100.0;
    const double sigma = 0.2;
    const double sigma0 = 0.18;
    const double mu = -0.5 * sigma * sigma;  // exp(X) is a martingale

    BuiltinProblem b;
    ControlProblem& p = b.problem;
    p.name = "bs-call";
    p.dim_x = 1;
    p.horizon = 1.0;
    p.x0 = vec1(std::log(spot0));
    p.controls = ControlGrid::scalars({0.0});
    p.drift = [mu](double, const PathGrid&, const Eigen::VectorXd&) { return vec1(mu); };
    p.vol = [sigma](double, const PathGrid&, const Eigen::VectorXd&) { return mat1(sigma); };
    p.running_reward = zero_running;
    p.terminal_reward = [strike](const PathGrid& path) {
        return std::max(std::exp(path.eval(path.horizon())(0)) - strike, 0.0);
    };
    p.ref_vol = [sigma0](double, const PathGrid&) { return mat1(sigma0); };

    ControlProblem copy = p;
    b.lift_for = [copy](int n) { return markovian_lift(copy, n); };
    b.reference_value = black_scholes_call(spot0, strike, sigma, p.horizon);
    b.reference_label = "Black-Scholes closed form";
    // fine lattice: the payoff kink otherwise caps the ladder accuracy
    b.default_lattice.x_count = 2049;
    return b;
}

// Uncertain volatility in price space: the control is the variance, the
// reference variance sits below the whole grid, so every sub-reference
// control violates the excess-diffusion condition and h0 collapses to 0.
// Runs only under --allow-h-override; for the convex call payoff the value
// still matches Black-Scholes at the maximal volatility.
BuiltinProblem make_uvm_call() {
    const double spot0 = 100.0;
    const double strike = 100.0;
    const double ref_var = 0.0134;

    BuiltinProblem b;
    ControlProblem& p = b.problem;
    p.name = "uvm-call";
    p.dim_x = 1;
    p.horizon = 1.0;
    p.x0 = vec1(spot0);
    p.controls = ControlGrid::linspace(0.01, 0.04, 7);  // variance grid
    p.drift = [](double, const PathGrid&, const Eigen::VectorXd&) { return vec1(0.0); };
    p.vol = [](double t, const PathGrid& path, const Eigen::VectorXd& u) {
        return mat1(std::sqrt(u[0]) * path.eval(t)(0));
    };
    p.running_reward = zero_running;
    p.terminal_reward = [strike](const PathGrid& path) {
        return std::max(path.eval(path.horizon())(0) - strike, 0.0);
    };
    p.ref_vol = [ref_var](double t, const PathGrid& path) {
        return mat1(std::sqrt(ref_var) * path.eval(t)(0));
    };

    ControlProblem copy = p;
    b.lift_for = [copy](int n) { return markovian_lift(copy, n); };
    b.reference_value = black_scholes_call(spot0, strike, 0.2, p.horizon);
    b.reference_label = "Black-Scholes at the maximal volatility";
    b.default_lattice.x_count = 1025;
    return b;
}

// Variance option on (X, V) with V_t the accumulated variance. The V row of
// the diffusion is zero, so the problem is degenerate and is meant to be run
// through the eps-perturbation with a dominated reference volatility.
// The second state stores V net of the mid-grid drift nu_mid*t: the payoff
// adds nu_mid*T back, so the value is unchanged, but the controlled drift
// relative to the driftless reference shrinks from nu to nu - nu_mid. That
// keeps the drift-vs-reference-variance ratio small and the admissible step
// size usable at small eps.
BuiltinProblem make_call_sharpe() {
    const double spot0 = 100.0;
    const double strike = 100.0;
    const double nu_min = 0.04;
    const double nu_max = 0.09;
    const double nu_mid = 0.5 * (nu_min + nu_max);
    const double vfloor = 0.04;  // V_T >= nu_min * T on base dynamics
    const double eta = 0.95;     // keeps the reference strictly dominated

    BuiltinProblem b;
    ControlProblem& p = b.problem;
    p.name = "call-sharpe";
    p.dim_x = 2;
    p.horizon = 1.0;
    p.x0 = Eigen::VectorXd::Zero(2);
    p.controls = ControlGrid::linspace(nu_min, nu_max, 4);
    p.drift = [nu_mid](double, const PathGrid&, const Eigen::VectorXd& u) {
        Eigen::VectorXd out(2);
        out << 0.0, u[0] - nu_mid;
        return out;
    };
    p.vol = [](double, const PathGrid&, const Eigen::VectorXd& u) {
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 2);
        s(0, 0) = std::sqrt(u[0]);
        return s;
    };
    p.running_reward = zero_running;
    p.terminal_reward = [spot0, strike, vfloor, nu_mid](const PathGrid& path) {
        Eigen::VectorXd xv = path.eval(path.horizon());
        const double v = std::max(xv[1] + nu_mid * path.horizon(), vfloor);
        const double payoff = std::max(spot0 * std::exp(xv[0] - 0.5 * v) - strike, 0.0);
        return payoff / std::sqrt(v);
    };
    p.ref_vol = [nu_min](double, const PathGrid&) {
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 2);
        s(0, 0) = std::sqrt(nu_min);
        return s;  // singular on purpose: the base problem is degenerate
    };

    ControlProblem copy = p;
    b.lift_for = [copy](int n) { return markovian_lift(copy, n); };
    b.needs_perturbation = true;
    b.perturbed_ref_vol = [nu_min, eta](double eps) -> PathVolFn {
        return [nu_min, eta, eps](double, const PathGrid&) {
            Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 2);
            s(0, 0) = std::sqrt(nu_min + eta * eta * eps * eps);
            s(1, 1) = eta * eps;
            return s;
        };
    };
    b.perturbed_ref_vol_lift = [nu_min, eta](double eps) -> LiftVolFn {
        return [nu_min, eta, eps](int, const Eigen::VectorXd&, const Eigen::VectorXd&) {
            Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 2);
            s(0, 0) = std::sqrt(nu_min + eta * eta * eps * eps);
            s(1, 1) = eta * eps;
            return s;
        };
    };
    return b;
}

// Arithmetic-average call on a Brownian spot. The terminal reward reads the
// whole path; the lift carries the running mean, so this is the example that
// exercises genuine path dependence.
BuiltinProblem make_asian_lift() {
    const double spot0 = 100.0;
    const double strike = 100.0;
    const double sigma = 20.0;  // absolute volatility
    const double horizon = 1.0;

    BuiltinProblem b;
    ControlProblem& p = b.problem;
    p.name = "asian-lift";
    p.dim_x = 1;
    p.horizon = horizon;
    p.x0 = vec1(spot0);
    p.controls = ControlGrid::scalars({0.0});
    p.drift = [](double, const PathGrid&, const Eigen::VectorXd&) { return vec1(0.0); };
    p.vol = [sigma](double, const PathGrid&, const Eigen::VectorXd&) { return mat1(sigma); };
    p.running_reward = zero_running;
    p.terminal_reward = [strike](const PathGrid& path) {
        const int n = path.steps();
        double mean = 0.0;
        for (int k = 1; k <= n; ++k) mean += path.node(k)(0);
        mean /= n;
        return std::max(mean - strike, 0.0);
    };
    p.ref_vol = [sigma](double, const PathGrid&) { return mat1(sigma); };

    b.lift_for = [sigma, strike, horizon](int n) {
        MarkovLift lift;
        lift.n = n;
        lift.h = horizon / n;
        lift.dim_s = 1;
        lift.s0 = vec1(0.0);
        lift.update = [n](int, const Eigen::VectorXd& s, const Eigen::VectorXd& x_next) {
            return Eigen::VectorXd(s + x_next / n);
        };
        lift.drift = [](int, const Eigen::VectorXd&, const Eigen::VectorXd&,
                        const Eigen::VectorXd&) { return vec1(0.0); };
        lift.vol = [sigma](int, const Eigen::VectorXd&, const Eigen::VectorXd&,
                           const Eigen::VectorXd&) { return mat1(sigma); };
        lift.running_reward = [](int, const Eigen::VectorXd&, const Eigen::VectorXd&,
                                 const Eigen::VectorXd&) { return 0.0; };
        lift.terminal_reward = [strike](const Eigen::VectorXd&, const Eigen::VectorXd& s) {
            return std::max(s[0] - strike, 0.0);
        };
        lift.ref_vol = [sigma](int, const Eigen::VectorXd&, const Eigen::VectorXd&) {
            return mat1(sigma);
        };
        return lift;
    };
    // Continuous-average limit: the running mean tends to a centered Gaussian
    // with variance sigma^2 T / 3, so the ATM call is sd / sqrt(2 pi).
    b.reference_value = sigma * std::sqrt(horizon / 3.0) / std::sqrt(2.0 * M_PI);
    b.reference_label = "continuous-average limit";
    return b;
}

}  // namespace

std::vector<std::string> builtin_ids() {
    return {"bs-call", "uvm-call", "call-sharpe", "asian-lift"};
}

BuiltinProblem make_builtin(const std::string& id) {
    if (id == "bs-call") return make_bs_call();
    if (id == "uvm-call") return make_uvm_call();
    if (id == "call-sharpe") return make_call_sharpe();
    if (id == "asian-lift") return make_asian_lift();
    std::string known;
    for (const auto& s : builtin_ids()) known += (known.empty() ? "" : ", ") + s;
    throw ConfigError("unknown problem '" + id + "' (builtins: " + known + ")");
}

}  // namespace ctrlmc
