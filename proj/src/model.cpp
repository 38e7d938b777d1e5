#include "ctrlmc/model.hpp"

#include <cmath>
#include <sstream>

#include "ctrlmc/errors.hpp"
#include "ctrlmc/rng.hpp"

namespace ctrlmc {

ControlGrid ControlGrid::scalars(const std::vector<double>& values) {
    ControlGrid grid;
    grid.points.reserve(values.size());
    for (double v : values) grid.points.push_back(Eigen::VectorXd::Constant(1, v));
    return grid;
}

ControlGrid ControlGrid::linspace(double lo, double hi, int count) {
    if (count < 1) throw ConfigError("ControlGrid::linspace: count must be >= 1");
    std::vector<double> values(count);
    for (int i = 0; i < count; ++i)
        values[i] = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
    return scalars(values);
}

PathGrid::PathGrid(int steps, double horizon, const Eigen::VectorXd& x0)
    : steps_(steps), horizon_(horizon), filled_(0) {
    if (steps < 1) throw ConfigError("PathGrid: steps must be >= 1");
    if (!(horizon > 0)) throw ConfigError("PathGrid: horizon must be > 0");
    if (x0.size() == 0) throw ConfigError("PathGrid: empty initial state");
    nodes_.setZero(x0.size(), steps + 1);
    nodes_.col(0) = x0;
}

Eigen::Ref<const Eigen::VectorXd> PathGrid::node(int k) const {
    if (k < 0 || k > filled_) throw ConfigError("PathGrid::node: index not filled");
    return nodes_.col(k);
}

void PathGrid::set_node(int k, const Eigen::VectorXd& x) {
    if (k < 0 || k > filled_ + 1 || k > steps_)
        throw ConfigError("PathGrid::set_node: index out of order");
    if (x.size() != nodes_.rows()) throw ConfigError("PathGrid::set_node: dimension mismatch");
    nodes_.col(k) = x;
    if (k == filled_ + 1) filled_ = k;
}

void PathGrid::append(const Eigen::VectorXd& x) { set_node(filled_ + 1, x); }

Eigen::VectorXd PathGrid::eval(double t) const {
    const double h = step_size();
    double tau = std::min(t, filled_ * h);
    if (tau <= 0) return nodes_.col(0);
    int k = std::min(static_cast<int>(std::floor(tau / h)), filled_ - 1);
    if (k < 0) k = 0;
    double w = (tau - k * h) / h;
    if (w <= 0) return nodes_.col(k);
    if (w >= 1) return nodes_.col(k + 1);
    return (1.0 - w) * nodes_.col(k) + w * nodes_.col(k + 1);
}

PathGrid PathGrid::truncated(int k) const {
    if (k < 0) throw ConfigError("PathGrid::truncated: negative index");
    PathGrid out = *this;
    out.filled_ = std::min(k, filled_);
    return out;
}

PathGrid make_path(int steps, double horizon, const Eigen::VectorXd& x0) {
    return PathGrid(steps, horizon, x0);
}

PathGrid constant_path(int steps, double horizon, const Eigen::VectorXd& x, int filled_to) {
    PathGrid path(steps, horizon, x);
    for (int k = 1; k <= filled_to; ++k) path.append(x);
    return path;
}

MarkovLift markovian_lift(const ControlProblem& problem, int n) {
    if (n < 1) throw ConfigError("markovian_lift: n must be >= 1");
    MarkovLift lift;
    lift.n = n;
    lift.h = problem.horizon / n;
    lift.dim_s = 0;
    lift.s0 = Eigen::VectorXd::Zero(0);
    const double horizon = problem.horizon;
    lift.update = [](int, const Eigen::VectorXd& s, const Eigen::VectorXd&) { return s; };
    lift.drift = [&problem, n, horizon](int k, const Eigen::VectorXd& x, const Eigen::VectorXd&,
                                        const Eigen::VectorXd& u) {
        PathGrid path = constant_path(n, horizon, x, k);
        return problem.drift(path.time(k), path, u);
    };
    lift.vol = [&problem, n, horizon](int k, const Eigen::VectorXd& x, const Eigen::VectorXd&,
                                      const Eigen::VectorXd& u) {
        PathGrid path = constant_path(n, horizon, x, k);
        return problem.vol(path.time(k), path, u);
    };
    lift.running_reward = [&problem, n, horizon](int k, const Eigen::VectorXd& x,
                                                 const Eigen::VectorXd&, const Eigen::VectorXd& u) {
        PathGrid path = constant_path(n, horizon, x, k);
        return problem.running_reward(path.time(k), path, u);
    };
    lift.terminal_reward = [&problem, n, horizon](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
        PathGrid path = constant_path(n, horizon, x, n);
        return problem.terminal_reward(path);
    };
    lift.ref_vol = [&problem, n, horizon](int k, const Eigen::VectorXd& x, const Eigen::VectorXd&) {
        PathGrid path = constant_path(n, horizon, x, k);
        return problem.ref_vol(path.time(k), path);
    };
    return lift;
}

namespace {

double rel_gap(double a, double b) {
    return std::abs(a - b) / (1.0 + std::max(std::abs(a), std::abs(b)));
}

double rel_gap(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return 1.0;
    double scale = 1.0 + std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

[[noreturn]] void mismatch(const std::string& what, int step, double gap) {
    std::ostringstream os;
    os << "lift replay mismatch in " << what << " at step " << step << " (gap " << gap << ")";
    throw LiftMismatchError(os.str(), step);
}

}  // namespace

void lift_problem(const ControlProblem& problem, const MarkovLift& lift,
                  const LiftCheckOptions& opts) {
    if (lift.n < 1) throw ConfigError("lift_problem: lift has no grid size");
    if (std::abs(lift.h - problem.horizon / lift.n) > 1e-15)
        throw ConfigError("lift_problem: lift step size disagrees with horizon/n");
    if (lift.s0.size() != lift.dim_s) throw ConfigError("lift_problem: s0 size != dim_s");

    const int n = lift.n;
    const double h = lift.h;
    const int d = problem.dim_x;

    for (int p = 0; p < opts.probe_paths; ++p) {
        RngStream rng(opts.seed, static_cast<std::uint64_t>(p));
        PathGrid path(n, problem.horizon, problem.x0);
        std::vector<Eigen::VectorXd> s(n + 1);
        s[0] = lift.s0;

        for (int k = 0; k < n; ++k) {
            Eigen::MatrixXd sigma0 = problem.ref_vol(path.time(k), path);
            Eigen::VectorXd dw(d);
            for (int i = 0; i < d; ++i) dw[i] = std::sqrt(h) * rng.next_normal();
            Eigen::VectorXd next = path.node(k) + sigma0 * dw;
            path.append(next);
            s[k + 1] = lift.update(k + 1, s[k], next);
            if (s[k + 1].size() != lift.dim_s)
                throw LiftMismatchError("lift update returned wrong dimension", k + 1);
        }

        for (int k = 0; k <= n; ++k) {
            PathGrid frozen = path.truncated(k);
            const Eigen::VectorXd xk = path.node(k);
            double t = path.time(k);
            if (k < n) {
                for (int c = 0; c < problem.controls.size(); ++c) {
                    const Eigen::VectorXd& u = problem.controls[c];
                    double g;
                    g = rel_gap(Eigen::MatrixXd(problem.drift(t, frozen, u)),
                                Eigen::MatrixXd(lift.drift(k, xk, s[k], u)));
                    if (g > opts.tol) mismatch("drift", k, g);
                    g = rel_gap(problem.vol(t, frozen, u), lift.vol(k, xk, s[k], u));
                    if (g > opts.tol) mismatch("vol", k, g);
                    g = rel_gap(problem.running_reward(t, frozen, u),
                                lift.running_reward(k, xk, s[k], u));
                    if (g > opts.tol) mismatch("running_reward", k, g);
                }
                double g = rel_gap(problem.ref_vol(t, frozen), lift.ref_vol(k, xk, s[k]));
                if (g > opts.tol) mismatch("ref_vol", k, g);
            }
        }

        double g = rel_gap(problem.terminal_reward(path), lift.terminal_reward(path.node(n), s[n]));
        if (g > opts.tol) mismatch("terminal_reward", n, g);
    }
}

}  // namespace ctrlmc
