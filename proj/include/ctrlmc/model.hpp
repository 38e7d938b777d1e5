#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ctrlmc {

// Finite set of admissible control values.
struct ControlGrid {
    std::vector<Eigen::VectorXd> points;

    int size() const { return static_cast<int>(points.size()); }
    int dim() const { return points.empty() ? 0 : static_cast<int>(points[0].size()); }
    const Eigen::VectorXd& operator[](int i) const { return points[i]; }

    static ControlGrid scalars(const std::vector<double>& values);
    static ControlGrid linspace(double lo, double hi, int count);
};

// Piecewise linear path on a uniform time grid, filled left to right.
// All evaluation is "frozen": times past the last filled node return that
// node, so a path filled to step k behaves as the path stopped at t_k.
class PathGrid {
  public:
    PathGrid(int steps, double horizon, const Eigen::VectorXd& x0);

    int steps() const { return steps_; }
    double horizon() const { return horizon_; }
    double step_size() const { return horizon_ / steps_; }
    int dim() const { return static_cast<int>(nodes_.rows()); }
    int filled_to() const { return filled_; }
    double time(int k) const { return k * step_size(); }

    Eigen::Ref<const Eigen::VectorXd> node(int k) const;
    void set_node(int k, const Eigen::VectorXd& x);
    void append(const Eigen::VectorXd& x);

    // Linear interpolation between filled nodes, frozen outside.
    Eigen::VectorXd eval(double t) const;

    // The same path stopped at step k (frozen there on evaluation).
    PathGrid truncated(int k) const;

  private:
    int steps_;
    double horizon_;
    Eigen::MatrixXd nodes_;  // dim x (steps + 1)
    int filled_;
};

PathGrid make_path(int steps, double horizon, const Eigen::VectorXd& x0);

// Path whose every filled node equals `x`; used to probe coefficient
// functions of Markovian problems at a bare state.
PathGrid constant_path(int steps, double horizon, const Eigen::VectorXd& x, int filled_to);

// Controlled diffusion data. Coefficients see the whole (frozen) path, so
// path-dependent problems are expressed directly.
struct ControlProblem {
    std::string name;
    int dim_x = 1;
    double horizon = 1.0;
    Eigen::VectorXd x0;
    ControlGrid controls;

    std::function<Eigen::VectorXd(double t, const PathGrid&, const Eigen::VectorXd& u)> drift;
    std::function<Eigen::MatrixXd(double t, const PathGrid&, const Eigen::VectorXd& u)> vol;
    std::function<double(double t, const PathGrid&, const Eigen::VectorXd& u)> running_reward;
    std::function<double(const PathGrid&)> terminal_reward;

    // Volatility of the uncontrolled reference process the scheme simulates.
    std::function<Eigen::MatrixXd(double t, const PathGrid&)> ref_vol;
};

// Finite-dimensional summary of the path history: s_{k+1} = update(k+1, s_k,
// x_{k+1}). Coefficients become functions of (k, x_k, s_k), which is what the
// backward pass conditions on. A lift is built for one grid size n.
struct MarkovLift {
    int n = 0;
    double h = 0.0;
    int dim_s = 0;
    Eigen::VectorXd s0;

    std::function<Eigen::VectorXd(int k_next, const Eigen::VectorXd& s, const Eigen::VectorXd& x_next)> update;
    std::function<Eigen::VectorXd(int k, const Eigen::VectorXd& x, const Eigen::VectorXd& s, const Eigen::VectorXd& u)> drift;
    std::function<Eigen::MatrixXd(int k, const Eigen::VectorXd& x, const Eigen::VectorXd& s, const Eigen::VectorXd& u)> vol;
    std::function<double(int k, const Eigen::VectorXd& x, const Eigen::VectorXd& s, const Eigen::VectorXd& u)> running_reward;
    std::function<double(const Eigen::VectorXd& x, const Eigen::VectorXd& s)> terminal_reward;
    std::function<Eigen::MatrixXd(int k, const Eigen::VectorXd& x, const Eigen::VectorXd& s)> ref_vol;
};

// Identity lift for problems whose coefficients only read the current state.
MarkovLift markovian_lift(const ControlProblem& problem, int n);

struct LiftCheckOptions {
    int probe_paths = 8;
    std::uint64_t seed = 0x11d5ull;
    double tol = 1e-12;
};

// Replays the lift along simulated reference paths and checks that every
// lifted coefficient agrees with the path-functional one. Throws
// LiftMismatchError (with the offending step) on disagreement.
void lift_problem(const ControlProblem& problem, const MarkovLift& lift,
                  const LiftCheckOptions& opts = {});

}  // namespace ctrlmc
