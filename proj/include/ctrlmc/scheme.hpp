#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <vector>

#include "ctrlmc/driver.hpp"
#include "ctrlmc/kernel.hpp"
#include "ctrlmc/lattice.hpp"
#include "ctrlmc/model.hpp"
#include "ctrlmc/regression.hpp"

namespace ctrlmc {

// Flat storage for M simulated reference paths on an n-step grid, step-major
// so per-step passes stream contiguously. Brownian increments are retained:
// the regression weights need them.
struct PathEnsemble {
    int n = 0;
    double horizon = 0.0;
    int dim_x = 0;
    int dim_s = 0;
    int paths = 0;
    std::uint64_t seed = 0;
    std::vector<double> x;   // (n+1) * M * dim_x
    std::vector<double> dw;  // n * M * dim_x
    std::vector<double> s;   // (n+1) * M * dim_s

    double h() const { return horizon / n; }

    Eigen::Map<const Eigen::VectorXd> state_x(int k, int m) const {
        return {x.data() + (static_cast<std::size_t>(k) * paths + m) * dim_x,
                static_cast<Eigen::Index>(dim_x)};
    }
    Eigen::Map<const Eigen::VectorXd> incr(int k, int m) const {
        return {dw.data() + (static_cast<std::size_t>(k) * paths + m) * dim_x,
                static_cast<Eigen::Index>(dim_x)};
    }
    Eigen::Map<const Eigen::VectorXd> state_s(int k, int m) const {
        return {s.data() + (static_cast<std::size_t>(k) * paths + m) * dim_s,
                static_cast<Eigen::Index>(dim_s)};
    }
    // Lifted state (x_k, s_k) as one vector.
    Eigen::VectorXd state(int k, int m) const;
    // Materialized path of paths[m] filled to step `upto`.
    PathGrid path(int m, int upto) const;
};

// Simulates the uncontrolled reference process X_{k+1} = X_k + sigma0 dW and
// folds the lift's summary state along each path. Per-path RNG streams make
// the result independent of the worker count.
PathEnsemble simulate_reference(const ControlProblem& problem, const MarkovLift& lift, int n,
                                int paths, std::uint64_t seed, int threads = 1);

// Pluggable conditional-expectation engines.
enum class Engine { Oracle, Regress1, Regress2 };

struct LatticeOptions {
    int x_count = 513;
    double x_half_width = 0.0;  // 0: auto from the reference vol at the start
    int s_count = 129;
    double s_lo = 0.0, s_hi = 0.0;  // equal: auto from probe paths
    int quad_order = 64;            // Gauss-Hermite order
    bool use_simpson = false;       // Simpson in the increment instead of GH
    double simpson_span = 8.0;
    int simpson_points = 2049;
};

struct SchemeConfig {
    Engine engine = Engine::Oracle;
    int n = 16;
    int paths = 100000;
    std::uint64_t seed = 1;
    int threads = 1;
    BasisSpec basis;
    bool truncate = true;
    double trunc_growth = 10.0;
    bool raw_driver_inputs = false;
    bool use_qr = false;
    bool allow_h_override = false;
    LatticeOptions lattice;
    int wp_probe_paths = 16;
};

// Read-only view of the computed value function and its derivative estimates,
// for strategy extraction and inspection. States are lifted (x, s) vectors.
class ValueSurface {
  public:
    virtual ~ValueSurface() = default;
    virtual int steps() const = 0;
    virtual double y_at(int k, const Eigen::VectorXd& state) const = 0;
    virtual Eigen::VectorXd z_at(int k, const Eigen::VectorXd& state) const = 0;
    virtual Eigen::MatrixXd gamma_at(int k, const Eigen::VectorXd& state) const = 0;
};

struct StepDiagnostics {
    int k = 0;
    std::vector<int> argmax_count;
    double resid_y = 0.0;
    double cond_y = 0.0;
    int trunc_hits = 0;
    int rank_warnings = 0;
};

struct SchemeResult {
    double y0 = 0.0;
    int n = 0;
    double h = 0.0;
    Engine engine = Engine::Oracle;
    std::uint64_t seed = 0;
    WellPosedness wp;
    bool h_overridden = false;
    std::vector<StepDiagnostics> steps;  // index k = 0..n-1
    std::vector<double> step0_values;    // per-path step-0 targets (regression)
    std::shared_ptr<const ValueSurface> surface;
    int trunc_hits_total = 0;
};

// The backward induction: terminal values from the lifted payoff, then for
// k = n-1..0 conditional estimates (E[Y], Z, Gamma) from the configured
// engine and Y_k = E[Y_{k+1}] + h * driver. Refuses h > h0 unless the
// override flag is set (the result is then tagged non-conforming).
SchemeResult backward_induction(const ControlProblem& problem, const MarkovLift& lift,
                                const SchemeConfig& config,
                                const WellPosedness* wp = nullptr);

}  // namespace ctrlmc
