#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "ctrlmc/driver.hpp"
#include "ctrlmc/model.hpp"

namespace ctrlmc {

struct PathEnsemble;

// Row-major so a sample's basis row is contiguous and can be filled in place.
using DesignMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Basis family for the per-step least-squares fits. One spec is used for all
// three regressions (value, gradient, Hessian targets); the basis itself is
// rebuilt per step from that step's states.
struct BasisSpec {
    enum class Family { Polynomial, PiecewiseLinear };
    Family family = Family::Polynomial;
    int degree = 3;  // total degree, cross terms included
    int bins = 8;    // quantile bins (piecewise-linear family, 1-d states only)

    int size(int dims) const;
};

// Concrete basis bound to one step's state sample. Polynomial bases evaluate
// monomials of the affinely standardized state (same span, far better
// conditioning); piecewise-linear bases put hat functions on sample-quantile
// knots.
class BasisEval {
  public:
    BasisEval(const BasisSpec& spec, const Eigen::MatrixXd& states);

    int size() const { return size_; }
    int dims() const { return dims_; }
    void row(const double* state, double* out) const;
    Eigen::RowVectorXd row(const Eigen::VectorXd& state) const;
    Eigen::MatrixXd design(const Eigen::MatrixXd& states) const;
    double value(const Eigen::VectorXd& state, const Eigen::VectorXd& coeff) const;

  private:
    BasisSpec spec_;
    int dims_ = 0;
    int size_ = 0;
    Eigen::VectorXd shift_, scale_;                // standardization
    std::vector<std::vector<int>> powers_;         // polynomial multi-indices
    Eigen::VectorXd knots_;                        // piecewise-linear knots
};

struct FitResult {
    Eigen::VectorXd coeff;
    double residual_rms = 0.0;
    double target_sd = 0.0;  // standard deviation of the targets (constant-fit residual)
    double cond = 0.0;
    bool ridge_used = false;
    bool rank_warning = false;
};

// One design matrix, one factorization, many targets. Normal equations with
// a ridge fallback (lambda = 1e-10 tr(G)/I) when the Gram condition number
// exceeds 1e12; QR path available as a config switch.
class StepFitter {
  public:
    StepFitter(const BasisSpec& spec, const Eigen::MatrixXd& states, bool use_qr = false,
               int threads = 1);

    FitResult fit(const Eigen::VectorXd& targets) const;
    const BasisEval& basis() const { return basis_; }
    const DesignMatrix& design() const { return design_; }
    double cond() const { return cond_; }

  private:
    BasisEval basis_;
    DesignMatrix design_;
    Eigen::LDLT<Eigen::MatrixXd> gram_;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
    bool use_qr_ = false;
    int threads_ = 1;
    double cond_ = 0.0;
    bool ridge_used_ = false;
    bool rank_warning_ = false;
};

FitResult fit_step(const Eigen::MatrixXd& states, const Eigen::VectorXd& targets,
                   const BasisSpec& spec, bool use_qr = false);

// Clips targets into [-bound, bound]; returns the number of clipped entries.
int truncate_targets(Eigen::Ref<Eigen::VectorXd> targets, double bound);

struct ProjectionOptions {
    bool truncate = true;
    double growth = 10.0;     // truncation bound = growth * max |terminal reward| * weight rms
    double y_bound = 0.0;     // growth * max |terminal reward|, set by the caller
    bool raw_driver_inputs = false;  // feed per-path raw targets to the driver
                                     // instead of the fitted basis values
    bool use_qr = false;
    int threads = 1;
};

// Per-step output of a projection scheme: fitted coefficients for the value
// and for each gradient/Hessian component, fitted values along the ensemble,
// and the per-path driver values needed by the cumulative scheme.
struct ProjectionStep {
    FitResult fit_y;
    std::vector<FitResult> fit_z;      // d entries
    std::vector<FitResult> fit_gamma;  // upper triangle, row-major
    Eigen::VectorXd y_values;          // fitted value per path at its own state
    Eigen::VectorXd y_targets;         // raw targets of the value fit
    Eigen::VectorXd g_values;          // driver value per path
    std::vector<int> argmax_count;
    int trunc_hits = 0;
    std::shared_ptr<BasisEval> basis;
};

// One-step targets: Z and Gamma regress y_next * weights, the value regresses
// y_next + h * driver(gamma_hat, z_hat).
ProjectionStep project_step_one_step(const ControlProblem& problem, const MarkovLift& lift,
                                     const PathEnsemble& ens, int k,
                                     const Eigen::VectorXd& y_next, const BasisSpec& spec,
                                     const ProjectionOptions& opts);

// Cumulative targets: all three fits regress terminal value plus the driver
// sum accumulated from step k+1 onward (`tail`), and the value fit adds this
// step's own h * driver term.
ProjectionStep project_step_terminal_sum(const ControlProblem& problem, const MarkovLift& lift,
                                         const PathEnsemble& ens, int k,
                                         const Eigen::VectorXd& tail, const BasisSpec& spec,
                                         const ProjectionOptions& opts);

}  // namespace ctrlmc
