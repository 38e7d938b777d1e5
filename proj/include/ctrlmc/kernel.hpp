#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ctrlmc/model.hpp"
#include "ctrlmc/rng.hpp"

namespace ctrlmc {

// Parameters of the one-step transition law: a0 is the reference covariance
// sigma0 sigma0^T, a_u the control's excess diffusion sigma_u sigma_u^T - a0,
// b_u its drift, h the step size.
struct StepParams {
    Eigen::MatrixXd a0;
    Eigen::MatrixXd a_u;
    Eigen::VectorXd b_u;
    double h = 0.0;
};

// min over w of (1/2) w^T a w + b . w for psd a. Finite (equal to
// -(1/2) b^T a^+ b) iff b lies in the range of a; -infinity otherwise.
double quadratic_min(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

struct AssumptionViolation {
    std::string what;
    int path = 0;
    int step = 0;
    int control = 0;
};

// Step-size admissibility constants, estimated by probing the coefficient
// functions along simulated reference paths. m_g is the worst quadratic
// minimum, min_second the worst value of 1 - tr(a_u a0^{-1})/2, and h0 the
// largest step keeping the one-step densities nonnegative (capped at the
// horizon; zero when some structural assumption fails).
struct WellPosedness {
    double m_g = 0.0;
    double h0 = 0.0;
    double min_second = 1.0;
    bool probe_based = true;
    std::vector<AssumptionViolation> violations;
    int violation_count = 0;
    int argmin_path = -1, argmin_step = -1, argmin_control = -1;

    bool admissible(double h) const { return violation_count == 0 && h <= h0 * (1 + 1e-12); }
};

struct ProbeOptions {
    int paths = 16;
    std::uint64_t seed = 0x77e11ull;
};

WellPosedness well_posedness(const ControlProblem& problem, int grid_steps,
                             const ProbeOptions& opts = {});

// Recomputes h0 after replacing m_g (e.g. with an analytic value).
void apply_mg_override(WellPosedness& wp, double m_g, double horizon);

// One-step density of the scheme's transition kernel: the N(0, h a0) density
// times an affine-plus-quadratic correction in x. Nonnegative everywhere iff
// h <= h0. May be evaluated (and go negative) for inadmissible h.
double step_density(const StepParams& params, const Eigen::VectorXd& x);

struct StepMoments {
    Eigen::VectorXd mean;  // b_u h
    Eigen::MatrixXd cov;   // (a0 + a_u) h - b_u b_u^T h^2
};
StepMoments step_moments(const StepParams& params);

// Inverse-CDF sampler for the 1-d one-step law, backed by a tabulated CDF on
// a uniform grid of `table_size` points spanning `span` standard deviations
// either side of the mean. Negative density values (inadmissible h) are
// clipped to zero; the clipped mass is recorded.
class StepSampler {
  public:
    explicit StepSampler(const StepParams& params, int table_size = 4096, double span = 8.0);

    double operator()(double uniform) const;
    double sample(RngStream& rng) const { return (*this)(rng.next_uniform()); }

    double clipped_mass() const { return clipped_; }
    const Eigen::VectorXd& grid() const { return grid_; }
    const Eigen::VectorXd& cdf() const { return cdf_; }

  private:
    Eigen::VectorXd grid_;
    Eigen::VectorXd cdf_;
    double clipped_ = 0.0;
};

double sample_step(const StepParams& params, RngStream& rng);

// Monte Carlo weights turning next-step values into conditional estimates of
// the value itself, its gradient, and its Hessian. dw is the Brownian
// increment over a step of size h; sigma0 must be invertible.
struct GaussianWeights {
    double w_y = 1.0;
    Eigen::VectorXd w_z;
    Eigen::MatrixXd w_gamma;
};
GaussianWeights gaussian_weights(const Eigen::MatrixXd& sigma0, const Eigen::VectorXd& dw,
                                 double h);

}  // namespace ctrlmc
