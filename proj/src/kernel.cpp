#include "ctrlmc/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctrlmc/errors.hpp"

namespace ctrlmc {

namespace {
constexpr double kEigRelTol = 1e-10;
}

double quadratic_min(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    if (a.rows() != a.cols() || a.rows() != b.size())
        throw ConfigError("quadratic_min: shape mismatch");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const Eigen::VectorXd& eig = es.eigenvalues();
    double scale = std::max(eig.cwiseAbs().maxCoeff(), 1e-300);
    double tol = kEigRelTol * scale;

    // Project b on the eigenbasis; null directions must carry no drift.
    Eigen::VectorXd beta = es.eigenvectors().transpose() * b;
    double value = 0.0;
    for (int i = 0; i < eig.size(); ++i) {
        if (eig[i] <= tol) {
            if (std::abs(beta[i]) > kEigRelTol * (1.0 + b.norm()))
                return -std::numeric_limits<double>::infinity();
        } else {
            value -= 0.5 * beta[i] * beta[i] / eig[i];
        }
    }
    return value;
}

WellPosedness well_posedness(const ControlProblem& problem, int grid_steps,
                             const ProbeOptions& opts) {
    if (grid_steps < 1) throw ConfigError("well_posedness: grid_steps must be >= 1");
    WellPosedness wp;
    wp.m_g = 0.0;
    wp.min_second = std::numeric_limits<double>::infinity();
    bool structural_failure = false;

    const int n = grid_steps;
    const double h = problem.horizon / n;
    const int d = problem.dim_x;

    auto record = [&](const std::string& what, int p, int k, int c) {
        ++wp.violation_count;
        if (wp.violations.size() < 64)
            wp.violations.push_back({what, p, k, c});
    };

    for (int p = 0; p < opts.paths; ++p) {
        RngStream rng(opts.seed, static_cast<std::uint64_t>(p));
        PathGrid path(n, problem.horizon, problem.x0);
        for (int k = 0; k < n; ++k) {
            const double t = path.time(k);
            Eigen::MatrixXd sigma0 = problem.ref_vol(t, path);
            Eigen::MatrixXd a0 = sigma0 * sigma0.transpose();

            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es0(a0);
            double a0_max = es0.eigenvalues().cwiseAbs().maxCoeff();
            bool a0_ok = es0.eigenvalues().minCoeff() > kEigRelTol * std::max(a0_max, 1e-300);
            if (!a0_ok) {
                record("reference covariance singular", p, k, -1);
                structural_failure = true;
            }

            for (int c = 0; c < problem.controls.size(); ++c) {
                const Eigen::VectorXd& u = problem.controls[c];
                Eigen::MatrixXd sigma = problem.vol(t, path, u);
                Eigen::MatrixXd a_u = sigma * sigma.transpose() - a0;
                Eigen::VectorXd b_u = problem.drift(t, path, u);

                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esu(a_u);
                double scale = std::max(esu.eigenvalues().cwiseAbs().maxCoeff(), a0_max);
                if (esu.eigenvalues().minCoeff() < -kEigRelTol * std::max(scale, 1e-300)) {
                    record("excess diffusion not psd", p, k, c);
                    structural_failure = true;
                }

                if (a0_ok) {
                    double second = 1.0 - 0.5 * (a_u * a0.inverse()).trace();
                    if (second < wp.min_second) wp.min_second = second;
                    if (second < -1e-12) record("trace condition violated", p, k, c);
                }

                double mg = quadratic_min(a_u, b_u);
                if (std::isinf(mg)) record("drift outside diffusion range", p, k, c);
                if (mg < wp.m_g) {
                    wp.m_g = mg;
                    wp.argmin_path = p;
                    wp.argmin_step = k;
                    wp.argmin_control = c;
                }
            }

            // Advance the probe path under the reference dynamics.
            Eigen::VectorXd dw(d);
            for (int i = 0; i < d; ++i) dw[i] = std::sqrt(h) * rng.next_normal();
            path.append(path.node(k) + sigma0 * dw);
        }
    }

    if (!std::isfinite(wp.min_second)) wp.min_second = 1.0;
    if (structural_failure || std::isinf(wp.m_g) || wp.min_second < 0) {
        wp.h0 = 0.0;
    } else if (wp.m_g == 0.0) {
        wp.h0 = problem.horizon;
    } else {
        wp.h0 = std::min(problem.horizon, wp.min_second / (-wp.m_g));
    }
    return wp;
}

void apply_mg_override(WellPosedness& wp, double m_g, double horizon) {
    wp.m_g = m_g;
    wp.probe_based = false;
    if (std::isinf(m_g) || wp.min_second < 0) {
        wp.h0 = 0.0;
    } else if (m_g == 0.0) {
        wp.h0 = horizon;
    } else {
        wp.h0 = std::min(horizon, wp.min_second / (-m_g));
    }
}

double step_density(const StepParams& params, const Eigen::VectorXd& x) {
    const int d = static_cast<int>(x.size());
    if (params.a0.rows() != d || params.a_u.rows() != d || params.b_u.size() != d)
        throw ConfigError("step_density: shape mismatch");
    if (!(params.h > 0)) throw ConfigError("step_density: h must be > 0");

    Eigen::LLT<Eigen::MatrixXd> llt(params.a0);
    if (llt.info() != Eigen::Success)
        throw NumericalError("step_density: reference covariance not positive definite");

    Eigen::VectorXd y = llt.solve(x);  // a0^{-1} x
    double quad = x.dot(y) / params.h;
    double det = 1.0;
    for (int i = 0; i < d; ++i) det *= llt.matrixL()(i, i);
    double gauss = std::exp(-0.5 * quad) /
                   (std::pow(2.0 * M_PI * params.h, d / 2.0) * det);

    double trace_term = 0.5 * llt.solve(params.a_u).trace();
    double poly = 1.0 - trace_term + params.b_u.dot(y) +
                  0.5 * y.dot(params.a_u * y) / params.h;
    return gauss * poly;
}

StepMoments step_moments(const StepParams& params) {
    StepMoments m;
    m.mean = params.b_u * params.h;
    m.cov = (params.a0 + params.a_u) * params.h -
            params.b_u * params.b_u.transpose() * params.h * params.h;
    return m;
}

StepSampler::StepSampler(const StepParams& params, int table_size, double span) {
    if (params.a0.rows() != 1)
        throw DimensionError("StepSampler: tabulated inversion is 1-d only");
    if (table_size < 16) throw ConfigError("StepSampler: table too small");

    StepMoments mom = step_moments(params);
    double sd = std::sqrt(std::max(mom.cov(0, 0), 1e-300));
    double lo = mom.mean[0] - span * sd;
    double hi = mom.mean[0] + span * sd;

    grid_.resize(table_size);
    Eigen::VectorXd f(table_size);
    const double dx = (hi - lo) / (table_size - 1);
    Eigen::VectorXd x(1);
    for (int i = 0; i < table_size; ++i) {
        grid_[i] = lo + i * dx;
        x[0] = grid_[i];
        double v = step_density(params, x);
        if (v < 0) {
            clipped_ += -v * dx;
            v = 0;
        }
        f[i] = v;
    }

    cdf_.resize(table_size);
    cdf_[0] = 0.0;
    for (int i = 1; i < table_size; ++i)
        cdf_[i] = cdf_[i - 1] + 0.5 * (f[i - 1] + f[i]) * dx;
    double total = cdf_[table_size - 1];
    if (!(total > 0)) throw NumericalError("StepSampler: density integrates to zero");
    cdf_ /= total;
}

double StepSampler::operator()(double uniform) const {
    uniform = std::clamp(uniform, 0.0, 1.0);
    const auto* begin = cdf_.data();
    const auto* end = cdf_.data() + cdf_.size();
    const auto* it = std::lower_bound(begin, end, uniform);
    if (it == begin) return grid_[0];
    if (it == end) return grid_[grid_.size() - 1];
    int i = static_cast<int>(it - begin);
    double c0 = cdf_[i - 1], c1 = cdf_[i];
    if (c1 <= c0) return grid_[i - 1];
    double w = (uniform - c0) / (c1 - c0);
    return grid_[i - 1] + w * (grid_[i] - grid_[i - 1]);
}

double sample_step(const StepParams& params, RngStream& rng) {
    StepSampler sampler(params);
    return sampler.sample(rng);
}

GaussianWeights gaussian_weights(const Eigen::MatrixXd& sigma0, const Eigen::VectorXd& dw,
                                 double h) {
    const int d = static_cast<int>(dw.size());
    if (sigma0.rows() != d || sigma0.cols() != d)
        throw ConfigError("gaussian_weights: shape mismatch");
    if (!(h > 0)) throw ConfigError("gaussian_weights: h must be > 0");

    Eigen::FullPivLU<Eigen::MatrixXd> lu(sigma0);
    if (!lu.isInvertible())
        throw NumericalError("gaussian_weights: reference volatility singular");
    Eigen::MatrixXd inv = lu.inverse();

    GaussianWeights w;
    w.w_y = 1.0;
    w.w_z = inv.transpose() * dw / h;
    Eigen::MatrixXd m = dw * dw.transpose() - h * Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd g = inv.transpose() * m * inv / (h * h);
    // symmetrize so downstream symmetry checks hold exactly
    w.w_gamma = 0.5 * (g + g.transpose());
    return w;
}

}  // namespace ctrlmc
