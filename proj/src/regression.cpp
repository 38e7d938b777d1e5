#include "ctrlmc/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctrlmc/errors.hpp"
#include "ctrlmc/kernel.hpp"
#include "ctrlmc/parallel.hpp"
#include "ctrlmc/scheme.hpp"

namespace ctrlmc {

namespace {

long long binomial(int n, int k) {
    long long out = 1;
    for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
    return out;
}

void enumerate_powers(int dims, int degree, std::vector<std::vector<int>>& out) {
    // Graded order: total degree 0, 1, ..., lexicographic within a grade.
    std::vector<int> idx(dims, 0);
    for (int total = 0; total <= degree; ++total) {
        std::fill(idx.begin(), idx.end(), 0);
        for (;;) {
            int sum = 0;
            for (int v : idx) sum += v;
            if (sum == total) out.push_back(idx);
            int pos = dims - 1;
            while (pos >= 0) {
                if (idx[pos] < total) {
                    ++idx[pos];
                    break;
                }
                idx[pos] = 0;
                --pos;
            }
            if (pos < 0) break;
        }
    }
}

}  // namespace

int BasisSpec::size(int dims) const {
    if (family == Family::Polynomial)
        return static_cast<int>(binomial(dims + degree, degree));
    return bins + 1;
}

BasisEval::BasisEval(const BasisSpec& spec, const Eigen::MatrixXd& states) : spec_(spec) {
    dims_ = static_cast<int>(states.cols());
    const Eigen::Index m = states.rows();
    if (dims_ < 1 || m < 1) throw ConfigError("BasisEval: empty state sample");

    shift_ = states.colwise().mean();
    scale_.resize(dims_);
    for (int j = 0; j < dims_; ++j) {
        double var = (states.col(j).array() - shift_[j]).square().sum() / m;
        double sd = std::sqrt(var);
        scale_[j] = sd > 1e-12 * (1.0 + std::abs(shift_[j])) ? sd : 1.0;
    }

    if (spec.family == BasisSpec::Family::Polynomial) {
        if (spec.degree < 0) throw ConfigError("BasisEval: negative degree");
        enumerate_powers(dims_, spec.degree, powers_);
        size_ = static_cast<int>(powers_.size());
        return;
    }

    if (dims_ != 1)
        throw DimensionError("BasisEval: piecewise-linear basis requires 1-d states");
    if (spec.bins < 1) throw ConfigError("BasisEval: bins must be >= 1");
    std::vector<double> sorted(states.col(0).data(), states.col(0).data() + m);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> knots;
    for (int i = 0; i <= spec.bins; ++i) {
        std::size_t pos = static_cast<std::size_t>(
            std::llround(static_cast<double>(i) * (m - 1) / spec.bins));
        double k = sorted[pos];
        if (knots.empty() || k > knots.back()) knots.push_back(k);
    }
    if (knots.size() < 2) {
        // Degenerate sample: fall back to a trivial two-knot span.
        double c = knots.empty() ? 0.0 : knots[0];
        knots = {c - 1.0, c + 1.0};
    }
    knots_ = Eigen::Map<Eigen::VectorXd>(knots.data(), static_cast<Eigen::Index>(knots.size()));
    size_ = static_cast<int>(knots_.size());
}

void BasisEval::row(const double* state, double* out) const {
    if (spec_.family == BasisSpec::Family::Polynomial) {
        // Precompute powers of each standardized coordinate.
        double pw[8][8];  // dims x degree, small by construction
        const int deg = spec_.degree;
        for (int j = 0; j < dims_; ++j) {
            double z = (state[j] - shift_[j]) / scale_[j];
            pw[j][0] = 1.0;
            for (int p = 1; p <= deg; ++p) pw[j][p] = pw[j][p - 1] * z;
        }
        for (int i = 0; i < size_; ++i) {
            double v = 1.0;
            for (int j = 0; j < dims_; ++j) v *= pw[j][powers_[i][j]];
            out[i] = v;
        }
        return;
    }

    const double x = state[0];
    const int nk = size_;
    std::fill(out, out + nk, 0.0);
    if (x <= knots_[0]) {
        out[0] = 1.0;
        return;
    }
    if (x >= knots_[nk - 1]) {
        out[nk - 1] = 1.0;
        return;
    }
    const double* kb = knots_.data();
    int cell = static_cast<int>(std::upper_bound(kb, kb + nk, x) - kb) - 1;
    cell = std::clamp(cell, 0, nk - 2);
    double t = (x - knots_[cell]) / (knots_[cell + 1] - knots_[cell]);
    out[cell] = 1.0 - t;
    out[cell + 1] = t;
}

Eigen::RowVectorXd BasisEval::row(const Eigen::VectorXd& state) const {
    if (state.size() != dims_) throw ConfigError("BasisEval::row: dimension mismatch");
    Eigen::RowVectorXd out(size_);
    row(state.data(), out.data());
    return out;
}

Eigen::MatrixXd BasisEval::design(const Eigen::MatrixXd& states) const {
    if (states.cols() != dims_) throw ConfigError("BasisEval::design: dimension mismatch");
    Eigen::MatrixXd out(states.rows(), size_);
    Eigen::VectorXd st(dims_);
    Eigen::RowVectorXd r(size_);
    for (Eigen::Index i = 0; i < states.rows(); ++i) {
        st = states.row(i);
        row(st.data(), r.data());
        out.row(i) = r;
    }
    return out;
}

double BasisEval::value(const Eigen::VectorXd& state, const Eigen::VectorXd& coeff) const {
    if (coeff.size() != size_) throw ConfigError("BasisEval::value: coefficient size mismatch");
    return row(state).dot(coeff);
}

StepFitter::StepFitter(const BasisSpec& spec, const Eigen::MatrixXd& states, bool use_qr,
                       int threads)
    : basis_(spec, states), use_qr_(use_qr), threads_(threads) {
    const Eigen::Index m = states.rows();
    const int I = basis_.size();
    if (m < I) throw ConfigError("StepFitter: fewer samples than basis functions");

    design_.resize(m, I);
    parallel_chunks(static_cast<std::size_t>(m), kDefaultChunk, threads,
                    [&](std::size_t, std::size_t b, std::size_t e) {
                        Eigen::VectorXd st(basis_.dims());
                        for (std::size_t i = b; i < e; ++i) {
                            st = states.row(static_cast<Eigen::Index>(i));
                            basis_.row(st.data(), design_.row(static_cast<Eigen::Index>(i)).data());
                        }
                    });

    if (use_qr_) {
        qr_.compute(design_);
        rank_warning_ = qr_.rank() < I;
        Eigen::VectorXd diag = qr_.matrixR().diagonal().cwiseAbs();
        double dmin = diag.minCoeff(), dmax = diag.maxCoeff();
        cond_ = dmin > 0 ? dmax / dmin : std::numeric_limits<double>::infinity();
        return;
    }

    Eigen::MatrixXd gram = design_.transpose() * design_;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    double lmin = es.eigenvalues().minCoeff();
    double lmax = es.eigenvalues().maxCoeff();
    cond_ = lmin > 0 ? lmax / lmin : std::numeric_limits<double>::infinity();
    rank_warning_ = lmin <= 1e-12 * std::max(lmax, 1e-300);
    if (!(cond_ < 1e12)) {
        double lambda = 1e-10 * gram.trace() / I;
        gram.diagonal().array() += lambda;
        ridge_used_ = true;
    }
    gram_.compute(gram);
    if (gram_.info() != Eigen::Success)
        throw NumericalError("StepFitter: Gram factorization failed");
}

FitResult StepFitter::fit(const Eigen::VectorXd& targets) const {
    if (targets.size() != design_.rows())
        throw ConfigError("StepFitter::fit: target length mismatch");
    if (!targets.allFinite()) throw NumericalError("StepFitter::fit: non-finite targets");

    FitResult out;
    out.coeff = use_qr_ ? Eigen::VectorXd(qr_.solve(targets))
                        : Eigen::VectorXd(gram_.solve(design_.transpose() * targets));
    const double m = static_cast<double>(targets.size());
    Eigen::VectorXd resid = design_ * out.coeff - targets;
    out.residual_rms = std::sqrt(resid.squaredNorm() / m);
    double mean = targets.mean();
    out.target_sd = std::sqrt((targets.array() - mean).square().sum() / m);
    out.cond = cond_;
    out.ridge_used = ridge_used_;
    out.rank_warning = rank_warning_;
    if (!out.coeff.allFinite()) throw NumericalError("StepFitter::fit: non-finite coefficients");
    return out;
}

FitResult fit_step(const Eigen::MatrixXd& states, const Eigen::VectorXd& targets,
                   const BasisSpec& spec, bool use_qr) {
    StepFitter fitter(spec, states, use_qr);
    return fitter.fit(targets);
}

int truncate_targets(Eigen::Ref<Eigen::VectorXd> targets, double bound) {
    if (!(bound > 0) || !std::isfinite(bound)) return 0;
    int hits = 0;
    for (Eigen::Index i = 0; i < targets.size(); ++i) {
        if (targets[i] > bound) {
            targets[i] = bound;
            ++hits;
        } else if (targets[i] < -bound) {
            targets[i] = -bound;
            ++hits;
        }
    }
    return hits;
}

namespace {

inline int tri_index(int i, int j, int d) {
    // upper triangle, row-major: (0,0),(0,1),..,(0,d-1),(1,1),...
    return i * d - i * (i - 1) / 2 + (j - i);
}

struct StepWork {
    Eigen::MatrixXd states;  // M x (d + ds)
    Eigen::MatrixXd wz;      // M x d
    Eigen::MatrixXd wg;      // M x tri
};

StepWork assemble_step(const MarkovLift& lift, const PathEnsemble& ens, int k, int threads) {
    const int m = ens.paths, d = ens.dim_x, ds = ens.dim_s;
    const int tri = d * (d + 1) / 2;
    const double h = ens.h();
    StepWork w;
    w.states.resize(m, d + ds);
    w.wz.resize(m, d);
    w.wg.resize(m, tri);
    parallel_chunks(static_cast<std::size_t>(m), kDefaultChunk, threads,
                    [&](std::size_t, std::size_t b, std::size_t e) {
                        Eigen::VectorXd xv(d), sv(ds);
                        for (std::size_t i = b; i < e; ++i) {
                            int mi = static_cast<int>(i);
                            xv = ens.state_x(k, mi);
                            sv = ens.state_s(k, mi);
                            w.states.row(i).head(d) = xv;
                            if (ds > 0) w.states.row(i).tail(ds) = sv;
                            Eigen::MatrixXd sigma0 = lift.ref_vol(k, xv, sv);
                            GaussianWeights gw = gaussian_weights(sigma0, ens.incr(k, mi), h);
                            w.wz.row(i) = gw.w_z;
                            for (int a = 0; a < d; ++a)
                                for (int c = a; c < d; ++c)
                                    w.wg(i, tri_index(a, c, d)) = gw.w_gamma(a, c);
                        }
                    });
    return w;
}

double column_rms(const Eigen::VectorXd& v) {
    return std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
}

// Shared tail of both projection schemes: fit the weighted targets, evaluate
// the driver along the ensemble, fit the value targets.
ProjectionStep project_common(const ControlProblem& problem, const MarkovLift& lift,
                              const PathEnsemble& ens, int k, const Eigen::VectorXd& base_targets,
                              const Eigen::VectorXd& value_base, const BasisSpec& spec,
                              const ProjectionOptions& opts) {
    const int m = ens.paths, d = ens.dim_x;
    const int tri = d * (d + 1) / 2;
    const double h = ens.h();

    StepWork work = assemble_step(lift, ens, k, opts.threads);
    StepFitter fitter(spec, work.states, opts.use_qr, opts.threads);

    ProjectionStep out;
    out.basis = std::make_shared<BasisEval>(fitter.basis());
    out.fit_z.resize(d);
    out.fit_gamma.resize(tri);

    Eigen::MatrixXd zhat(m, d), ghat(m, tri);
    for (int c = 0; c < d; ++c) {
        Eigen::VectorXd t = base_targets.cwiseProduct(work.wz.col(c));
        if (opts.truncate)
            out.trunc_hits += truncate_targets(t, opts.y_bound * column_rms(work.wz.col(c)));
        out.fit_z[c] = fitter.fit(t);
        zhat.col(c) = opts.raw_driver_inputs ? t : Eigen::VectorXd(fitter.design() * out.fit_z[c].coeff);
    }
    for (int idx = 0; idx < tri; ++idx) {
        Eigen::VectorXd t = base_targets.cwiseProduct(work.wg.col(idx));
        if (opts.truncate)
            out.trunc_hits += truncate_targets(t, opts.y_bound * column_rms(work.wg.col(idx)));
        out.fit_gamma[idx] = fitter.fit(t);
        ghat.col(idx) = opts.raw_driver_inputs ? t : Eigen::VectorXd(fitter.design() * out.fit_gamma[idx].coeff);
    }

    out.g_values.resize(m);
    const int nu = problem.controls.size();
    using Counts = std::vector<long>;
    Counts counts = parallel_reduce<Counts>(
        static_cast<std::size_t>(m), opts.threads, Counts(nu, 0),
        [&](Counts& acc, std::size_t b, std::size_t e) {
            DriverInput in;
            in.t_index = k;
            in.x.resize(d);
            in.s.resize(ens.dim_s);
            in.gamma.resize(d, d);
            in.z.resize(d);
            for (std::size_t i = b; i < e; ++i) {
                int mi = static_cast<int>(i);
                in.x = ens.state_x(k, mi);
                in.s = ens.state_s(k, mi);
                in.z = zhat.row(i);
                for (int a = 0; a < d; ++a)
                    for (int c = a; c < d; ++c) {
                        double v = ghat(i, tri_index(a, c, d));
                        in.gamma(a, c) = v;
                        in.gamma(c, a) = v;
                    }
                DriverValue dv = driver_sup(problem, lift, in);
                out.g_values[i] = dv.value;
                ++acc[dv.argmax];
            }
        },
        [](Counts& a, const Counts& b) {
            for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
        });
    out.argmax_count.assign(counts.begin(), counts.end());

    Eigen::VectorXd yt = value_base + h * out.g_values;
    if (opts.truncate) out.trunc_hits += truncate_targets(yt, opts.y_bound);
    out.fit_y = fitter.fit(yt);
    out.y_targets = yt;
    out.y_values = fitter.design() * out.fit_y.coeff;
    return out;
}

}  // namespace

ProjectionStep project_step_one_step(const ControlProblem& problem, const MarkovLift& lift,
                                     const PathEnsemble& ens, int k,
                                     const Eigen::VectorXd& y_next, const BasisSpec& spec,
                                     const ProjectionOptions& opts) {
    return project_common(problem, lift, ens, k, y_next, y_next, spec, opts);
}

ProjectionStep project_step_terminal_sum(const ControlProblem& problem, const MarkovLift& lift,
                                         const PathEnsemble& ens, int k,
                                         const Eigen::VectorXd& tail, const BasisSpec& spec,
                                         const ProjectionOptions& opts) {
    return project_common(problem, lift, ens, k, tail, tail, spec, opts);
}

}  // namespace ctrlmc
