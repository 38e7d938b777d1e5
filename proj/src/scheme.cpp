#include "ctrlmc/scheme.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "ctrlmc/errors.hpp"
#include "ctrlmc/parallel.hpp"
#include "ctrlmc/quadrature.hpp"
#include "ctrlmc/rng.hpp"

namespace ctrlmc {

Eigen::VectorXd PathEnsemble::state(int k, int m) const {
    Eigen::VectorXd out(dim_x + dim_s);
    out.head(dim_x) = state_x(k, m);
    if (dim_s > 0) out.tail(dim_s) = state_s(k, m);
    return out;
}

PathGrid PathEnsemble::path(int m, int upto) const {
    PathGrid p(n, horizon, state_x(0, m));
    for (int k = 1; k <= upto; ++k) p.append(state_x(k, m));
    return p;
}

PathEnsemble simulate_reference(const ControlProblem& problem, const MarkovLift& lift, int n,
                                int paths, std::uint64_t seed, int threads) {
    if (n < 1 || paths < 1) throw ConfigError("simulate_reference: need n >= 1, paths >= 1");
    if (lift.n != n) throw ConfigError("simulate_reference: lift built for a different n");

    PathEnsemble ens;
    ens.n = n;
    ens.horizon = problem.horizon;
    ens.dim_x = problem.dim_x;
    ens.dim_s = lift.dim_s;
    ens.paths = paths;
    ens.seed = seed;
    const int d = ens.dim_x, ds = ens.dim_s;
    ens.x.resize(static_cast<std::size_t>(n + 1) * paths * d);
    ens.dw.resize(static_cast<std::size_t>(n) * paths * d);
    if (ds > 0) ens.s.resize(static_cast<std::size_t>(n + 1) * paths * ds);

    const double h = ens.h();
    const double sqrt_h = std::sqrt(h);

    parallel_chunks(static_cast<std::size_t>(paths), 256, threads,
                    [&](std::size_t, std::size_t b, std::size_t e) {
                        Eigen::VectorXd dwv(d), next(d), sv;
                        for (std::size_t m = b; m < e; ++m) {
                            RngStream rng(seed, m);
                            PathGrid path(n, problem.horizon, problem.x0);
                            if (ds > 0) sv = lift.s0;
                            auto put_x = [&](int k, const Eigen::VectorXd& v) {
                                double* dst =
                                    ens.x.data() + (static_cast<std::size_t>(k) * paths + m) * d;
                                Eigen::Map<Eigen::VectorXd>(dst, d) = v;
                            };
                            auto put_s = [&](int k, const Eigen::VectorXd& v) {
                                double* dst =
                                    ens.s.data() + (static_cast<std::size_t>(k) * paths + m) * ds;
                                Eigen::Map<Eigen::VectorXd>(dst, ds) = v;
                            };
                            put_x(0, problem.x0);
                            if (ds > 0) put_s(0, sv);
                            for (int k = 0; k < n; ++k) {
                                Eigen::MatrixXd sigma0 = problem.ref_vol(path.time(k), path);
                                for (int i = 0; i < d; ++i) dwv[i] = sqrt_h * rng.next_normal();
                                next = path.node(k) + sigma0 * dwv;
                                path.append(next);
                                double* dwd =
                                    ens.dw.data() + (static_cast<std::size_t>(k) * paths + m) * d;
                                Eigen::Map<Eigen::VectorXd>(dwd, d) = dwv;
                                put_x(k + 1, next);
                                if (ds > 0) {
                                    sv = lift.update(k + 1, sv, next);
                                    put_s(k + 1, sv);
                                }
                            }
                        }
                    });
    return ens;
}

DriverValue driver_sup(const ControlProblem& problem, const MarkovLift& lift,
                       const DriverInput& in) {
    if (problem.controls.size() < 1) throw ConfigError("driver_sup: empty control grid");
    const int d = static_cast<int>(in.x.size());
    if (in.gamma.rows() != d || in.gamma.cols() != d || in.z.size() != d)
        throw ConfigError("driver_sup: shape mismatch");
    double asym = (in.gamma - in.gamma.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * (1.0 + in.gamma.cwiseAbs().maxCoeff()))
        throw ConfigError("driver_sup: gamma not symmetric");

    Eigen::MatrixXd sigma0 = lift.ref_vol(in.t_index, in.x, in.s);
    Eigen::MatrixXd a0 = sigma0 * sigma0.transpose();

    DriverValue best;
    best.value = -std::numeric_limits<double>::infinity();
    best.argmax = 0;
    for (int c = 0; c < problem.controls.size(); ++c) {
        const Eigen::VectorXd& u = problem.controls[c];
        Eigen::MatrixXd sigma = lift.vol(in.t_index, in.x, in.s, u);
        Eigen::MatrixXd a_u = sigma * sigma.transpose() - a0;
        double val = lift.running_reward(in.t_index, in.x, in.s, u) +
                     0.5 * a_u.cwiseProduct(in.gamma).sum() +
                     lift.drift(in.t_index, in.x, in.s, u).dot(in.z);
        if (!std::isfinite(val)) {
            std::ostringstream os;
            os << "driver_sup: non-finite value at control index " << c;
            throw NumericalError(os.str());
        }
        if (val > best.value) {
            best.value = val;
            best.argmax = c;
        }
    }
    return best;
}

namespace {

// ---------------------------------------------------------------------------
// Quadrature-oracle engine (1-d diffusion, lifted state dimension <= 1).

struct LatticeSurface : ValueSurface {
    int n = 0;
    int dim_s = 0;
    Axis ax;
    Axis as;
    // dim_s == 0: tables are vectors indexed by x node.
    // dim_s == 1: tables are matrices (x node, s node).
    std::vector<Eigen::MatrixXd> y;      // n + 1 entries
    std::vector<Eigen::MatrixXd> z;      // n entries
    std::vector<Eigen::MatrixXd> gamma;  // n entries

    double look(const std::vector<Eigen::MatrixXd>& t, int k, const Eigen::VectorXd& state) const {
        if (dim_s == 0) return interp1(ax, t[k].col(0).data(), state[0]);
        return interp2(ax, as, t[k], state[0], state[1]);
    }

    int steps() const override { return n; }
    double y_at(int k, const Eigen::VectorXd& state) const override { return look(y, k, state); }
    Eigen::VectorXd z_at(int k, const Eigen::VectorXd& state) const override {
        return Eigen::VectorXd::Constant(1, look(z, k, state));
    }
    Eigen::MatrixXd gamma_at(int k, const Eigen::VectorXd& state) const override {
        return Eigen::MatrixXd::Constant(1, 1, look(gamma, k, state));
    }
};

struct QuadPoint {
    double xi;  // increment in units of sigma0 sqrt(h)
    double w;   // expectation weight
};

std::vector<QuadPoint> make_quad(const LatticeOptions& opt) {
    std::vector<QuadPoint> pts;
    if (opt.use_simpson) {
        QuadratureRule rule = simpson(-opt.simpson_span, opt.simpson_span, opt.simpson_points);
        pts.reserve(rule.size());
        for (int i = 0; i < rule.size(); ++i) {
            double t = rule.nodes[i];
            double phi = std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI);
            pts.push_back({t, rule.weights[i] * phi});
        }
    } else {
        QuadratureRule rule = normal_expectation(opt.quad_order);
        pts.reserve(rule.size());
        for (int i = 0; i < rule.size(); ++i) pts.push_back({rule.nodes[i], rule.weights[i]});
    }
    return pts;
}

struct NodeEstimates {
    double ey = 0.0, z = 0.0, gamma = 0.0;
};

NodeEstimates node_quadrature(const MarkovLift& lift, const LatticeSurface& surf,
                              const std::vector<QuadPoint>& quad, int k, double xk, double sk,
                              const Eigen::MatrixXd& y_next, double h) {
    Eigen::VectorXd xv = Eigen::VectorXd::Constant(1, xk);
    Eigen::VectorXd sv =
        surf.dim_s == 0 ? Eigen::VectorXd() : Eigen::VectorXd::Constant(1, sk);
    double sig = lift.ref_vol(k, xv, sv)(0, 0);
    if (!(sig > 0)) throw NumericalError("quadrature oracle: reference vol not positive");
    const double step = sig * std::sqrt(h);

    NodeEstimates est;
    Eigen::VectorXd xn(1), s_next;
    for (const QuadPoint& q : quad) {
        double xq = xk + step * q.xi;
        double yq;
        if (surf.dim_s == 0) {
            yq = interp1(surf.ax, y_next.col(0).data(), xq);
        } else {
            xn[0] = xq;
            s_next = lift.update(k + 1, sv, xn);
            yq = interp2(surf.ax, surf.as, y_next, xq, s_next[0]);
        }
        est.ey += q.w * yq;
        est.z += q.w * yq * q.xi / (sig * std::sqrt(h));
        est.gamma += q.w * yq * (q.xi * q.xi - 1.0) / (sig * sig * h);
    }
    return est;
}

struct OracleOutcome {
    double y0 = 0.0;
    std::shared_ptr<LatticeSurface> surface;
    std::vector<StepDiagnostics> steps;
};

OracleOutcome run_oracle(const ControlProblem& problem, const MarkovLift& lift,
                         const SchemeConfig& config) {
    if (problem.dim_x != 1)
        throw DimensionError("quadrature oracle supports 1-d diffusions only");
    if (lift.dim_s > 1)
        throw DimensionError("quadrature oracle supports lifted state dimension <= 1");

    const int n = config.n;
    const double h = problem.horizon / n;
    const int nu = problem.controls.size();

    auto surf = std::make_shared<LatticeSurface>();
    surf->n = n;
    surf->dim_s = lift.dim_s;

    double hw = config.lattice.x_half_width;
    if (!(hw > 0)) {
        double sig0 = lift.ref_vol(0, problem.x0, lift.s0)(0, 0);
        hw = 8.0 * sig0 * std::sqrt(problem.horizon);
        if (!(hw > 0)) throw ConfigError("quadrature oracle: cannot derive lattice width");
    }
    surf->ax = Axis::centered(problem.x0[0], hw, config.lattice.x_count);

    int s_count = 1;
    if (lift.dim_s == 1) {
        double lo = config.lattice.s_lo, hi = config.lattice.s_hi;
        if (!(hi > lo)) {
            PathEnsemble probe = simulate_reference(problem, lift, n, 64, 0xabcdeull, 1);
            lo = std::numeric_limits<double>::infinity();
            hi = -lo;
            for (int k = 0; k <= n; ++k)
                for (int m = 0; m < probe.paths; ++m) {
                    double v = probe.state_s(k, m)[0];
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            double pad = std::max(0.35 * (hi - lo), 1e-3 * (1.0 + std::abs(hi)));
            lo -= pad;
            hi += pad;
        }
        surf->as = Axis{lo, hi, config.lattice.s_count % 2 == 0 ? config.lattice.s_count + 1
                                                                : config.lattice.s_count};
        s_count = surf->as.count;
    }

    const int nx = surf->ax.count;
    std::vector<QuadPoint> quad = make_quad(config.lattice);

    // Terminal values.
    surf->y.assign(n + 1, Eigen::MatrixXd::Zero(nx, s_count));
    surf->z.assign(n, Eigen::MatrixXd::Zero(nx, s_count));
    surf->gamma.assign(n, Eigen::MatrixXd::Zero(nx, s_count));
    {
        Eigen::MatrixXd& yT = surf->y[n];
        parallel_chunks(static_cast<std::size_t>(nx) * s_count, 64, config.threads,
                        [&](std::size_t, std::size_t b, std::size_t e) {
                            Eigen::VectorXd xv(1), sv(lift.dim_s);
                            for (std::size_t idx = b; idx < e; ++idx) {
                                int i = static_cast<int>(idx) / s_count;
                                int j = static_cast<int>(idx) % s_count;
                                xv[0] = surf->ax.node(i);
                                if (lift.dim_s == 1) sv[0] = surf->as.node(j);
                                yT(i, j) = lift.terminal_reward(xv, sv);
                            }
                        });
        if (!yT.allFinite()) throw NumericalError("quadrature oracle: non-finite terminal values");
    }

    OracleOutcome out;
    out.steps.resize(n);

    for (int k = n - 1; k >= 0; --k) {
        const Eigen::MatrixXd& y_next = surf->y[k + 1];
        Eigen::MatrixXd& yk = surf->y[k];
        Eigen::MatrixXd& zk = surf->z[k];
        Eigen::MatrixXd& gk = surf->gamma[k];

        using Counts = std::vector<long>;
        Counts counts = parallel_reduce<Counts>(
            static_cast<std::size_t>(nx) * s_count, config.threads, Counts(nu, 0),
            [&](Counts& acc, std::size_t b, std::size_t e) {
                DriverInput in;
                in.t_index = k;
                in.x.resize(1);
                in.s.resize(lift.dim_s);
                in.gamma.resize(1, 1);
                in.z.resize(1);
                for (std::size_t idx = b; idx < e; ++idx) {
                    int i = static_cast<int>(idx) / s_count;
                    int j = static_cast<int>(idx) % s_count;
                    double xk = surf->ax.node(i);
                    double sk = lift.dim_s == 1 ? surf->as.node(j) : 0.0;
                    NodeEstimates est =
                        node_quadrature(lift, *surf, quad, k, xk, sk, y_next, h);
                    in.x[0] = xk;
                    if (lift.dim_s == 1) in.s[0] = sk;
                    in.gamma(0, 0) = est.gamma;
                    in.z[0] = est.z;
                    DriverValue dv = driver_sup(problem, lift, in);
                    yk(i, j) = est.ey + h * dv.value;
                    zk(i, j) = est.z;
                    gk(i, j) = est.gamma;
                    ++acc[dv.argmax];
                }
            },
            [](Counts& a, const Counts& b) {
                for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
            },
            64);

        if (!yk.allFinite()) {
            std::ostringstream os;
            os << "quadrature oracle: non-finite values at step " << k;
            throw NumericalError(os.str());
        }
        StepDiagnostics& diag = out.steps[k];
        diag.k = k;
        diag.argmax_count.assign(counts.begin(), counts.end());
    }

    // Root value evaluated directly at (x0, s0), independent of lattice node
    // placement in s.
    {
        double s0 = lift.dim_s == 1 ? lift.s0[0] : 0.0;
        NodeEstimates est =
            node_quadrature(lift, *surf, quad, 0, problem.x0[0], s0, surf->y[1], h);
        DriverInput in;
        in.t_index = 0;
        in.x = problem.x0;
        in.s = lift.s0;
        in.gamma = Eigen::MatrixXd::Constant(1, 1, est.gamma);
        in.z = Eigen::VectorXd::Constant(1, est.z);
        DriverValue dv = driver_sup(problem, lift, in);
        out.y0 = est.ey + h * dv.value;
    }

    out.surface = surf;
    return out;
}

// ---------------------------------------------------------------------------
// Regression engines.

struct RegressionSurface : ValueSurface {
    int n = 0;
    int d = 1;
    // Step 0 constants.
    double y0 = 0.0;
    Eigen::VectorXd z0;
    Eigen::MatrixXd gamma0;
    // Steps 1..n-1.
    std::vector<std::shared_ptr<BasisEval>> basis;
    std::vector<Eigen::VectorXd> alpha_y;
    std::vector<std::vector<Eigen::VectorXd>> alpha_z;
    std::vector<std::vector<Eigen::VectorXd>> alpha_gamma;  // upper triangle
    std::function<double(const Eigen::VectorXd&)> terminal;

    int steps() const override { return n; }

    double y_at(int k, const Eigen::VectorXd& state) const override {
        if (k == 0) return y0;
        if (k == n) return terminal(state);
        return basis[k]->value(state, alpha_y[k]);
    }
    Eigen::VectorXd z_at(int k, const Eigen::VectorXd& state) const override {
        if (k == 0) return z0;
        Eigen::VectorXd out(d);
        for (int c = 0; c < d; ++c) out[c] = basis[k]->value(state, alpha_z[k][c]);
        return out;
    }
    Eigen::MatrixXd gamma_at(int k, const Eigen::VectorXd& state) const override {
        if (k == 0) return gamma0;
        Eigen::MatrixXd out(d, d);
        int idx = 0;
        for (int a = 0; a < d; ++a)
            for (int c = a; c < d; ++c) {
                double v = basis[k]->value(state, alpha_gamma[k][idx]);
                out(a, c) = v;
                out(c, a) = v;
                ++idx;
            }
        return out;
    }
};

struct RegressOutcome {
    double y0 = 0.0;
    std::vector<double> step0_values;
    std::shared_ptr<RegressionSurface> surface;
    std::vector<StepDiagnostics> steps;
    int trunc_hits = 0;
};

// Step-0 closure shared by both schemes: all paths carry the same state, so
// the conditional estimates are plain means of the weighted targets.
void finish_step0(const ControlProblem& problem, const MarkovLift& lift, const PathEnsemble& ens,
                  const Eigen::VectorXd& base, RegressOutcome& out, int threads) {
    const int m = ens.paths, d = ens.dim_x;
    const double h = ens.h();

    struct Acc {
        Eigen::VectorXd z;
        Eigen::MatrixXd g;
    };
    Acc init{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d)};
    Acc sums = parallel_reduce<Acc>(
        static_cast<std::size_t>(m), threads, init,
        [&](Acc& acc, std::size_t b, std::size_t e) {
            Eigen::VectorXd xv(d), sv(ens.dim_s);
            for (std::size_t i = b; i < e; ++i) {
                int mi = static_cast<int>(i);
                xv = ens.state_x(0, mi);
                sv = ens.state_s(0, mi);
                Eigen::MatrixXd sigma0 = lift.ref_vol(0, xv, sv);
                GaussianWeights gw = gaussian_weights(sigma0, ens.incr(0, mi), h);
                acc.z += base[i] * gw.w_z;
                acc.g += base[i] * gw.w_gamma;
            }
        },
        [](Acc& a, const Acc& b) {
            a.z += b.z;
            a.g += b.g;
        });

    DriverInput in;
    in.t_index = 0;
    in.x = problem.x0;
    in.s = lift.s0;
    in.z = sums.z / m;
    in.gamma = sums.g / m;
    in.gamma = 0.5 * (in.gamma + in.gamma.transpose()).eval();
    DriverValue dv = driver_sup(problem, lift, in);

    out.step0_values.resize(m);
    double total = parallel_reduce<double>(
        static_cast<std::size_t>(m), threads, 0.0,
        [&](double& acc, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                double v = base[i] + h * dv.value;
                out.step0_values[i] = v;
                acc += v;
            }
        },
        [](double& a, const double& b) { a += b; });
    out.y0 = total / m;

    out.surface->y0 = out.y0;
    out.surface->z0 = in.z;
    out.surface->gamma0 = in.gamma;

    StepDiagnostics diag;
    diag.k = 0;
    diag.argmax_count.assign(problem.controls.size(), 0);
    diag.argmax_count[dv.argmax] = m;
    out.steps[0] = diag;
}

RegressOutcome run_regression(const ControlProblem& problem, const MarkovLift& lift,
                              const SchemeConfig& config) {
    const int n = config.n;
    const int m = config.paths;
    const double h = problem.horizon / n;
    const int d = problem.dim_x;
    const int tri = d * (d + 1) / 2;

    if (m < config.basis.size(d + lift.dim_s))
        throw ConfigError("run_regression: fewer paths than basis functions");

    PathEnsemble ens = simulate_reference(problem, lift, n, m, config.seed, config.threads);

    // Terminal rewards and the truncation scale.
    Eigen::VectorXd values(m);
    double max_abs = parallel_reduce<double>(
        static_cast<std::size_t>(m), config.threads, 0.0,
        [&](double& acc, std::size_t b, std::size_t e) {
            Eigen::VectorXd xv(d), sv(ens.dim_s);
            for (std::size_t i = b; i < e; ++i) {
                int mi = static_cast<int>(i);
                xv = ens.state_x(n, mi);
                sv = ens.state_s(n, mi);
                values[i] = lift.terminal_reward(xv, sv);
                acc = std::max(acc, std::abs(values[i]));
            }
        },
        [](double& a, const double& b) { a = std::max(a, b); });
    if (!values.allFinite()) throw NumericalError("run_regression: non-finite terminal rewards");

    ProjectionOptions opts;
    opts.truncate = config.truncate;
    opts.growth = config.trunc_growth;
    opts.y_bound = max_abs > 0 ? config.trunc_growth * max_abs
                               : std::numeric_limits<double>::infinity();
    opts.raw_driver_inputs = config.raw_driver_inputs;
    opts.use_qr = config.use_qr;
    opts.threads = config.threads;

    RegressOutcome out;
    out.surface = std::make_shared<RegressionSurface>();
    out.surface->n = n;
    out.surface->d = d;
    out.surface->basis.resize(n);
    out.surface->alpha_y.resize(n);
    out.surface->alpha_z.resize(n);
    out.surface->alpha_gamma.resize(n);
    out.surface->terminal = [terminal = lift.terminal_reward, d](const Eigen::VectorXd& state) {
        return terminal(state.head(d), state.tail(state.size() - d));
    };
    out.steps.resize(n);

    const bool cumulative = config.engine == Engine::Regress2;

    for (int k = n - 1; k >= 1; --k) {
        ProjectionStep ps =
            cumulative
                ? project_step_terminal_sum(problem, lift, ens, k, values, config.basis, opts)
                : project_step_one_step(problem, lift, ens, k, values, config.basis, opts);

        if (cumulative) {
            values += h * ps.g_values;  // extend the driver sum down to step k
        } else {
            values = ps.y_values;
        }

        StepDiagnostics& diag = out.steps[k];
        diag.k = k;
        diag.argmax_count = ps.argmax_count;
        diag.resid_y = ps.fit_y.residual_rms;
        diag.cond_y = ps.fit_y.cond;
        diag.trunc_hits = ps.trunc_hits;
        diag.rank_warnings = ps.fit_y.rank_warning ? 1 : 0;
        out.trunc_hits += ps.trunc_hits;

        out.surface->basis[k] = ps.basis;
        out.surface->alpha_y[k] = ps.fit_y.coeff;
        out.surface->alpha_z[k].resize(d);
        for (int c = 0; c < d; ++c) out.surface->alpha_z[k][c] = ps.fit_z[c].coeff;
        out.surface->alpha_gamma[k].resize(tri);
        for (int idx = 0; idx < tri; ++idx)
            out.surface->alpha_gamma[k][idx] = ps.fit_gamma[idx].coeff;
    }

    finish_step0(problem, lift, ens, values, out, config.threads);
    return out;
}

}  // namespace

SchemeResult backward_induction(const ControlProblem& problem, const MarkovLift& lift,
                                const SchemeConfig& config, const WellPosedness* wp_in) {
    if (config.n < 1) throw ConfigError("backward_induction: n must be >= 1");
    if (lift.n != config.n)
        throw ConfigError("backward_induction: lift built for a different n");

    SchemeResult res;
    res.n = config.n;
    res.h = problem.horizon / config.n;
    res.engine = config.engine;
    res.seed = config.seed;

    res.wp = wp_in ? *wp_in
                   : well_posedness(problem, config.n, {config.wp_probe_paths, 0x77e11ull});
    if (!res.wp.admissible(res.h)) {
        if (!config.allow_h_override) {
            std::ostringstream os;
            os << "step size " << res.h << " exceeds admissible bound " << res.wp.h0;
            if (res.wp.violation_count > 0)
                os << " (" << res.wp.violation_count << " assumption violations, first: "
                   << res.wp.violations.front().what << ")";
            throw StepSizeError(os.str(), res.h, res.wp.h0);
        }
        res.h_overridden = true;
    }

    if (config.engine == Engine::Oracle) {
        OracleOutcome oc = run_oracle(problem, lift, config);
        res.y0 = oc.y0;
        res.surface = oc.surface;
        res.steps = std::move(oc.steps);
        res.step0_values = {oc.y0};
    } else {
        RegressOutcome rc = run_regression(problem, lift, config);
        res.y0 = rc.y0;
        res.surface = rc.surface;
        res.steps = std::move(rc.steps);
        res.step0_values = std::move(rc.step0_values);
        res.trunc_hits_total = rc.trunc_hits;
    }

    if (!std::isfinite(res.y0)) throw NumericalError("backward_induction: non-finite root value");
    return res;
}

}  // namespace ctrlmc
