#include "ctrlmc/semimart.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <sstream>

#include "ctrlmc/errors.hpp"
#include "ctrlmc/kernel.hpp"
#include "ctrlmc/parallel.hpp"
#include "ctrlmc/quadrature.hpp"
#include "ctrlmc/rng.hpp"

namespace ctrlmc {

namespace {

std::array<std::uint64_t, 4> params_key(const StepParams& p) {
    std::array<std::uint64_t, 4> key{};
    auto bits = [](double v) {
        std::uint64_t u;
        std::memcpy(&u, &v, sizeof(u));
        return u;
    };
    key[0] = bits(p.a0(0, 0));
    key[1] = bits(p.a_u(0, 0));
    key[2] = bits(p.b_u(0));
    key[3] = bits(p.h);
    return key;
}

// One sampler per distinct parameter tuple; the cache is per worker chunk so
// no synchronization is needed and results stay deterministic.
using SamplerCache = std::map<std::array<std::uint64_t, 4>, std::shared_ptr<const StepSampler>>;

const StepSampler& cached_sampler(SamplerCache& cache, const StepParams& p) {
    auto key = params_key(p);
    auto it = cache.find(key);
    if (it == cache.end())
        it = cache.emplace(key, std::make_shared<const StepSampler>(p)).first;
    return *it->second;
}

}  // namespace

ControlledStats simulate_controlled(const ControlProblem& problem, const Strategy& strategy,
                                    int n, int paths, std::uint64_t seed, int threads) {
    if (problem.dim_x != 1)
        throw DimensionError("simulate_controlled: inverse-CDF sampling is 1-d only");
    if (n < 1 || paths < 1) throw ConfigError("simulate_controlled: need n >= 1, paths >= 1");
    if (!strategy.rule) throw ConfigError("simulate_controlled: empty strategy");

    const double h = problem.horizon / n;
    ControlledStats stats;
    stats.paths = paths;
    stats.rewards.resize(paths);

    double clipped = parallel_reduce<double>(
        static_cast<std::size_t>(paths), threads, 0.0,
        [&](double& worst, std::size_t b, std::size_t e) {
            SamplerCache cache;
            Eigen::VectorXd next(1);
            for (std::size_t m = b; m < e; ++m) {
                RngStream rng(seed, m);
                PathGrid path(n, problem.horizon, problem.x0);
                double reward = 0.0;
                for (int k = 0; k < n; ++k) {
                    const double t = path.time(k);
                    int ci = strategy.rule(k, path);
                    if (ci < 0 || ci >= problem.controls.size())
                        throw ConfigError("simulate_controlled: strategy index out of range");
                    const Eigen::VectorXd& u = problem.controls[ci];

                    StepParams p;
                    Eigen::MatrixXd sigma0 = problem.ref_vol(t, path);
                    Eigen::MatrixXd sigma = problem.vol(t, path, u);
                    p.a0 = sigma0 * sigma0.transpose();
                    p.a_u = sigma * sigma.transpose() - p.a0;
                    p.b_u = problem.drift(t, path, u);
                    p.h = h;

                    const StepSampler& sampler = cached_sampler(cache, p);
                    worst = std::max(worst, sampler.clipped_mass());
                    reward += h * problem.running_reward(t, path, u);
                    next[0] = path.node(k)[0] + sampler(rng.next_uniform());
                    path.append(next);
                }
                reward += problem.terminal_reward(path);
                stats.rewards[m] = reward;
            }
        },
        [](double& a, const double& b) { a = std::max(a, b); });

    stats.clipped_mass_max = clipped;
    double mean = 0.0;
    for (double r : stats.rewards) mean += r;
    mean /= paths;
    double var = 0.0;
    for (double r : stats.rewards) var += (r - mean) * (r - mean);
    var /= std::max(1, paths - 1);
    stats.mean = mean;
    stats.std_error = std::sqrt(var / paths);
    return stats;
}

double brute_force_value(const ControlProblem& problem, int n, const Axis& axis,
                         const BruteForceOptions& opts, LatticePlan* plan) {
    if (problem.dim_x != 1) throw DimensionError("brute_force_value: 1-d only");
    if (n < 1 || n > opts.max_n) throw ConfigError("brute_force_value: n outside fixture limits");
    if (axis.count > opts.max_nodes)
        throw ConfigError("brute_force_value: lattice larger than fixture limit");
    if (problem.controls.size() > opts.max_controls)
        throw ConfigError("brute_force_value: control grid larger than fixture limit");

    const double h = problem.horizon / n;
    const int nx = axis.count;
    const int nu = problem.controls.size();

    LatticePlan local;
    LatticePlan& out = plan ? *plan : local;
    out.axis = axis;
    out.choice.assign(n, std::vector<int>(nx, 0));
    out.value.assign(n + 1, Eigen::VectorXd::Zero(nx));

    // Terminal values on the lattice.
    for (int i = 0; i < nx; ++i) {
        PathGrid path = constant_path(n, problem.horizon, Eigen::VectorXd::Constant(1, axis.node(i)), n);
        out.value[n][i] = problem.terminal_reward(path);
    }

    QuadratureRule gh;
    if (!opts.use_simpson) gh = normal_expectation(opts.quad_order);

    // Expected next-step value at state x under control u: direct integral of
    // the interpolated value table against the one-step transition density.
    auto expect_next = [&](int k, double x, const Eigen::VectorXd& u,
                           const Eigen::VectorXd& v_next) {
        PathGrid path =
            constant_path(n, problem.horizon, Eigen::VectorXd::Constant(1, x), k);
        const double t = path.time(k);
        StepParams p;
        Eigen::MatrixXd sigma0 = problem.ref_vol(t, path);
        Eigen::MatrixXd sigma = problem.vol(t, path, u);
        p.a0 = sigma0 * sigma0.transpose();
        p.a_u = sigma * sigma.transpose() - p.a0;
        p.b_u = problem.drift(t, path, u);
        p.h = h;

        double acc = 0.0;
        Eigen::VectorXd r(1);
        if (opts.use_simpson) {
            StepMoments mom = step_moments(p);
            double sd = std::sqrt(std::max(mom.cov(0, 0), 1e-300));
            QuadratureRule rule = simpson(mom.mean[0] - opts.simpson_span * sd,
                                          mom.mean[0] + opts.simpson_span * sd,
                                          opts.simpson_points);
            for (int q = 0; q < rule.size(); ++q) {
                r[0] = rule.nodes[q];
                double y = interp1(axis, v_next.data(), x + r[0]);
                acc += rule.weights[q] * y * step_density(p, r);
            }
        } else {
            // Importance form: nodes of the reference Gaussian, density ratio
            // f_h / gaussian evaluated explicitly.
            double sd0 = std::sqrt(p.a0(0, 0) * h);
            for (int q = 0; q < gh.size(); ++q) {
                double rq = sd0 * gh.nodes[q];
                r[0] = rq;
                double y = interp1(axis, v_next.data(), x + rq);
                double gauss = std::exp(-0.5 * gh.nodes[q] * gh.nodes[q]) /
                               (std::sqrt(2.0 * M_PI) * sd0);
                acc += gh.weights[q] * y * step_density(p, r) / gauss;
            }
        }
        double run = problem.running_reward(t, path, u);
        return acc + h * run;
    };

    for (int k = n - 1; k >= 1; --k) {
        for (int i = 0; i < nx; ++i) {
            double best = -std::numeric_limits<double>::infinity();
            int best_u = 0;
            for (int c = 0; c < nu; ++c) {
                double v = expect_next(k, axis.node(i), problem.controls[c], out.value[k + 1]);
                if (v > best) {
                    best = v;
                    best_u = c;
                }
            }
            out.value[k][i] = best;
            out.choice[k][i] = best_u;
        }
    }

    // Root value at the exact start point.
    {
        double best = -std::numeric_limits<double>::infinity();
        int best_u = 0;
        for (int c = 0; c < nu; ++c) {
            double v = expect_next(0, problem.x0[0], problem.controls[c], out.value[1]);
            if (v > best) {
                best = v;
                best_u = c;
            }
        }
        out.value[0].setConstant(best);
        std::fill(out.choice[0].begin(), out.choice[0].end(), best_u);
        if (!std::isfinite(best)) throw NumericalError("brute_force_value: non-finite value");
        return best;
    }
}

Strategy extract_strategy(const ControlProblem& problem, const MarkovLift& lift,
                          const SchemeResult& result) {
    if (!result.surface)
        throw StrategyUnavailable("extract_strategy: result carries no value surface");
    if (result.surface->steps() != lift.n)
        throw StrategyUnavailable("extract_strategy: surface built for a different grid");

    std::shared_ptr<const ValueSurface> surface = result.surface;
    auto rule = [surface, problem, lift](int k, const PathGrid& path) {
        Eigen::VectorXd s = lift.s0;
        for (int j = 1; j <= k; ++j) s = lift.update(j, s, path.node(j));
        Eigen::VectorXd state(path.dim() + s.size());
        state.head(path.dim()) = path.node(k);
        state.tail(s.size()) = s;

        DriverInput in;
        in.t_index = k;
        in.x = path.node(k);
        in.s = s;
        in.z = surface->z_at(k, state);
        in.gamma = surface->gamma_at(k, state);
        return driver_sup(problem, lift, in).argmax;
    };
    return Strategy{rule};
}

}  // namespace ctrlmc
