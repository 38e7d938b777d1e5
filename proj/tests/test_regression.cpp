#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "ctrlmc/model.hpp"
#include "ctrlmc/problems.hpp"
#include "ctrlmc/regression.hpp"
#include "ctrlmc/report.hpp"
#include "ctrlmc/rng.hpp"
#include "ctrlmc/scheme.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ctrlmc;

namespace {

Eigen::MatrixXd random_states(int m, RngStream& rng, double span = 2.0) {
    Eigen::MatrixXd s(m, 1);
    for (int i = 0; i < m; ++i) s(i, 0) = span * (2.0 * rng.next_uniform() - 1.0);
    return s;
}

double fitted_at(const Eigen::MatrixXd& states, const Eigen::VectorXd& targets,
                 const BasisSpec& spec, double probe) {
    FitResult fr = fit_step(states, targets, spec);
    BasisEval be(spec, states);
    return be.value(Eigen::VectorXd::Constant(1, probe), fr.coeff);
}

// Bootstrap sd of the fitted value at `probe` under resampled (state, target)
// pairs; the basis is rebuilt per resample, as a refit would.
double boot_sd_at(const Eigen::MatrixXd& states, const Eigen::VectorXd& targets,
                  const BasisSpec& spec, double probe, int reps, std::uint64_t seed) {
    const int m = static_cast<int>(states.rows());
    RngStream rng(seed, 17);
    Eigen::MatrixXd rs(m, states.cols());
    Eigen::VectorXd rt(m);
    std::vector<double> vals(reps);
    for (int b = 0; b < reps; ++b) {
        for (int i = 0; i < m; ++i) {
            const int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(m));
            rs.row(i) = states.row(j);
            rt[i] = targets[j];
        }
        vals[b] = fitted_at(rs, rt, spec, probe);
    }
    return std::sqrt(testutil::mean_var(vals).var);
}

}  // namespace

TEST_SUITE("regression") {

TEST_CASE("least squares basics") {
    RngStream rng(31, 0);
    Eigen::MatrixXd states = random_states(300, rng);
    SUBCASE("linear targets are interpolated exactly") {
        Eigen::VectorXd targets = 2.0 * states.col(0).array() + 1.0;
        BasisSpec lin;
        lin.degree = 1;
        FitResult fr = fit_step(states, targets, lin);
        CHECK(fr.residual_rms <= 1e-10);
        BasisSpec cubic;  // degree 3 contains the line
        FitResult fr3 = fit_step(states, targets, cubic);
        CHECK(fr3.residual_rms <= 1e-10);
    }
    SUBCASE("constant basis returns the sample mean") {
        Eigen::VectorXd targets(300);
        for (int i = 0; i < 300; ++i) targets[i] = rng.next_normal();
        BasisSpec flat;
        flat.degree = 0;
        FitResult fr = fit_step(states, targets, flat);
        REQUIRE(fr.coeff.size() == 1);
        CHECK(fr.coeff[0] == doctest::Approx(targets.mean()).epsilon(1e-12));
    }
    SUBCASE("all-constant states take the ridge path with a rank warning") {
        Eigen::MatrixXd flat_states = Eigen::MatrixXd::Constant(50, 1, 0.7);
        Eigen::VectorXd targets(50);
        for (int i = 0; i < 50; ++i) targets[i] = rng.next_normal() + 3.0;
        BasisSpec spec;  // degree 3 on a one-point cloud
        FitResult fr = fit_step(flat_states, targets, spec);
        CHECK(fr.rank_warning);
        CHECK(fr.ridge_used);
        BasisEval be(spec, flat_states);
        CHECK(be.value(Eigen::VectorXd::Constant(1, 0.7), fr.coeff) ==
              doctest::Approx(targets.mean()).epsilon(1e-6));
    }
    SUBCASE("residual never exceeds the constant-fit spread") {
        Eigen::VectorXd targets(300);
        for (int i = 0; i < 300; ++i)
            targets[i] = std::sin(3.0 * states(i, 0)) + 0.3 * rng.next_normal();
        for (int deg : {0, 1, 2, 3}) {
            BasisSpec spec;
            spec.degree = deg;
            FitResult fr = fit_step(states, targets, spec);
            CHECK(fr.residual_rms <= fr.target_sd * (1.0 + 1e-12));
        }
    }
}

TEST_CASE("target truncation") {
    Eigen::VectorXd t(3);
    t << 1.0, -2.0, 3.0;
    Eigen::VectorXd orig = t;
    CHECK(truncate_targets(t, 1e3) == 0);
    CHECK((t - orig).norm() == 0.0);

    Eigen::VectorXd u(2);
    u << 1e10, 0.5;
    CHECK(truncate_targets(u, 1e3) == 1);
    CHECK(u[0] == 1e3);
    CHECK(u[1] == 0.5);
}

TEST_CASE("one-step fits recover the Gaussian conditional expectations") {
    // Singleton control, sigma = sigma0, no drift: the driver is off and the
    // conditional expectations have closed forms for polynomial payoffs.
    const double sigma = 0.8, horizon = 0.5;
    auto cubic = [](double x) { return x * x * x - 2.0 * x + 1.0; };
    ControlProblem p = testutil::singleton_bm(0.3, sigma, horizon, cubic);
    MarkovLift lift = markovian_lift(p, 2);
    const int m = 30000;
    PathEnsemble ens = simulate_reference(p, lift, 2, m, 41, 1);
    const double h = ens.h();
    const double s2 = sigma * sigma * h;

    // Independent reconstruction of the step-1 targets.
    Eigen::MatrixXd states(m, 1);
    Eigen::VectorXd ty(m), tz(m), tg(m);
    for (int i = 0; i < m; ++i) {
        states(i, 0) = ens.state_x(1, i)[0];
        const double phi = cubic(ens.state_x(2, i)[0]);
        const double dw = ens.incr(1, i)[0];
        ty[i] = phi;
        tz[i] = phi * dw / (sigma * h);
        tg[i] = phi * (dw * dw - h) / (sigma * sigma * h * h);
    }

    BasisSpec spec;  // polynomial degree 3
    ProjectionOptions opts;
    opts.truncate = false;
    ProjectionStep ps = project_step_one_step(p, lift, ens, 1, ty, spec, opts);

    SUBCASE("driver-off value fit is the plain regression of the next value") {
        CHECK(ps.g_values.cwiseAbs().maxCoeff() == 0.0);
        CHECK((ps.y_targets - ty).cwiseAbs().maxCoeff() == 0.0);
        FitResult direct = fit_step(states, ty, spec);
        CHECK((ps.fit_y.coeff - direct.coeff).cwiseAbs().maxCoeff() <= 1e-10);
    }
    SUBCASE("library targets match the independent weight construction") {
        FitResult fz = fit_step(states, tz, spec);
        FitResult fg = fit_step(states, tg, spec);
        CHECK((ps.fit_z[0].coeff - fz.coeff).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK((ps.fit_gamma[0].coeff - fg.coeff).cwiseAbs().maxCoeff() <= 1e-9);
    }
    SUBCASE("fitted curves match the closed forms within bootstrap error") {
        for (double x : {-0.3, 0.3, 0.9}) {
            Eigen::VectorXd xv = Eigen::VectorXd::Constant(1, x);
            const double y_true = x * x * x + (3.0 * s2 - 2.0) * x + 1.0;
            const double z_true = 3.0 * x * x + 3.0 * s2 - 2.0;
            const double g_true = 6.0 * x;
            const double sd_y = boot_sd_at(states, ty, spec, x, 60, 101);
            const double sd_z = boot_sd_at(states, tz, spec, x, 60, 102);
            const double sd_g = boot_sd_at(states, tg, spec, x, 60, 103);
            CHECK(std::abs(ps.basis->value(xv, ps.fit_y.coeff) - y_true) <= 3 * sd_y);
            CHECK(std::abs(ps.basis->value(xv, ps.fit_z[0].coeff) - z_true) <= 3 * sd_z);
            CHECK(std::abs(ps.basis->value(xv, ps.fit_gamma[0].coeff) - g_true) <= 3 * sd_g);
        }
    }
    SUBCASE("linear next value carries no curvature") {
        Eigen::VectorXd lin(m), tglin(m);
        for (int i = 0; i < m; ++i) {
            lin[i] = ens.state_x(2, i)[0];
            tglin[i] = lin[i] * (std::pow(ens.incr(1, i)[0], 2) - h) / (sigma * sigma * h * h);
        }
        ProjectionStep pl = project_step_one_step(p, lift, ens, 1, lin, spec, opts);
        for (double x : {-0.3, 0.3, 0.9}) {
            const double sd = boot_sd_at(states, tglin, spec, x, 60, 104);
            CHECK(std::abs(pl.basis->value(Eigen::VectorXd::Constant(1, x),
                                           pl.fit_gamma[0].coeff)) <= 3 * sd);
        }
    }
    SUBCASE("cumulative targets collapse to the terminal value when the driver is off") {
        ProjectionStep pc = project_step_terminal_sum(p, lift, ens, 1, ty, spec, opts);
        CHECK((pc.y_targets - ty).cwiseAbs().maxCoeff() == 0.0);
        CHECK((pc.fit_y.coeff - ps.fit_y.coeff).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((pc.fit_z[0].coeff - ps.fit_z[0].coeff).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("fitted gradient matches the quadrature oracle at the money") {
    BuiltinProblem b = make_builtin("bs-call");
    MarkovLift lift = b.lift_for(2);

    SchemeConfig oc;
    oc.engine = Engine::Oracle;
    oc.n = 2;
    oc.lattice = b.default_lattice;
    SchemeResult oracle = backward_induction(b.problem, lift, oc);
    Eigen::VectorXd atm = b.problem.x0;
    const double z_oracle = oracle.surface->z_at(1, atm)[0];

    const int m = 40000;
    PathEnsemble ens = simulate_reference(b.problem, lift, 2, m, 53, 1);
    const double h = ens.h();
    const double sigma0 = 0.18;  // reference volatility of the builtin
    Eigen::MatrixXd states(m, 1);
    Eigen::VectorXd tz(m);
    for (int i = 0; i < m; ++i) {
        states(i, 0) = ens.state_x(1, i)[0];
        Eigen::VectorXd xv = ens.state_x(2, i);
        tz[i] = lift.terminal_reward(xv, Eigen::VectorXd()) * ens.incr(1, i)[0] / (sigma0 * h);
    }
    BasisSpec spec;
    const double z_fit = fitted_at(states, tz, spec, atm[0]);
    const double sd = boot_sd_at(states, tz, spec, atm[0], 60, 105);
    CHECK(sd > 0.0);
    CHECK(std::abs(z_fit - z_oracle) <= 3 * sd);
}

TEST_CASE("single-step runs make the two projection schemes identical") {
    ControlProblem p = testutil::uvm_arith();
    MarkovLift lift = markovian_lift(p, 1);
    SchemeConfig cfg;
    cfg.n = 1;
    cfg.paths = 20000;
    cfg.seed = 5;
    cfg.engine = Engine::Regress1;
    SchemeResult s1 = backward_induction(p, lift, cfg);
    cfg.engine = Engine::Regress2;
    SchemeResult s2 = backward_induction(p, lift, cfg);
    CHECK(s1.y0 == doctest::Approx(s2.y0).epsilon(1e-14));
    REQUIRE(s1.step0_values.size() == s2.step0_values.size());
    for (std::size_t i = 0; i < s1.step0_values.size(); ++i)
        CHECK(s1.step0_values[i] == doctest::Approx(s2.step0_values[i]).epsilon(1e-14));
}

TEST_CASE("driver-off schemes share every value fit at two steps") {
    auto cubic = [](double x) { return x * x * x - 2.0 * x + 1.0; };
    ControlProblem p = testutil::singleton_bm(0.3, 0.8, 0.5, cubic);
    MarkovLift lift = markovian_lift(p, 2);
    SchemeConfig cfg;
    cfg.n = 2;
    cfg.paths = 10000;
    cfg.seed = 9;
    cfg.engine = Engine::Regress1;
    SchemeResult s1 = backward_induction(p, lift, cfg);
    cfg.engine = Engine::Regress2;
    SchemeResult s2 = backward_induction(p, lift, cfg);
    // Identical step-1 targets, hence identical fits; means then agree at 0.
    CHECK(std::abs(s1.y0 - s2.y0) <= 1e-8 * std::max(1.0, std::abs(s1.y0)));
    for (double x : {-0.5, 0.0, 0.3, 1.0}) {
        Eigen::VectorXd xv = Eigen::VectorXd::Constant(1, x);
        const double v1 = s1.surface->y_at(1, xv), v2 = s2.surface->y_at(1, xv);
        CHECK(std::abs(v1 - v2) <= 1e-8 * std::max(1.0, std::abs(v1)));
        CHECK(std::abs(s1.surface->z_at(1, xv)[0] - s2.surface->z_at(1, xv)[0]) <= 1e-8);
    }
}

TEST_CASE("driver-off schemes agree on the root value at any depth") {
    BuiltinProblem b = make_builtin("asian-lift");
    MarkovLift lift = b.lift_for(8);
    SchemeConfig cfg;
    cfg.n = 8;
    cfg.paths = 20000;
    cfg.seed = 7;
    cfg.engine = Engine::Regress1;
    SchemeResult s1 = backward_induction(b.problem, lift, cfg);
    cfg.engine = Engine::Regress2;
    SchemeResult s2 = backward_induction(b.problem, lift, cfg);
    CHECK(std::abs(s1.y0 - s2.y0) <= 1e-8 * std::max(1.0, std::abs(s1.y0)));
}

TEST_CASE("both schemes estimate the same value with a live driver") {
    BuiltinProblem b = make_builtin("bs-call");  // sigma0 < sigma: corrections on
    MarkovLift lift = b.lift_for(16);
    SchemeConfig cfg;
    cfg.n = 16;
    cfg.paths = 100000;
    cfg.seed = 1;
    cfg.engine = Engine::Regress1;
    SchemeResult s1 = backward_induction(b.problem, lift, cfg);
    cfg.engine = Engine::Regress2;
    SchemeResult s2 = backward_induction(b.problem, lift, cfg);
    const double se1 = bootstrap_std_error(s1.step0_values, 200, 0x9bc);
    const double se2 = bootstrap_std_error(s2.step0_values, 200, 0x9bc);
    CHECK(se1 > 0.0);
    CHECK(std::abs(s1.y0 - s2.y0) <= 3.0 * (se1 + se2));
}

TEST_CASE("one-step regression agrees with the oracle") {
    BuiltinProblem b = make_builtin("bs-call");
    MarkovLift lift = b.lift_for(1);

    SchemeConfig oc;
    oc.engine = Engine::Oracle;
    oc.n = 1;
    oc.lattice = b.default_lattice;
    SchemeResult oracle = backward_induction(b.problem, lift, oc);

    SchemeConfig rc;
    rc.engine = Engine::Regress1;
    rc.n = 1;
    rc.paths = 100000;
    rc.seed = 3;
    SchemeResult reg = backward_induction(b.problem, lift, rc);
    const double se = bootstrap_std_error(reg.step0_values, 200, 0x9bc);
    CHECK(std::abs(reg.y0 - oracle.y0) <= 3.0 * se);
}

TEST_CASE("default truncation rarely binds on the degenerate example") {
    BuiltinProblem b = make_builtin("call-sharpe");
    PerturbedProblem pp = perturb(b.problem, 0.1, b.perturbed_ref_vol(0.1));
    MarkovLift lift = perturb_lift(b.lift_for(8), 0.1, b.perturbed_ref_vol_lift(0.1));
    SchemeConfig cfg;
    cfg.engine = Engine::Regress1;
    cfg.n = 8;
    cfg.paths = 100000;
    cfg.seed = 1;
    SchemeResult res = backward_induction(pp.problem, lift, cfg);
    // 6 target vectors per interior step (y, z x2, gamma x3)
    const double total = 7.0 * 6.0 * cfg.paths;
    CHECK(res.trunc_hits_total < 0.01 * total);
    CHECK(std::isfinite(res.y0));
}

}  // TEST_SUITE
