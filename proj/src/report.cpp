#include "ctrlmc/report.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <utility>

#include "json.hpp"

#include "ctrlmc/degenerate.hpp"
#include "ctrlmc/errors.hpp"
#include "ctrlmc/kernel.hpp"
#include "ctrlmc/problems.hpp"
#include "ctrlmc/rng.hpp"
#include "ctrlmc/version.hpp"

namespace ctrlmc {

LatticeOptions LatticeOverrides::apply(LatticeOptions base) const {
    if (x_count) base.x_count = *x_count;
    if (s_count) base.s_count = *s_count;
    if (quad_order) base.quad_order = *quad_order;
    if (simpson_points) base.simpson_points = *simpson_points;
    if (x_half_width) base.x_half_width = *x_half_width;
    if (s_lo) base.s_lo = *s_lo;
    if (s_hi) base.s_hi = *s_hi;
    if (simpson_span) base.simpson_span = *simpson_span;
    if (use_simpson) base.use_simpson = *use_simpson;
    return base;
}

std::string engine_name(Engine engine) {
    switch (engine) {
        case Engine::Oracle: return "oracle";
        case Engine::Regress1: return "regress1";
        case Engine::Regress2: return "regress2";
    }
    return "oracle";
}

Engine parse_engine(const std::string& name) {
    if (name == "oracle") return Engine::Oracle;
    if (name == "regress1") return Engine::Regress1;
    if (name == "regress2") return Engine::Regress2;
    throw ConfigError("unknown engine '" + name + "' (use oracle, regress1 or regress2)");
}

double bootstrap_std_error(const std::vector<double>& values, int resamples,
                           std::uint64_t seed) {
    const std::size_t m = values.size();
    if (m < 2 || resamples < 2) return 0.0;

    std::vector<double> means(resamples);
    for (int r = 0; r < resamples; ++r) {
        RngStream rng(seed, static_cast<std::uint64_t>(r));
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += values[rng.next_u64() % m];
        means[r] = acc / static_cast<double>(m);
    }
    double mean = 0.0;
    for (double v : means) mean += v;
    mean /= resamples;
    double var = 0.0;
    for (double v : means) var += (v - mean) * (v - mean);
    var /= resamples - 1;
    return std::sqrt(var);
}

namespace {

std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

std::string secs(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return std::string(buf);
}

StudyReport build_study(const RunReport& report, const BuiltinProblem& builtin) {
    StudyReport study;
    study.reference = builtin.reference_value;
    study.reference_label = builtin.reference_label;
    study.note =
        "slope is the empirical least-squares fit of log error vs log h; the "
        "theoretical worst-case rate h^(1/8-eps) is context only and is not "
        "asserted";

    for (const RunRow& row : report.rows)
        study.errors.push_back(std::abs(row.y0 - study.reference));

    const std::size_t count = report.rows.size();
    double mx = 0.0, my = 0.0;
    std::vector<double> xs(count), ys(count);
    for (std::size_t i = 0; i < count; ++i) {
        xs[i] = std::log(report.rows[i].h);
        ys[i] = std::log(std::max(study.errors[i], 1e-16));
        mx += xs[i];
        my += ys[i];
    }
    mx /= count;
    my /= count;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    study.slope = sxx > 0 ? sxy / sxx : 0.0;

    study.monotone = true;
    for (std::size_t i = 0; i + 1 < count; ++i) {
        if (!(study.errors[i + 1] < study.errors[i])) study.monotone = false;
        double combined_se = report.rows[i].std_error + report.rows[i + 1].std_error;
        if (study.errors[i + 1] > study.errors[i] + combined_se && study.flag.empty()) {
            study.flag = "error increases beyond stderr between n=" +
                         std::to_string(report.rows[i].n) + " and n=" +
                         std::to_string(report.rows[i + 1].n);
        }
    }
    return study;
}

}  // namespace

RunReport run(const RunConfig& config) {
    if (config.n_list.empty()) throw ConfigError("n list must be nonempty");
    for (int n : config.n_list)
        if (n < 1) throw ConfigError("n must be >= 1");
    if (config.paths < 1) throw ConfigError("paths must be >= 1");
    for (double e : config.eps_list)
        if (!(e > 0)) throw ConfigError("perturb eps must be > 0");

    BuiltinProblem builtin = make_builtin(config.problem);
    const LatticeOptions lattice = config.lattice.apply(builtin.default_lattice);

    if (config.study) {
        if (config.eps_list.size() > 1)
            throw ConfigError("a study needs a single eps (or none)");
        if (config.n_list.size() < 4)
            throw ConfigError("a study needs at least 4 ladder points");
        for (std::size_t i = 1; i < config.n_list.size(); ++i)
            if (config.n_list[i] <= config.n_list[i - 1])
                throw ConfigError("study ladder must be strictly increasing in n");
        if (!std::isfinite(builtin.reference_value))
            throw ConfigError("problem '" + config.problem +
                              "' has no reference value for a study");
    }

    RunReport report;
    report.config = config;
    report.version = kVersion;

    std::vector<double> eps_slots = config.eps_list;
    if (eps_slots.empty()) eps_slots.push_back(std::numeric_limits<double>::quiet_NaN());

    for (double eps : eps_slots) {
        ControlProblem problem = builtin.problem;
        if (std::isfinite(eps)) {
            PathVolFn ref_override =
                builtin.perturbed_ref_vol ? builtin.perturbed_ref_vol(eps) : PathVolFn();
            problem = perturb(builtin.problem, eps, std::move(ref_override)).problem;
        }

        for (int n : config.n_list) {
            const auto t0 = std::chrono::steady_clock::now();

            MarkovLift lift = builtin.lift_for(n);
            if (std::isfinite(eps)) {
                LiftVolFn lift_override = builtin.perturbed_ref_vol_lift
                                              ? builtin.perturbed_ref_vol_lift(eps)
                                              : LiftVolFn();
                lift = perturb_lift(lift, eps, std::move(lift_override));
            }

            ProbeOptions probe;
            probe.paths = config.wp_probe_paths;
            WellPosedness wp = well_posedness(problem, n, probe);
            if (std::isfinite(config.mg_override))
                apply_mg_override(wp, config.mg_override, problem.horizon);

            SchemeConfig sc;
            sc.engine = config.engine;
            sc.n = n;
            sc.paths = config.paths;
            sc.seed = config.seed;
            sc.threads = config.threads;
            sc.basis = config.basis;
            sc.truncate = config.truncate;
            sc.trunc_growth = config.trunc_growth;
            sc.raw_driver_inputs = config.raw_driver_inputs;
            sc.use_qr = config.use_qr;
            sc.allow_h_override = config.allow_h_override;
            sc.lattice = lattice;
            sc.wp_probe_paths = config.wp_probe_paths;

            SchemeResult result = backward_induction(problem, lift, sc, &wp);

            RunRow row;
            row.problem = config.problem;  // keep the id; eps has its own column
            row.n = n;
            row.h = problem.horizon / n;
            row.eps = eps;
            row.engine = engine_name(config.engine);
            row.y0 = result.y0;
            row.std_error =
                config.engine == Engine::Oracle
                    ? 0.0
                    : bootstrap_std_error(result.step0_values, config.bootstrap_resamples,
                                          config.bootstrap_seed);
            row.m_g = wp.m_g;
            row.h0 = wp.h0;
            row.trunc_hits = result.trunc_hits_total;
            row.overridden = result.h_overridden;
            for (const StepDiagnostics& sd : result.steps) {
                if (row.argmax_hist.size() < sd.argmax_count.size())
                    row.argmax_hist.resize(sd.argmax_count.size(), 0);
                for (std::size_t c = 0; c < sd.argmax_count.size(); ++c)
                    row.argmax_hist[c] += sd.argmax_count[c];
            }

            const auto t1 = std::chrono::steady_clock::now();
            row.seconds = std::chrono::duration<double>(t1 - t0).count();
            report.rows.push_back(std::move(row));
        }
    }

    if (config.study) report.study = build_study(report, builtin);
    return report;
}

void write_csv(const RunReport& report, std::ostream& os) {
    os << "problem,n,h,eps,engine,y0,stderr,m_g,h_0,seconds,trunc_hits,override\n";
    for (const RunRow& r : report.rows) {
        os << r.problem << ',' << r.n << ',' << num(r.h) << ','
           << (std::isfinite(r.eps) ? num(r.eps) : "") << ',' << r.engine << ','
           << num(r.y0) << ',' << num(r.std_error) << ',' << num(r.m_g) << ','
           << num(r.h0) << ',' << secs(r.seconds) << ',' << r.trunc_hits << ','
           << (r.overridden ? 1 : 0) << '\n';
    }
}

void write_json(const RunReport& report, std::ostream& os) {
    nlohmann::json j;
    j["version"] = report.version;

    const RunConfig& c = report.config;
    nlohmann::json cfg;
    cfg["problem"] = c.problem;
    cfg["n"] = c.n_list;
    cfg["paths"] = c.paths;
    cfg["engine"] = engine_name(c.engine);
    cfg["seed"] = c.seed;
    cfg["perturb_eps"] = c.eps_list;
    cfg["allow_h_override"] = c.allow_h_override;
    cfg["basis_family"] =
        c.basis.family == BasisSpec::Family::Polynomial ? "polynomial" : "pwlinear";
    cfg["basis_degree"] = c.basis.degree;
    cfg["basis_bins"] = c.basis.bins;
    cfg["truncate"] = c.truncate;
    cfg["trunc_growth"] = c.trunc_growth;
    cfg["raw_driver_inputs"] = c.raw_driver_inputs;
    cfg["use_qr"] = c.use_qr;
    cfg["wp_probe_paths"] = c.wp_probe_paths;
    if (std::isfinite(c.mg_override)) cfg["mg_override"] = c.mg_override;
    cfg["study"] = c.study;
    cfg["bootstrap_resamples"] = c.bootstrap_resamples;
    cfg["bootstrap_seed"] = c.bootstrap_seed;
    nlohmann::json lat = nlohmann::json::object();
    if (c.lattice.x_count) lat["x_count"] = *c.lattice.x_count;
    if (c.lattice.s_count) lat["s_count"] = *c.lattice.s_count;
    if (c.lattice.quad_order) lat["quad_order"] = *c.lattice.quad_order;
    if (c.lattice.simpson_points) lat["simpson_points"] = *c.lattice.simpson_points;
    if (c.lattice.x_half_width) lat["x_half_width"] = *c.lattice.x_half_width;
    if (c.lattice.s_lo) lat["s_lo"] = *c.lattice.s_lo;
    if (c.lattice.s_hi) lat["s_hi"] = *c.lattice.s_hi;
    if (c.lattice.simpson_span) lat["simpson_span"] = *c.lattice.simpson_span;
    if (c.lattice.use_simpson) lat["use_simpson"] = *c.lattice.use_simpson;
    cfg["lattice"] = lat;
    // threads and the output path are omitted on purpose: the mirror must be
    // byte-identical across worker counts and destinations
    j["config"] = cfg;

    nlohmann::json rows = nlohmann::json::array();
    for (const RunRow& r : report.rows) {
        nlohmann::json row;
        row["problem"] = r.problem;
        row["n"] = r.n;
        row["h"] = r.h;
        if (std::isfinite(r.eps))
            row["eps"] = r.eps;
        else
            row["eps"] = nullptr;
        row["engine"] = r.engine;
        row["y0"] = r.y0;
        row["stderr"] = r.std_error;
        row["m_g"] = r.m_g;
        row["h_0"] = r.h0;
        row["trunc_hits"] = r.trunc_hits;
        row["override"] = r.overridden;
        row["argmax_hist"] = r.argmax_hist;
        rows.push_back(std::move(row));
    }
    j["rows"] = rows;

    if (report.study) {
        const StudyReport& s = *report.study;
        nlohmann::json study;
        study["reference"] = s.reference;
        study["reference_label"] = s.reference_label;
        study["errors"] = s.errors;
        study["slope"] = s.slope;
        study["monotone"] = s.monotone;
        study["flag"] = s.flag;
        study["note"] = s.note;
        j["study"] = study;
    } else {
        j["study"] = nullptr;
    }

    os << j.dump(2) << "\n";
}

}  // namespace ctrlmc
