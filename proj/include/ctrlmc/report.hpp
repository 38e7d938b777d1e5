#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ctrlmc/regression.hpp"
#include "ctrlmc/scheme.hpp"

namespace ctrlmc {

// Per-field lattice overrides layered on top of a problem's defaults.
struct LatticeOverrides {
    std::optional<int> x_count, s_count, quad_order, simpson_points;
    std::optional<double> x_half_width, s_lo, s_hi, simpson_span;
    std::optional<bool> use_simpson;

    LatticeOptions apply(LatticeOptions base) const;
};

struct RunConfig {
    std::string problem = "bs-call";
    std::vector<int> n_list = {16};
    int paths = 100000;
    Engine engine = Engine::Oracle;
    std::uint64_t seed = 1;
    std::vector<double> eps_list;  // empty: solve the problem as-is
    std::string out_path;          // empty: report goes to stdout only
    bool allow_h_override = false;
    int threads = 1;

    BasisSpec basis;
    bool truncate = true;
    double trunc_growth = 10.0;
    bool raw_driver_inputs = false;
    bool use_qr = false;
    LatticeOverrides lattice;
    int wp_probe_paths = 16;

    // Analytic m_G override; NaN means use the probe-based value.
    double mg_override = std::numeric_limits<double>::quiet_NaN();

    bool study = false;
    int bootstrap_resamples = 200;
    std::uint64_t bootstrap_seed = 0x9bcull;
};

struct RunRow {
    std::string problem;
    int n = 0;
    double h = 0.0;
    double eps = std::numeric_limits<double>::quiet_NaN();  // NaN: unperturbed
    std::string engine;
    double y0 = 0.0;
    double std_error = 0.0;
    double m_g = 0.0;
    double h0 = 0.0;
    double seconds = 0.0;
    long trunc_hits = 0;
    bool overridden = false;
    std::vector<long> argmax_hist;  // per control index, summed over steps
};

struct StudyReport {
    double reference = std::numeric_limits<double>::quiet_NaN();
    std::string reference_label;
    std::vector<double> errors;  // |y0 - reference|, aligned with rows
    double slope = 0.0;          // least-squares slope of log error vs log h
    bool monotone = false;       // strictly decreasing error as n grows
    std::string flag;            // non-monotone warning; empty when clean
    std::string note;            // context on the theoretical worst-case rate
};

struct RunReport {
    RunConfig config;
    std::vector<RunRow> rows;
    std::optional<StudyReport> study;
    std::string version;
};

// Executes every (eps, n) cell before anything is reported, so a failing
// cell aborts the whole run with no partial output.
RunReport run(const RunConfig& config);

// problem,n,h,eps,engine,y0,stderr,m_g,h_0,seconds,trunc_hits,override
// The `seconds` column is wall time and is excluded from byte-stability
// guarantees; every other column is deterministic for a given config.
void write_csv(const RunReport& report, std::ostream& os);

// Deterministic mirror: identical content for identical (config, seed,
// version), so it carries no timing.
void write_json(const RunReport& report, std::ostream& os);

// Standard error of the mean from resampled path values; deterministic for a
// given seed and independent of thread count.
double bootstrap_std_error(const std::vector<double>& values, int resamples,
                           std::uint64_t seed);

std::string engine_name(Engine engine);
Engine parse_engine(const std::string& name);

}  // namespace ctrlmc
