#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ctrlmc/errors.hpp"
#include "ctrlmc/problems.hpp"
#include "ctrlmc/report.hpp"
#include "ctrlmc/version.hpp"

namespace {

std::string json_path_for(const std::string& out) {
    const std::string suffix = ".csv";
    if (out.size() > suffix.size() &&
        out.compare(out.size() - suffix.size(), suffix.size(), suffix) == 0)
        return out.substr(0, out.size() - suffix.size()) + ".json";
    return out + ".json";
}

void print_study(const ctrlmc::RunReport& report, std::ostream& os) {
    if (!report.study) return;
    const ctrlmc::StudyReport& s = *report.study;
    os << "study: reference " << s.reference << " (" << s.reference_label << ")\n";
    for (std::size_t i = 0; i < report.rows.size(); ++i)
        os << "  n=" << report.rows[i].n << "  y0=" << report.rows[i].y0
           << "  |error|=" << s.errors[i] << "\n";
    os << "  slope " << s.slope << (s.monotone ? "  (monotone)" : "  (not monotone)")
       << "\n";
    if (!s.flag.empty()) os << "  warning: " << s.flag << "\n";
    os << "  " << s.note << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo and lattice solver for discrete-time stochastic control"};
    app.set_version_flag("--version", ctrlmc::kVersion);
    app.set_config("--config", "", "flat key=value config file");

    std::string problem = "bs-call";
    std::vector<int> n_list{16};
    int paths = 100000;
    std::string engine = "oracle";
    std::uint64_t seed = 1;
    std::vector<double> eps_list;
    std::string out;
    bool allow_h_override = false;
    int threads = 1;
    bool study = false;

    std::string basis_family = "polynomial";
    int basis_degree = 3;
    int basis_bins = 8;
    bool no_truncate = false;
    double trunc_growth = 10.0;
    bool raw_driver_inputs = false;
    bool use_qr = false;
    double mg_override = std::numeric_limits<double>::quiet_NaN();
    int wp_probe_paths = 16;
    int bootstrap_resamples = 200;

    int gh_order = 64;
    bool simpson = false;
    int x_count = 0;
    double x_halfwidth = 0.0;
    int s_count = 0;
    double s_lo = 0.0, s_hi = 0.0;

    std::string ids;
    for (const auto& id : ctrlmc::builtin_ids()) ids += (ids.empty() ? "" : ", ") + id;

    app.add_option("--problem", problem, "builtin problem id (" + ids + ")")
        ->capture_default_str();
    app.add_option("--n", n_list, "time grid sizes, comma separated")
        ->delimiter(',')
        ->capture_default_str();
    app.add_option("--paths", paths, "Monte Carlo paths per run")->capture_default_str();
    app.add_option("--engine", engine, "oracle, regress1 or regress2")
        ->capture_default_str();
    app.add_option("--seed", seed, "base RNG seed")->capture_default_str();
    app.add_option("--perturb-eps", eps_list,
                   "diffusion perturbation sizes, comma separated")
        ->delimiter(',');
    app.add_option("--out", out, "CSV output path; a .json mirror is written next to it");
    app.add_flag("--allow-h-override", allow_h_override,
                 "run even when h exceeds the admissible step bound");
    app.add_option("--threads", threads, "worker threads (results are thread-invariant)")
        ->capture_default_str();
    app.add_flag("--study", study, "convergence study over the n ladder");

    app.add_option("--basis-family", basis_family, "polynomial or pwlinear")
        ->capture_default_str();
    app.add_option("--basis-degree", basis_degree, "total degree of the polynomial basis")
        ->capture_default_str();
    app.add_option("--basis-bins", basis_bins, "knot count for the pwlinear basis")
        ->capture_default_str();
    app.add_flag("--no-truncate", no_truncate, "disable regression target truncation");
    app.add_option("--trunc-growth", trunc_growth, "truncation bound growth factor")
        ->capture_default_str();
    app.add_flag("--raw-driver-inputs", raw_driver_inputs,
                 "feed raw per-path weight targets to the driver instead of fitted values");
    app.add_flag("--use-qr", use_qr, "solve regressions by column-pivoted QR");
    app.add_option("--mg-override", mg_override,
                   "analytic driver lower-bound constant replacing the probe value");
    app.add_option("--wp-probe-paths", wp_probe_paths, "probe paths for the step bound")
        ->capture_default_str();
    app.add_option("--bootstrap-resamples", bootstrap_resamples,
                   "bootstrap resamples for the stderr column")
        ->capture_default_str();

    app.add_option("--gh-order", gh_order, "Gauss-Hermite order for the lattice engine")
        ->capture_default_str();
    app.add_flag("--simpson", simpson, "use Simpson quadrature instead of Gauss-Hermite");
    app.add_option("--x-count", x_count, "lattice nodes in the state direction");
    app.add_option("--x-halfwidth", x_halfwidth, "lattice half width in the state direction");
    app.add_option("--s-count", s_count, "lattice nodes in the summary direction");
    app.add_option("--s-lo", s_lo, "lattice lower bound in the summary direction");
    app.add_option("--s-hi", s_hi, "lattice upper bound in the summary direction");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success))
            return app.exit(e);
        app.exit(e);
        return 1;
    }

    try {
        ctrlmc::RunConfig config;
        config.problem = problem;
        config.n_list = n_list;
        config.paths = paths;
        config.engine = ctrlmc::parse_engine(engine);
        config.seed = seed;
        config.eps_list = eps_list;
        config.out_path = out;
        config.allow_h_override = allow_h_override;
        config.threads = threads;
        config.study = study;

        if (basis_family == "polynomial") {
            config.basis.family = ctrlmc::BasisSpec::Family::Polynomial;
        } else if (basis_family == "pwlinear") {
            config.basis.family = ctrlmc::BasisSpec::Family::PiecewiseLinear;
        } else {
            throw ctrlmc::ConfigError("unknown basis family '" + basis_family + "'");
        }
        config.basis.degree = basis_degree;
        config.basis.bins = basis_bins;
        config.truncate = !no_truncate;
        config.trunc_growth = trunc_growth;
        config.raw_driver_inputs = raw_driver_inputs;
        config.use_qr = use_qr;
        config.mg_override = mg_override;
        config.wp_probe_paths = wp_probe_paths;
        config.bootstrap_resamples = bootstrap_resamples;

        if (app.count("--gh-order")) config.lattice.quad_order = gh_order;
        if (app.count("--simpson")) config.lattice.use_simpson = simpson;
        if (app.count("--x-count")) config.lattice.x_count = x_count;
        if (app.count("--x-halfwidth")) config.lattice.x_half_width = x_halfwidth;
        if (app.count("--s-count")) config.lattice.s_count = s_count;
        if (app.count("--s-lo")) config.lattice.s_lo = s_lo;
        if (app.count("--s-hi")) config.lattice.s_hi = s_hi;

        ctrlmc::RunReport report = ctrlmc::run(config);

        ctrlmc::write_csv(report, std::cout);
        print_study(report, std::cerr);

        if (!out.empty()) {
            std::ofstream csv(out);
            if (!csv) throw ctrlmc::ConfigError("cannot write output file '" + out + "'");
            ctrlmc::write_csv(report, csv);

            const std::string jpath = json_path_for(out);
            std::ofstream js(jpath);
            if (!js) throw ctrlmc::ConfigError("cannot write output file '" + jpath + "'");
            ctrlmc::write_json(report, js);
        }
        return 0;
    } catch (const ctrlmc::StepSizeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ctrlmc::ModelAssumptionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ctrlmc::LiftMismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ctrlmc::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ctrlmc::DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ctrlmc::NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
