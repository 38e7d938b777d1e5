#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ctrlmc/degenerate.hpp"
#include "ctrlmc/model.hpp"
#include "ctrlmc/scheme.hpp"

namespace ctrlmc {

// A packaged experiment: the problem, its Markovian lift, and the metadata
// the CLI and tests need (reference value, perturbation hooks, lattice hints).
struct BuiltinProblem {
    ControlProblem problem;
    std::function<MarkovLift(int n)> lift_for;

    // True when the diffusion is degenerate and a --perturb-eps run is the
    // intended usage.
    bool needs_perturbation = false;

    // Reference volatilities dominated by the perturbed diffusion; null means
    // use the default eps * I from perturb().
    std::function<PathVolFn(double eps)> perturbed_ref_vol;
    std::function<LiftVolFn(double eps)> perturbed_ref_vol_lift;

    double reference_value = std::numeric_limits<double>::quiet_NaN();
    std::string reference_label;
    LatticeOptions default_lattice;
};

std::vector<std::string> builtin_ids();
BuiltinProblem make_builtin(const std::string& id);

// Zero-rate Black-Scholes call price.
double black_scholes_call(double spot, double strike, double sigma, double t);

}  // namespace ctrlmc
