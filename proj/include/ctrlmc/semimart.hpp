#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ctrlmc/lattice.hpp"
#include "ctrlmc/model.hpp"
#include "ctrlmc/scheme.hpp"

namespace ctrlmc {

// Per-step control rule. The rule sees the path frozen at step k and returns
// an index into the problem's control grid.
struct Strategy {
    std::function<int(int k, const PathGrid& path)> rule;

    static Strategy constant(int control_index) {
        return Strategy{[control_index](int, const PathGrid&) { return control_index; }};
    }
};

struct ControlledStats {
    double mean = 0.0;
    double std_error = 0.0;
    int paths = 0;
    // Largest negative-density mass clipped by any one-step sampler built
    // during the run; nonzero only when h exceeds the admissible bound.
    double clipped_mass_max = 0.0;
    std::vector<double> rewards;
};

// Forward simulation of the controlled discrete-time process: each step draws
// the increment from the one-step law of the chosen control by inverse-CDF
// sampling, accumulating running rewards. 1-d only (sampler limitation).
// Admissibility of h is the caller's contract; inadmissible parameters shows
// up in clipped_mass_max.
ControlledStats simulate_controlled(const ControlProblem& problem, const Strategy& strategy,
                                    int n, int paths, std::uint64_t seed, int threads = 1);

// Backward dynamic program over (lattice node, control): per-step value and
// control tables for the best lattice-measurable strategy.
struct LatticePlan {
    Axis axis;
    std::vector<std::vector<int>> choice;    // [k][node], k = 0..n-1
    std::vector<Eigen::VectorXd> value;      // [k][node], k = 0..n
};

struct BruteForceOptions {
    int quad_order = 64;
    bool use_simpson = false;
    double simpson_span = 8.0;
    int simpson_points = 2049;
    int max_n = 3;
    int max_nodes = 31;
    int max_controls = 4;
};

// Optimizes over all strategies at once by dynamic programming on a shared
// state lattice, with one-step expectations integrated directly against the
// transition density. Deliberately tiny (n <= 3 by default): this is the
// ground truth the backward scheme is checked against. The problem must be
// Markovian (coefficients read the current state only).
double brute_force_value(const ControlProblem& problem, int n, const Axis& axis,
                         const BruteForceOptions& opts = {}, LatticePlan* plan = nullptr);

// Rebuilds the driver's argmax rule from a scheme result's value surface:
// at each step the rule folds the lift state along the visited path, queries
// (z, gamma) and replays the driver maximization.
Strategy extract_strategy(const ControlProblem& problem, const MarkovLift& lift,
                          const SchemeResult& result);

}  // namespace ctrlmc
