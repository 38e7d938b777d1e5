#pragma once

#include <stdexcept>
#include <string>

namespace ctrlmc {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad user input: malformed config, unknown problem id, inconsistent sizes.
struct ConfigError : Error {
    using Error::Error;
};

// The (problem, h) pair fails the step-size admissibility gate.
struct StepSizeError : Error {
    StepSizeError(const std::string& what, double h, double h_max)
        : Error(what), h(h), h_max(h_max) {}
    double h;
    double h_max;
};

// The model violates a structural requirement (ellipticity, matrix domination,
// drift outside the diffusion range) that no step size can repair.
struct ModelAssumptionError : Error {
    using Error::Error;
};

// A numerical routine lost the plot: singular reference volatility,
// non-finite regression targets, quadrature blow-up.
struct NumericalError : Error {
    using Error::Error;
};

// A Markov lift does not reproduce the path functional it claims to summarise.
struct LiftMismatchError : Error {
    LiftMismatchError(const std::string& what, int step)
        : Error(what), step(step) {}
    int step;
};

// Operation only implemented for certain dimensions (the net-law sampler is 1-d).
struct DimensionError : Error {
    using Error::Error;
};

// A scheme result lacks the per-step surfaces needed to rebuild a strategy.
struct StrategyUnavailable : Error {
    using Error::Error;
};

}  // namespace ctrlmc
