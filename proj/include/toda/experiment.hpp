#pragma once

#include "toda/io.hpp"
#include "toda/stability.hpp"

#include <cstdint>

namespace toda {

struct Violation {
    std::string field;
    std::string message;
};

/**
 * One experiment as described by a key = value config: kind plus family,
 * grid, integrator, frame, and perturbation blocks.  Deterministic given the
 * seed; the raw config is echoed verbatim into the output manifest.
 */
struct ExperimentConfig {
    std::string kind;                     // soliton | backlund | linear-decay | resolution | modulate
    std::vector<double> kappa, gamma;
    int n_min = -60, n_max = 60;
    double t = 0.0;
    std::vector<double> times;            // resolution ladder
    double t0 = 0.0, t1 = 12.0, dt = 2e-3, record_every = 0.05;
    double frame_a = 0.5, frame_c = 1.5, frame_T = 0.0;
    PerturbationSpec perturbation;
    bool control = false;                 // linear-decay: also run without the projection
    bool derivatives = false;             // soliton: add tangent columns to the CSV
    double kappa_new = 0.0, gamma_new = 0.0;
    std::vector<double> delta_sweep;      // modulate: amplitudes (defaults to the perturbation's)
    double tube_radius = 0.05;
    std::uint64_t seed = 1;
    int threads = 1;
    std::string scheme = "leapfrog";
    std::map<std::string, std::string> raw;
    std::vector<std::string> unknown;
};

// Parse without semantic checks; throws std::invalid_argument on malformed text.
ExperimentConfig parse_experiment(const KeyValueConfig& cfg);

// Semantic validation; empty result means runnable.
std::vector<Violation> validate(const ExperimentConfig& config);

/**
 * Run the experiment, writing CSV artifacts and manifest.json (keys: config,
 * results, checks, timing, version) under out_dir.  Returns 0 on success, 1 on
 * runtime failure (manifest still written with the error), 2 on validation
 * failure (nothing written).
 */
int run_experiment(const ExperimentConfig& config, const std::string& out_dir);

extern const char* kVersion;

} // namespace toda
