#pragma once

#include "secc/datagen.hpp"
#include "secc/trainer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace secc {

// A full seeded experiment: generator, training setup, evaluation settings
// and output location, parsed from a flat key=value file.
struct ExperimentConfig {
    GeneratorSpec task;
    TrainConfig train; // carries eval mode and threshold
    bool report_os_macro = true;
    std::vector<std::uint64_t> seeds;
    std::string out_dir = "runs/out";

    void validate() const;
};

// Throws ConfigError naming the offending key.
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& text);

struct SeedResult {
    std::uint64_t seed = 0;
    MetricsReport metrics;
};

// Generates, trains and evaluates one seed; writes metrics.csv, history.csv,
// projection.csv and projection.svg under `dir`.
SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& dir);

// Per-seed artifacts plus an aggregate summary.csv (median/min/max).
// Returns the artifact directory.
std::string run_experiment(const ExperimentConfig& cfg);

// The four-row ablation ladder; writes ablation.csv plus per-config
// per-seed artifacts.
std::string run_ablation(const ExperimentConfig& cfg);

// Re-renders plots from existing CSV artifacts into `out_dir`.
void render_plots(const std::string& history_csv_path, const std::string& projection_csv_path,
                  const std::string& out_dir);

double median(std::vector<double> values);

} // namespace secc
