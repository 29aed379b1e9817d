#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pflow/datasets.hpp"
#include "pflow/metrics.hpp"
#include "pflow/solver.hpp"
#include "pflow/velocity_net.hpp"

namespace pflow {

/// Flat key=value text with [section] headers. Keys are stored as
/// "section.key"; '#' and ';' start comments. Duplicate keys are an error.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    const std::map<std::string, std::string>& values() const noexcept { return values_; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

private:
    std::map<std::string, std::string> values_;
};

std::vector<std::string> split_list(const std::string& text);
bool parse_flag(const std::string& text);

struct ExperimentConfig {
    std::string dataset = "synth-gray-16x16";
    std::string checkpoint;
    std::vector<std::string> tasks{"denoise"};
    SolverKind solver = SolverKind::PFlow;

    // Unset fields fall back to the per-task defaults.
    std::optional<int> iterations;
    std::optional<int> ode_steps;
    std::optional<double> step_size;
    double proxy_scalar = 1.0;
    bool projection = true;
    double latent_penalty = 0.0;

    // Sweep axes; an empty axis means "the base value only".
    std::vector<int> sweep_ode_steps;
    std::vector<int> sweep_iterations;
    std::vector<double> sweep_step_size;
    std::vector<bool> sweep_projection;

    std::size_t n_images = 4;
    std::uint64_t data_seed = 0;
    std::vector<std::uint64_t> seeds{0};
    std::size_t histogram_bins = 20;
    std::size_t ssim_window = 7;
    std::string output_dir;
};

/// Sections [experiment], [solver], [sweep]; see README for the keys.
ExperimentConfig experiment_config_from(const KeyValueConfig& kv);
void validate(const ExperimentConfig& cfg);

struct SweepCell {
    std::string task;
    SolverConfig solver;

    std::string key() const;
};

/// Cartesian product task x N x K x eta x projection, in that nesting order.
std::vector<SweepCell> expand_cells(const ExperimentConfig& cfg);

struct SolveRecord {
    std::size_t cell = 0;
    std::size_t image = 0;
    std::uint64_t seed = 0;
    std::string status = "ok";  // or the error class
    double final_loss = 0.0;
    ImageScore restored;
    ImageScore degraded;  // back-projected observation vs ground truth
};

struct CellSummary {
    SweepCell cell;
    MetricReport restored;
    MetricReport degraded;
    std::size_t failures = 0;
    double improved_fraction = 0.0;  // share of ok solves with restored PSNR > degraded PSNR
};

struct ExperimentResult {
    std::vector<SweepCell> cells;
    std::vector<SolveRecord> records;
    std::vector<CellSummary> summaries;
    std::string records_csv;
    std::string summary_csv;
    std::string histogram_csv;
    std::string summary_svg;
};

/// Ground-truth images i = 0..n_images-1, drawn from Rng(data_seed).split(i).
std::vector<Vector> experiment_images(const ToyDataset& dataset, std::size_t n_images, std::uint64_t data_seed);

/// Runs every cell x image x seed. Observation noise for (image i, seed s)
/// comes from Rng(s).split(2i) and the solver start from Rng(s).split(2i + 1),
/// so cells see identical observations. Solver failures are recorded and the
/// run continues. Writes records.csv, summary.csv, histogram.csv and
/// summary.svg when output_dir is set.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const VelocityFieldParams& params);

/// Loads cfg.checkpoint; a missing file is a ConfigurationError.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct SolverComparisonRow {
    std::string cell;
    std::size_t image = 0;
    double pflow_ms = 0.0;
    double dflow_ms = 0.0;
    long pflow_tapes = 0;
    long dflow_tapes = 0;
    long pflow_forward = 0;
    long dflow_forward = 0;
    long dflow_backward = 0;
    double wall_ratio = 0.0;  // dflow_ms / pflow_ms
};

struct SolverComparison {
    std::vector<SolverComparisonRow> rows;
    std::string csv;
};

/// Runs pflow and dflow on identical observations and starts for every cell
/// and image (first seed only) and reports wall time and peak tapes.
SolverComparison compare_solvers(const ExperimentConfig& cfg, const VelocityFieldParams& params);

}  // namespace pflow
