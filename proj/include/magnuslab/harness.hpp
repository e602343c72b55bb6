#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "magnuslab/matkit.hpp"
#include "magnuslab/randpath.hpp"

// Monte Carlo experiment driver: runs the Magnus orders against their
// references on shared noise, collects time-averaged relative errors and
// their empirical CDFs, splits timings into logarithm and exponential
// stages, and writes the CSV artifacts.

namespace magnuslab {

enum class Experiment {
    sde_const,
    sde_triangular,
    sde_triangular_normalized,
    spde_heat,
    moments
};

const char* experiment_name(Experiment e);
// Accepts the CLI spellings: sde-const, sde-triangular,
// sde-triangular-normalized, spde-heat, moments.
Experiment parse_experiment(const std::string& name);

// Negative numbers, empty vectors and an all-zero domain mean "use the
// experiment's default"; resolve_defaults fills them in.
struct ExperimentConfig {
    Experiment experiment = Experiment::sde_const;
    double t_final = -1.0;
    double dt_euler = -1.0;
    double dt_magnus = -1.0;
    std::int64_t samples = -1;
    std::uint64_t seed = 12345;
    std::vector<int> orders;
    std::string out_dir;  // empty = keep results in memory only
    int d = -1;
    double domain_lo = 0.0;
    double domain_hi = 0.0;
    double a_coef = -1.0;
    double sigma_coef = -1.0;
    int kappa = -1;
    std::vector<double> report_times;
    int threads = 1;
    bool dump_paths = false;
    // Scales the drift of the constant-coefficient experiment; zero turns
    // it into the exactly solvable case with exp(A W_t - A^2 t / 2) as
    // the reference.
    double b_scale = 1.0;
    // Whether the Euler scheme appears among the reported methods where it
    // is not already the reference.
    bool with_euler = true;
};

ExperimentConfig resolve_defaults(const ExperimentConfig& cfg);
std::string config_json(const ExperimentConfig& cfg);

// Per-sample realizations of Err_t for one method at one report time.
struct ErrorStats {
    std::string method;
    double t = 0.0;
    std::vector<double> samples;  // in sample-index order
    double mean = 0.0;
    std::vector<double> sorted;   // CDF support
};

// CPU seconds accumulated over all samples; the split columns stay zero
// for iterative schemes that have no logarithm/exponential stages.
struct TimingReport {
    std::string method;
    double log_s = 0.0;
    double expm_s = 0.0;
    double total_s = 0.0;
};

// Element-wise moment estimate E[(X_ij)^k] at the terminal time.
struct MomentRow {
    std::string method;
    int k = 1;
    Matrix value;
};

struct ExperimentResult {
    ExperimentConfig config;  // resolved
    std::vector<ErrorStats> errors;
    std::vector<TimingReport> timings;
    std::vector<MomentRow> moments;
    // First exit times of the highest-order trajectory from the
    // logarithm's neighborhood, +infinity when censored (constant-
    // coefficient experiment only).
    std::vector<double> taus;
};

// Time-averaged relative Frobenius error (Delta/t) sum_{k=1..N}
// ||ref_k - app_k||_F / ||ref_k||_F; both arrays hold the values at
// t_1..t_N (the k = 0 term is excluded).
double err_t(const std::vector<Matrix>& ref, const std::vector<Matrix>& app,
             const TimeGrid& grid);

// Sorted sample values paired with cumulative probabilities k/M.
std::vector<std::pair<double, double>> empirical_cdf(const std::vector<double>& samples);

// The timing row of one method in a finished run, or null.
const TimingReport* timing_split(const ExperimentResult& run, const std::string& method);

// Runs the configured experiment; writes errors.csv, cdf_<method>_t<t>.csv,
// timings.csv and config.json (plus moments.csv and tau_cdf.csv where
// applicable) into out_dir when it is set.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace magnuslab
