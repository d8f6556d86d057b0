// Experiment runner and reporting: synchronization-time statistics, scaling
// sweeps, attack sweeps, and the analytic key-exchange throughput model.
// Every experiment is a pure function of its configuration, including the
// base seed, so re-runs produce byte-identical CSV.

#pragma once

#include "tpmkex/attacks.hpp"
#include "tpmkex/session.hpp"
#include "tpmkex/tpm.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tpmkex {

struct ExperimentConfig {
    TpmParams params;
    long trials = 100;
    std::uint32_t base_seed = 0xC0FFEE01u;
    int jobs = 0;  // 0 = one worker per hardware thread
};

struct SyncTrialRow {
    long trial = 0;
    std::int64_t oracle_sync = -1;    // -1 when unobserved or failed
    std::int64_t detected_sync = -1;  // -1 when failed
    std::int64_t packages = 0;
    bool failed = false;
};

struct SyncBatch {
    ExperimentConfig config;
    std::vector<SyncTrialRow> rows;
};

/// Independent exchanges with per-trial derived seeds.
SyncBatch run_sync_trials(const ExperimentConfig& config);

struct Summary {
    long n = 0;
    double mean = 0.0;
    double median = 0.0;
    double stddev = 0.0;
    std::int64_t min = 0;
    std::int64_t max = 0;
};

Summary summarize(std::span<const std::int64_t> values);

struct HistogramBin {
    std::int64_t lo = 0;  // [lo, lo + width)
    long count = 0;
};

std::vector<HistogramBin> histogram(std::span<const std::int64_t> values,
                                    std::int64_t bin_width);

/// Number of local maxima after a 3-bin moving average, ignoring peaks under
/// 5% of the tallest bin. 1 means the distribution looks unimodal.
int smoothed_mode_count(const std::vector<HistogramBin>& bins);

std::vector<std::int64_t> oracle_times(const SyncBatch& batch);
std::vector<std::int64_t> detected_times(const SyncBatch& batch);
long failed_count(const SyncBatch& batch);

void write_sync_csv(const SyncBatch& batch, std::ostream& out);
void write_attack_csv(const AttackBatch& batch, std::ostream& out);
std::string sync_summary_text(const SyncBatch& batch);

struct ScalingPoint {
    int value = 0;  // the swept L or N
    Summary oracle;
    Summary detected;
    long failed = 0;
};

struct ScalingResult {
    std::vector<ScalingPoint> points;
    std::optional<double> exponent;  // power-law fit over the sweep, if any
    std::string table;
};

/// Sweep L over {2..6} at fixed (K, N) and fit log(mean) against log(L).
ScalingResult run_scaling_l(const ExperimentConfig& config);

/// Sweep N over {10, 30, 100, 300, 1000} at fixed (K, L); reports ratios.
ScalingResult run_scaling_n(const ExperimentConfig& config);

/// Least-squares slope of log(y) against log(x).
double fit_power_exponent(std::span<const double> x, std::span<const double> y);

struct ThroughputInputs {
    double avg_iterations_per_key = 400.0;
    int package_bits = 32;
    double overhead_bits_per_package = 88.0;  // this stack's 11-byte frame
    std::optional<double> bandwidth_bps;      // empty = unlimited channel
    bool half_duplex = false;
    std::optional<double> compute_iterations_per_sec;  // empty = unlimited
};

struct ThroughputResult {
    double packages_per_key = 0.0;
    double bits_per_key_per_direction = 0.0;
    std::optional<double> channel_limited;  // keys per second
    std::optional<double> compute_limited;  // keys per second
    double effective = 0.0;                 // min over the present limits
};

/// Analytic key-rate model: ceil(t_avg / b) packages per key, each costing
/// b + overhead bits per direction; the channel bound divides the (half- or
/// full-duplex) bandwidth by that, the compute bound divides the iteration
/// rate by t_avg.
ThroughputResult throughput_model(const ThroughputInputs& inputs);

}  // namespace tpmkex
