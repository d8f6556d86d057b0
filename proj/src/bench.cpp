#include "tpmkex/bench.hpp"

#include "tpmkex/input_gen.hpp"
#include "tpmkex/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

namespace tpmkex {

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

SyncBatch run_sync_trials(const ExperimentConfig& config) {
    if (config.trials < 1) throw ConfigError("trials must be >= 1");
    config.params.validate();
    SyncBatch batch;
    batch.config = config;
    batch.rows.resize(static_cast<std::size_t>(config.trials));
    parallel_trials(config.trials, config.jobs, [&](long trial) {
        const TrialSeeds seeds = trial_seeds(config.base_seed, trial);
        ExchangeConfig ec;
        ec.params = config.params;
        ec.input_seed = seeds.input;
        ec.weight_seed_a = seeds.weights_a;
        ec.weight_seed_b = seeds.weights_b;
        const ExchangeResult r = run_key_exchange(ec);
        SyncTrialRow row;
        row.trial = trial;
        row.failed = r.failed;
        row.oracle_sync = r.oracle_sync.value_or(-1);
        row.detected_sync = r.detected_sync.value_or(-1);
        row.packages = r.packages_per_direction;
        batch.rows[static_cast<std::size_t>(trial)] = row;
    });
    return batch;
}

Summary summarize(std::span<const std::int64_t> values) {
    Summary s;
    s.n = static_cast<long>(values.size());
    if (s.n == 0) return s;
    std::vector<std::int64_t> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    s.min = sorted.front();
    s.max = sorted.back();
    double sum = 0.0;
    for (std::int64_t v : sorted) sum += static_cast<double>(v);
    s.mean = sum / s.n;
    s.median = s.n % 2 == 1 ? static_cast<double>(sorted[s.n / 2])
                            : (static_cast<double>(sorted[s.n / 2 - 1]) +
                               static_cast<double>(sorted[s.n / 2])) /
                                  2.0;
    double sq = 0.0;
    for (std::int64_t v : sorted) {
        const double d = static_cast<double>(v) - s.mean;
        sq += d * d;
    }
    s.stddev = s.n > 1 ? std::sqrt(sq / (s.n - 1)) : 0.0;
    return s;
}

std::vector<HistogramBin> histogram(std::span<const std::int64_t> values,
                                    std::int64_t bin_width) {
    std::vector<HistogramBin> bins;
    if (values.empty() || bin_width <= 0) return bins;
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const std::int64_t lo = (*lo_it / bin_width) * bin_width;
    const std::int64_t hi = *hi_it;
    for (std::int64_t b = lo; b <= hi; b += bin_width)
        bins.push_back({b, 0});
    for (std::int64_t v : values)
        ++bins[static_cast<std::size_t>((v - lo) / bin_width)].count;
    return bins;
}

int smoothed_mode_count(const std::vector<HistogramBin>& bins) {
    const int n = static_cast<int>(bins.size());
    if (n == 0) return 0;
    std::vector<double> smooth(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        int cnt = 0;
        for (int d = -1; d <= 1; ++d) {
            if (i + d < 0 || i + d >= n) continue;
            sum += static_cast<double>(bins[static_cast<std::size_t>(i + d)].count);
            ++cnt;
        }
        smooth[static_cast<std::size_t>(i)] = sum / cnt;
    }
    const double peak = *std::max_element(smooth.begin(), smooth.end());
    const double floor = peak * 0.05;
    int modes = 0;
    int i = 0;
    while (i < n) {
        // treat equal neighbours as one plateau
        int j = i;
        while (j + 1 < n && smooth[j + 1] == smooth[i]) ++j;
        const bool rises = i == 0 || smooth[i - 1] < smooth[i];
        const bool falls = j == n - 1 || smooth[j + 1] < smooth[i];
        if (rises && falls && smooth[i] > floor) ++modes;
        i = j + 1;
    }
    return modes;
}

std::vector<std::int64_t> oracle_times(const SyncBatch& batch) {
    // Weight equality is observed by the simulation even when the protocol
    // later gives up on detection, so failed trials still contribute.
    std::vector<std::int64_t> out;
    for (const SyncTrialRow& row : batch.rows)
        if (row.oracle_sync >= 0) out.push_back(row.oracle_sync);
    return out;
}

std::vector<std::int64_t> detected_times(const SyncBatch& batch) {
    std::vector<std::int64_t> out;
    for (const SyncTrialRow& row : batch.rows)
        if (!row.failed && row.detected_sync >= 0)
            out.push_back(row.detected_sync);
    return out;
}

long failed_count(const SyncBatch& batch) {
    long n = 0;
    for (const SyncTrialRow& row : batch.rows) n += row.failed ? 1 : 0;
    return n;
}

namespace {

void write_csv_header(std::ostream& out, bool attack) {
    out << "trial,K,N,L,b,t_min,oracle_sync_iters,detected_sync_iters,"
           "packages,failed";
    if (attack) out << ",attacker_overlap_mean,attacker_frac_equal";
    out << "\n";
}

void write_csv_prefix(std::ostream& out, const TpmParams& p, long trial,
                      std::int64_t oracle, std::int64_t detected,
                      std::int64_t packages, bool failed) {
    out << trial << ',' << p.hidden_units << ',' << p.inputs_per_unit << ','
        << p.weight_bound << ',' << p.package_bits << ',' << p.sync_window
        << ',' << oracle << ',' << detected << ',' << packages << ','
        << (failed ? 1 : 0);
}

}  // namespace

void write_sync_csv(const SyncBatch& batch, std::ostream& out) {
    write_csv_header(out, false);
    for (const SyncTrialRow& row : batch.rows) {
        write_csv_prefix(out, batch.config.params, row.trial, row.oracle_sync,
                         row.detected_sync, row.packages, row.failed);
        out << "\n";
    }
}

void write_attack_csv(const AttackBatch& batch, std::ostream& out) {
    write_csv_header(out, true);
    for (std::size_t i = 0; i < batch.rows.size(); ++i) {
        const AttackResult& row = batch.rows[i];
        write_csv_prefix(out, batch.params, static_cast<long>(i),
                         row.party_oracle_sync, row.party_detected_sync,
                         row.packages, row.failed);
        out << ',' << fixed6(row.overlap_mean) << ',' << fixed6(row.frac_equal)
            << "\n";
    }
}

std::string sync_summary_text(const SyncBatch& batch) {
    std::ostringstream out;
    const auto oracle = oracle_times(batch);
    const auto detected = detected_times(batch);
    const Summary so = summarize(oracle);
    const Summary sd = summarize(detected);
    const TpmParams& p = batch.config.params;
    out << "sync trials: " << batch.rows.size() << "  (K=" << p.hidden_units
        << " N=" << p.inputs_per_unit << " L=" << p.weight_bound
        << " b=" << p.package_bits << " t_min=" << p.sync_window << ")\n";
    out << "watchdog failures: " << failed_count(batch) << "\n";
    out << "oracle sync iters:   mean=" << fixed2(so.mean)
        << " median=" << fixed2(so.median) << " std=" << fixed2(so.stddev)
        << " min=" << so.min << " max=" << so.max << "\n";
    out << "detected sync iters: mean=" << fixed2(sd.mean)
        << " median=" << fixed2(sd.median) << " std=" << fixed2(sd.stddev)
        << " min=" << sd.min << " max=" << sd.max << "\n";
    const std::int64_t width = 50;
    const auto bins = histogram(oracle, width);
    long peak = 1;
    for (const auto& bin : bins) peak = std::max(peak, bin.count);
    out << "oracle sync histogram (bin " << width << "):\n";
    for (const auto& bin : bins) {
        out << "  " << bin.lo << "-" << bin.lo + width - 1 << " " << bin.count
            << " ";
        const int stars = static_cast<int>(60 * bin.count / peak);
        for (int i = 0; i < stars; ++i) out << '*';
        out << "\n";
    }
    out << "modes after smoothing: " << smoothed_mode_count(bins)
        << "\n";
    return out.str();
}

namespace {

ScalingPoint scaling_point(const ExperimentConfig& config, int value) {
    const SyncBatch batch = run_sync_trials(config);
    ScalingPoint point;
    point.value = value;
    point.oracle = summarize(oracle_times(batch));
    point.detected = summarize(detected_times(batch));
    point.failed = failed_count(batch);
    return point;
}

}  // namespace

double fit_power_exponent(std::span<const double> x,
                          std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ConfigError("power-law fit needs at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

ScalingResult run_scaling_l(const ExperimentConfig& config) {
    ScalingResult result;
    std::vector<double> ls, means;
    std::ostringstream table;
    table << "L,trials,mean_oracle,median_oracle,std_oracle,failed\n";
    for (int l = 2; l <= 6; ++l) {
        ExperimentConfig point_config = config;
        point_config.params.weight_bound = l;
        point_config.params.watchdog_limit = config.params.watchdog_limit;
        const ScalingPoint point = scaling_point(point_config, l);
        result.points.push_back(point);
        if (point.oracle.n > 0) {
            ls.push_back(static_cast<double>(l));
            means.push_back(point.oracle.mean);
        }
        table << l << ',' << point.oracle.n << ',' << fixed2(point.oracle.mean)
              << ',' << fixed2(point.oracle.median) << ','
              << fixed2(point.oracle.stddev) << ',' << point.failed << "\n";
    }
    if (ls.size() >= 2) {
        result.exponent = fit_power_exponent(ls, means);
        table << "power-law exponent: " << fixed6(*result.exponent) << "\n";
    } else {
        table << "power-law exponent: insufficient data for a stable fit\n";
    }
    result.table = table.str();
    return result;
}

ScalingResult run_scaling_n(const ExperimentConfig& config) {
    static constexpr int kSweep[] = {10, 30, 100, 300, 1000};
    ScalingResult result;
    std::ostringstream table;
    table << "N,trials,mean_oracle,median_oracle,std_oracle,failed,"
             "ratio_vs_first\n";
    double first_mean = 0.0;
    for (int n : kSweep) {
        ExperimentConfig point_config = config;
        point_config.params.inputs_per_unit = n;
        const ScalingPoint point = scaling_point(point_config, n);
        result.points.push_back(point);
        if (first_mean == 0.0) first_mean = point.oracle.mean;
        table << n << ',' << point.oracle.n << ',' << fixed2(point.oracle.mean)
              << ',' << fixed2(point.oracle.median) << ','
              << fixed2(point.oracle.stddev) << ',' << point.failed << ','
              << fixed6(first_mean > 0 ? point.oracle.mean / first_mean : 0.0)
              << "\n";
    }
    result.table = table.str();
    return result;
}

ThroughputResult throughput_model(const ThroughputInputs& inputs) {
    if (inputs.avg_iterations_per_key <= 0)
        throw ConfigError("avg_iterations_per_key must be positive");
    if (inputs.package_bits <= 0)
        throw ConfigError("package_bits must be positive");
    if (inputs.overhead_bits_per_package < 0)
        throw ConfigError("overhead bits must be non-negative");
    if (inputs.bandwidth_bps && *inputs.bandwidth_bps <= 0)
        throw ConfigError("bandwidth must be positive");
    if (inputs.compute_iterations_per_sec &&
        *inputs.compute_iterations_per_sec <= 0)
        throw ConfigError("compute rate must be positive");
    if (!inputs.bandwidth_bps && !inputs.compute_iterations_per_sec)
        throw ConfigError("need a channel bandwidth or a compute rate");

    ThroughputResult r;
    r.packages_per_key =
        std::ceil(inputs.avg_iterations_per_key / inputs.package_bits);
    r.bits_per_key_per_direction =
        r.packages_per_key *
        (inputs.package_bits + inputs.overhead_bits_per_package);
    if (inputs.bandwidth_bps) {
        const double usable =
            *inputs.bandwidth_bps / (inputs.half_duplex ? 2.0 : 1.0);
        r.channel_limited = usable / r.bits_per_key_per_direction;
    }
    if (inputs.compute_iterations_per_sec)
        r.compute_limited =
            *inputs.compute_iterations_per_sec / inputs.avg_iterations_per_key;
    r.effective = r.channel_limited.value_or(
        std::numeric_limits<double>::infinity());
    if (r.compute_limited) r.effective = std::min(r.effective, *r.compute_limited);
    return r;
}

}  // namespace tpmkex
