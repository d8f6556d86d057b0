// Command-line experiment runner and live key-exchange endpoint.
//
// Exit codes: 0 success, 2 synchronization error (watchdog), 3 transport or
// protocol failure, 4 configuration error.

#include "tpmkex/bench.hpp"
#include "tpmkex/input_gen.hpp"
#include "tpmkex/session.hpp"
#include "tpmkex/transport.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace tpmkex;

constexpr int kExitOk = 0;
constexpr int kExitSyncError = 2;
constexpr int kExitTransport = 3;
constexpr int kExitConfig = 4;

std::uint32_t parse_seed(const std::string& hex) {
    try {
        const unsigned long v = std::stoul(hex, nullptr, 16);
        if (v > 0xFFFFFFFFul) throw ConfigError("seed does not fit 32 bits");
        return static_cast<std::uint32_t>(v);
    } catch (const std::logic_error&) {
        throw ConfigError("seed must be a 32-bit hex value, got '" + hex + "'");
    }
}

void write_csv_file(const std::string& path,
                    const std::function<void(std::ostream&)>& writer) {
    if (path.empty()) return;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open CSV output file '" + path + "'");
    writer(out);
}

int run_exchange_mode(const TpmParams& params, const std::string& listen,
                      const std::string& connect,
                      std::optional<std::uint32_t> seed,
                      std::optional<std::uint32_t> weight_seed,
                      bool authenticated, int rekey, bool full_reset) {
    if (listen.empty() == connect.empty())
        throw ConfigError(
            "exchange mode needs exactly one of --listen or --connect");
    if (rekey < 1) throw ConfigError("--rekey must be >= 1");
    PartyConfig config;
    config.params = params;
    config.connector = !connect.empty();
    config.input_seed = seed;
    config.authenticated = authenticated;
    config.key_target = rekey;
    config.full_reset = full_reset;
    // The weight seed is each party's private secret; derive a role-specific
    // default so the two ends never collide when left unset.
    const std::uint32_t base = seed.value_or(0x5EED5EEDu);
    config.weight_seed = weight_seed.value_or(
        derive_seed(base, config.connector ? 0x0A0A0A0Au : 0x0B0B0B0Bu));

    std::unique_ptr<Channel> channel;
    if (config.connector) {
        channel = connect_channel(connect);
    } else {
        Listener listener(listen);
        channel = listener.accept_one();
    }
    const PartyOutcome outcome = run_party(config, *channel);
    for (std::size_t i = 0; i < outcome.keys.size(); ++i)
        std::printf("key %zu: %s\n", i, outcome.keys[i].fingerprint().c_str());
    std::printf("detected sync: %lld bits\n",
                static_cast<long long>(outcome.detected_sync.value_or(-1)));
    std::printf("iterations: %lld\n",
                static_cast<long long>(outcome.iterations));
    std::printf("packages per direction: %lld\n",
                static_cast<long long>(outcome.packages));
    channel->close();
    return kExitOk;
}

int real_main(int argc, char** argv) {
    CLI::App app{
        "Tree parity machine key exchange: simulator, attacks, benchmarks"};

    std::string mode;
    app.add_option("--mode", mode,
                   "sync | scaling-L | scaling-N | attack | throughput | "
                   "exchange")
        ->required()
        ->check(CLI::IsMember({"sync", "scaling-L", "scaling-N", "attack",
                               "throughput", "exchange"}));

    TpmParams params;
    long watchdog = 0;
    app.add_option("--k", params.hidden_units, "hidden units (K)");
    app.add_option("--n", params.inputs_per_unit, "inputs per hidden unit (N)");
    app.add_option("--l", params.weight_bound, "weight bound (L)");
    app.add_option("--b", params.package_bits, "bit package size");
    app.add_option("--tmin", params.sync_window, "sync window in output bits");
    app.add_option("--watchdog", watchdog,
                   "iteration budget (0 = 10x expected sync time)");

    long trials = 100;
    std::string seed_hex = "c0ffee01";
    std::string out_path;
    int jobs = 0;
    app.add_option("--trials", trials, "Monte-Carlo trials");
    app.add_option("--seed", seed_hex, "base seed, 32-bit hex");
    app.add_option("--out", out_path, "CSV output path");
    app.add_option("--jobs", jobs, "worker threads (0 = hardware)");

    std::string strategy_name = "flipping";
    app.add_option("--strategy", strategy_name, "attack strategy")
        ->check(CLI::IsMember({"naive", "flipping"}));

    double t_avg = 400.0;
    double overhead_bits = 88.0;
    double bandwidth = 0.0;
    double compute_rate = 0.0;
    bool half_duplex = false;
    app.add_option("--t-avg", t_avg, "average iterations per key");
    app.add_option("--overhead-bits", overhead_bits,
                   "framing overhead bits per package per direction");
    app.add_option("--bandwidth-bps", bandwidth,
                   "channel rate in bit/s (0 = unlimited)");
    app.add_option("--compute-rate", compute_rate,
                   "iteration rate cap in 1/s (0 = unlimited)");
    app.add_flag("--half-duplex", half_duplex,
                 "both directions share the channel bandwidth");

    std::string listen_addr, connect_addr;
    std::string weight_seed_hex;
    bool authenticated = false;
    bool full_reset = false;
    int rekey = 1;
    app.add_option("--listen", listen_addr, "host:port to accept one peer");
    app.add_option("--connect", connect_addr, "host:port of the listening peer");
    app.add_option("--weight-seed", weight_seed_hex,
                   "private initial-weight seed, 32-bit hex");
    app.add_flag("--authenticated", authenticated,
                 "treat the input seed as a pre-shared secret (never sent)");
    app.add_flag("--full-reset", full_reset,
                 "restart from fresh weights after each delivered key");
    app.add_option("--rekey", rekey, "number of keys to exchange");

    app.parse(argc, argv);

    params.watchdog_limit = watchdog;
    params.validate();
    const std::uint32_t base_seed = parse_seed(seed_hex);

    ExperimentConfig config;
    config.params = params;
    config.trials = trials;
    config.base_seed = base_seed;
    config.jobs = jobs;

    if (mode == "sync") {
        const SyncBatch batch = run_sync_trials(config);
        write_csv_file(out_path,
                       [&](std::ostream& o) { write_sync_csv(batch, o); });
        std::cout << sync_summary_text(batch);
    } else if (mode == "scaling-L") {
        const ScalingResult result = run_scaling_l(config);
        std::cout << result.table;
        write_csv_file(out_path, [&](std::ostream& o) { o << result.table; });
    } else if (mode == "scaling-N") {
        const ScalingResult result = run_scaling_n(config);
        std::cout << result.table;
        write_csv_file(out_path, [&](std::ostream& o) { o << result.table; });
    } else if (mode == "attack") {
        const AttackStrategy strategy = strategy_name == "naive"
                                            ? AttackStrategy::Naive
                                            : AttackStrategy::Flipping;
        const AttackBatch batch =
            run_attack_experiment(params, strategy, trials, base_seed, jobs);
        write_csv_file(out_path,
                       [&](std::ostream& o) { write_attack_csv(batch, o); });
        const AttackSummary& s = batch.summary;
        std::printf("attack trials: %ld (%s), failed: %ld\n", s.trials,
                    strategy_name.c_str(), s.failed);
        std::printf("success_98 rate: %.4f\n", s.success98_rate);
        std::printf("full agreement at party sync: %.4f\n",
                    s.full_agree_at_sync_rate);
        std::printf("mean overlap at party sync: %.4f\n", s.mean_overlap);
        std::printf("mean frac_equal at party sync: %.4f\n", s.mean_frac_equal);
        std::printf("attacker slower than parties: %.4f\n",
                    s.attacker_slower_rate);
        std::printf("mean time ratio: %.4f\n", s.mean_time_ratio);
    } else if (mode == "throughput") {
        ThroughputInputs inputs;
        inputs.avg_iterations_per_key = t_avg;
        inputs.package_bits = params.package_bits;
        inputs.overhead_bits_per_package = overhead_bits;
        if (bandwidth > 0) inputs.bandwidth_bps = bandwidth;
        inputs.half_duplex = half_duplex;
        if (compute_rate > 0) inputs.compute_iterations_per_sec = compute_rate;
        const ThroughputResult r = throughput_model(inputs);
        std::printf("packages per key: %.0f\n", r.packages_per_key);
        std::printf("bits per key per direction: %.0f\n",
                    r.bits_per_key_per_direction);
        if (r.channel_limited)
            std::printf("channel-limited: %.3f keys/s\n", *r.channel_limited);
        else
            std::printf("channel-limited: unlimited\n");
        if (r.compute_limited)
            std::printf("compute-limited: %.3f keys/s\n", *r.compute_limited);
        else
            std::printf("compute-limited: unlimited\n");
        std::printf("effective: %.3f keys/s\n", r.effective);
    } else if (mode == "exchange") {
        std::optional<std::uint32_t> seed;
        std::optional<std::uint32_t> weight_seed;
        if (app.count("--seed") > 0) seed = base_seed;
        if (!weight_seed_hex.empty()) weight_seed = parse_seed(weight_seed_hex);
        return run_exchange_mode(params, listen_addr, connect_addr, seed,
                                 weight_seed, authenticated, rekey, full_reset);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return real_main(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return CLI::App().exit(e);
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const SyncError& e) {
        std::cerr << "sync error: " << e.what() << " (after " << e.iterations
                  << " iterations)\n";
        return kExitSyncError;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitTransport;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitTransport;
    }
}
