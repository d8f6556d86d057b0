// Acceptance suite: runs every stated criterion at its stated tolerance and
// prints one pass/fail line per criterion. Exit code is the number of
// failing criteria.

#include "tpmkex/attacks.hpp"
#include "tpmkex/bench.hpp"
#include "tpmkex/input_gen.hpp"
#include "tpmkex/parallel.hpp"
#include "tpmkex/session.hpp"
#include "tpmkex/transport.hpp"

#include "support/literal_oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <exception>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace tpmkex;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool pass,
            const std::string& detail) {
    if (!pass) ++failures;
    std::printf("[%s] criterion %2d: %s — %s\n", pass ? "PASS" : "FAIL", id,
                name.c_str(), detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof buf, format, args);
    va_end(args);
    return buf;
}

constexpr std::uint32_t kBaseSeed = 0xC0FFEE01u;

TpmParams base_params() { return TpmParams{}; }  // K=3 N=100 L=3 b=32 t_min=96

struct BaseTrial {
    bool failed = false;
    bool keys_equal = false;
    std::int64_t oracle = -1;
    std::int64_t detected = -1;
};

// The 1000-exchange base batch shared by criteria 1, 2 and 5.
std::vector<BaseTrial> run_base_batch(long trials) {
    std::vector<BaseTrial> out(static_cast<std::size_t>(trials));
    parallel_trials(trials, 0, [&](long trial) {
        const TrialSeeds seeds = trial_seeds(kBaseSeed, trial);
        ExchangeConfig config;
        config.params = base_params();
        config.input_seed = seeds.input;
        config.weight_seed_a = seeds.weights_a;
        config.weight_seed_b = seeds.weights_b;
        const ExchangeResult r = run_key_exchange(config);
        BaseTrial& t = out[static_cast<std::size_t>(trial)];
        t.failed = r.failed;
        t.keys_equal = !r.failed && r.keys_a.size() == 1 &&
                       r.keys_b.size() == 1 && r.keys_a[0] == r.keys_b[0];
        t.oracle = r.oracle_sync.value_or(-1);
        t.detected = r.detected_sync.value_or(-1);
    });
    return out;
}

struct PackageEqualityTap : PackageTap {
    bool all_equal = true;
    void on_round(const RoundView& round) override {
        if (!(round.package_a == round.package_b)) all_equal = false;
    }
};

struct TranscriptTap : PackageTap {
    std::vector<BitPackage> from_a, from_b;
    PackageTap* chained = nullptr;
    void on_round(const RoundView& round) override {
        from_a.push_back(round.package_a);
        from_b.push_back(round.package_b);
        if (chained) chained->on_round(round);
    }
};

struct PartyRun {
    PartyOutcome outcome;
    std::exception_ptr error;
};

void drive_party(const PartyConfig& config, Channel& channel, PartyRun& out) {
    try {
        out.outcome = run_party(config, channel);
    } catch (...) {
        out.error = std::current_exception();
        channel.close();  // unblock the peer, as process teardown would
    }
}

void criterion_1_2_5() {
    const long trials = 1000;
    const auto start = std::chrono::steady_clock::now();
    const std::vector<BaseTrial> batch = run_base_batch(trials);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();

    long failed = 0, mismatched = 0;
    std::vector<std::int64_t> oracle, detected;
    for (const BaseTrial& t : batch) {
        if (t.failed)
            ++failed;
        else if (!t.keys_equal)
            ++mismatched;
        if (t.oracle >= 0) oracle.push_back(t.oracle);
        if (!t.failed && t.detected >= 0) detected.push_back(t.detected);
    }
    const double fail_rate = static_cast<double>(failed) / trials;
    const bool c1 = mismatched == 0 && fail_rate < 0.01 && seconds < 120.0;
    report(1, "key agreement correctness", c1,
           fmt("%ld trials in %.1f s: %ld watchdog failures (%.2f%%), %ld key "
               "mismatches among successes (target: <1%% failures, 0 mismatches)",
               trials, seconds, failed, 100.0 * fail_rate, mismatched));

    const Summary so = summarize(oracle);
    const Summary sd = summarize(detected);
    const auto bins = histogram(oracle, 50);
    const int modes = smoothed_mode_count(bins);
    std::printf("  oracle sync histogram (bin width 50):\n");
    long peak = 1;
    for (const auto& b : bins) peak = std::max(peak, b.count);
    for (const auto& b : bins) {
        std::printf("    %5lld-%5lld %5ld ", static_cast<long long>(b.lo),
                    static_cast<long long>(b.lo + 49), b.count);
        for (int i = 0; i < static_cast<int>(50 * b.count / peak); ++i)
            std::printf("*");
        std::printf("\n");
    }
    const bool c2 = so.mean >= 300.0 && so.mean <= 550.0 && modes == 1;
    report(2, "sync-time distribution", c2,
           fmt("oracle mean %.1f (target: [300, 550]), median %.1f, %d mode(s) "
               "after smoothing; detected mean %.1f",
               so.mean, so.median, modes, sd.mean));

    const double key_bits = 3.0 * 100.0 * 3.0;
    const bool c5 = so.mean < key_bits;
    report(5, "bits vs key size", c5,
           fmt("oracle mean %.1f output bits < key size %.0f bits "
               "(detected mean %.1f for comparison)",
               so.mean, key_bits, sd.mean));
}

void criterion_3() {
    ExperimentConfig config;
    config.params = base_params();
    config.trials = 300;
    config.base_seed = kBaseSeed;
    const ScalingResult sweep = run_scaling_l(config);
    double mean_l3 = 0, mean_l4 = 0;
    for (const ScalingPoint& p : sweep.points) {
        if (p.value == 3) mean_l3 = p.oracle.mean;
        if (p.value == 4) mean_l4 = p.oracle.mean;
    }
    const double ratio = mean_l4 / mean_l3;
    const double exponent = sweep.exponent.value_or(0.0);
    const bool pass = ratio >= 1.5 && ratio <= 3.0 && exponent >= 1.5 &&
                      exponent <= 2.5;
    report(3, "L-scaling", pass,
           fmt("mean(L=4)/mean(L=3) = %.2f (target: [1.5, 3.0]); power-law "
               "exponent over L in {2..6} = %.2f (target: [1.5, 2.5])",
               ratio, exponent));
}

void criterion_4() {
    ExperimentConfig config;
    config.params = base_params();
    config.trials = 300;
    config.base_seed = kBaseSeed;
    const ScalingResult sweep = run_scaling_n(config);
    double mean_100 = 0, mean_1000 = 0;
    for (const ScalingPoint& p : sweep.points) {
        if (p.value == 100) mean_100 = p.oracle.mean;
        if (p.value == 1000) mean_1000 = p.oracle.mean;
    }
    const double ratio = mean_1000 / mean_100;
    report(4, "N-independence", ratio < 1.5,
           fmt("mean(N=1000)/mean(N=100) = %.2f (target: < 1.5)", ratio));
}

void criterion_6() {
    const long trials = 100;
    const std::int64_t extra_iterations = 10000;
    std::vector<int> ok(static_cast<std::size_t>(trials), 0);
    parallel_trials(trials, 0, [&](long trial) {
        const TrialSeeds seeds = trial_seeds(kBaseSeed ^ 0x600Du, trial);
        ExchangeConfig config;
        config.params = base_params();
        config.params.watchdog_limit = 60000;  // permanence, not detection
        config.input_seed = seeds.input;
        config.weight_seed_a = seeds.weights_a;
        config.weight_seed_b = seeds.weights_b;
        SimulationDriver driver(config);
        const ExchangeResult r = driver.run();
        if (r.failed) return;
        PackageEqualityTap tap;
        driver.set_tap(&tap);
        bool weights_equal = true;
        const std::int64_t rounds =
            (extra_iterations + config.params.package_bits - 1) /
            config.params.package_bits;
        for (std::int64_t i = 0; i < rounds; ++i) {
            driver.step_round();
            if (!(driver.party_a().weights() == driver.party_b().weights())) {
                weights_equal = false;
                break;
            }
        }
        ok[static_cast<std::size_t>(trial)] =
            weights_equal && tap.all_equal ? 1 : 0;
    });
    long passed = 0;
    for (int v : ok) passed += v;
    report(6, "post-sync permanence", passed == trials,
           fmt("%ld/%ld trials kept weights equal and outputs agreeing over "
               "10^4 further iterations (target: 100%%)",
               passed, trials));
}

void criterion_7() {
    // (a) strict passivity
    ExchangeConfig config;
    config.params = base_params();
    config.params.watchdog_limit = 40000;
    config.input_seed = 0x7A000001u;
    config.weight_seed_a = 0x7A000002u;
    config.weight_seed_b = 0x7A000003u;
    TranscriptTap baseline;
    SimulationDriver without(config);
    without.set_tap(&baseline);
    const ExchangeResult r0 = without.run();
    TranscriptTap tapped;
    PackagedAttacker attacker(config.params, AttackStrategy::Flipping,
                              config.input_seed, 0x7A000004u);
    tapped.chained = &attacker;
    SimulationDriver with(config);
    with.set_tap(&tapped);
    const ExchangeResult r1 = with.run();
    const bool passive = baseline.from_a == tapped.from_a &&
                         baseline.from_b == tapped.from_b &&
                         r0.keys_a == r1.keys_a && r0.keys_b == r1.keys_b;
    report(7, "attackers are strictly passive (7a)", passive,
           passive ? "transcripts with and without an attacker are identical"
                   : "transcripts diverged");

    // (b) at L=4 both implemented attackers need longer than the parties
    // in >= 90% of trials
    TpmParams l4 = base_params();
    l4.weight_bound = 4;
    const AttackBatch slow_naive = run_attack_experiment(
        l4, AttackStrategy::Naive, 100, kBaseSeed ^ 0x7Bu, 0, 0);
    const AttackBatch slow_flip = run_attack_experiment(
        l4, AttackStrategy::Flipping, 100, kBaseSeed ^ 0x7Bu, 0, 0);
    const long valid_naive =
        slow_naive.summary.trials - slow_naive.summary.failed;
    const long valid_flip = slow_flip.summary.trials - slow_flip.summary.failed;
    const bool slower_ok = valid_naive >= 90 && valid_flip >= 90 &&
                           slow_naive.summary.attacker_slower_rate >= 0.90 &&
                           slow_flip.summary.attacker_slower_rate >= 0.90;
    report(7, "attacker slower at L=4 (7b)", slower_ok,
           fmt("attacker needed longer than the parties: naive %.1f%% of %ld, "
               "flipping %.1f%% of %ld valid trials (target: >= 90%%)",
               100.0 * slow_naive.summary.attacker_slower_rate, valid_naive,
               100.0 * slow_flip.summary.attacker_slower_rate, valid_flip));

    // (c) flipping beats naive on mean overlap at party sync
    const AttackBatch naive = run_attack_experiment(
        base_params(), AttackStrategy::Naive, 200, kBaseSeed ^ 0x7Cu, 0, 1);
    const AttackBatch flipping = run_attack_experiment(
        base_params(), AttackStrategy::Flipping, 200, kBaseSeed ^ 0x7Cu, 0, 1);
    report(7, "flipping >= naive overlap (7c)",
           flipping.summary.mean_overlap >= naive.summary.mean_overlap,
           fmt("mean overlap at party sync: flipping %.4f vs naive %.4f over "
               "200 trials",
               flipping.summary.mean_overlap, naive.summary.mean_overlap));

    // (d) success_98 rate non-increasing in L over {1,2,3,4}
    std::vector<double> rates;
    std::string curve;
    for (int l = 1; l <= 4; ++l) {
        TpmParams p = base_params();
        p.weight_bound = l;
        const AttackBatch sweep = run_attack_experiment(
            p, AttackStrategy::Flipping, 300, kBaseSeed ^ 0x7Du, 0, 1);
        rates.push_back(sweep.summary.success98_rate);
        curve += fmt("L=%d: %.3f  ", l, sweep.summary.success98_rate);
    }
    bool monotone = true;
    for (std::size_t i = 1; i < rates.size(); ++i)
        if (rates[i] > rates[i - 1]) monotone = false;
    report(7, "success_98 non-increasing in L (7d)", monotone, curve);
}

void criterion_8() {
    ThroughputInputs i2c;
    i2c.avg_iterations_per_key = 400;
    i2c.package_bits = 32;
    i2c.overhead_bits_per_package = 0;
    i2c.bandwidth_bps = 400000;
    const ThroughputResult r1 = throughput_model(i2c);
    const double keys = r1.channel_limited.value_or(0);
    const bool near_1000 = keys >= 500.0 && keys <= 2000.0;  // factor 2

    ThroughputInputs pci;
    pci.avg_iterations_per_key = 400;
    pci.package_bits = 32;
    pci.overhead_bits_per_package = 0;
    pci.bandwidth_bps = 33.0e6 * 32.0;          // 32-bit bus at 33 MHz
    pci.compute_iterations_per_sec = 1.2e7;     // ~3e4 keys/s iteration engine
    const ThroughputResult r2 = throughput_model(pci);
    const bool compute_dominates = r2.compute_limited && r2.channel_limited &&
                                   *r2.compute_limited < *r2.channel_limited &&
                                   r2.effective == *r2.compute_limited;
    report(8, "throughput model", near_1000 && compute_dominates,
           fmt("400 kbps, zero overhead: %.1f keys/s (factor-2 window around "
               "1000); 33 MHz x 32 bit bus: compute-limited %.0f < "
               "channel-limited %.0f keys/s",
               keys, r2.compute_limited.value_or(0),
               r2.channel_limited.value_or(0)));
}

void criterion_9() {
    const auto start = std::chrono::steady_clock::now();
    long instances = 0;
    bool all_match = true;
    for (int K = 1; K <= 2 && all_match; ++K) {
        for (int N = 1; N <= 2 && all_match; ++N) {
            TpmParams p;
            p.hidden_units = K;
            p.inputs_per_unit = N;
            p.weight_bound = 1;
            const int cells = K * N;
            int weight_combos = 1;
            for (int c = 0; c < cells; ++c) weight_combos *= 3;
            for (int wi = 0; wi < weight_combos && all_match; ++wi) {
                WeightMatrix w(K, N);
                int acc = wi;
                for (int k = 0; k < K; ++k)
                    for (int j = 0; j < N; ++j) {
                        w.at(k, j) = acc % 3 - 1;
                        acc /= 3;
                    }
                std::vector<std::vector<int>> wr(static_cast<std::size_t>(K));
                for (int k = 0; k < K; ++k)
                    for (int j = 0; j < N; ++j) wr[k].push_back(w.at(k, j));
                for (int xi = 0; xi < (1 << cells) && all_match; ++xi) {
                    InputVector x(K, N);
                    std::vector<std::vector<int>> xr(static_cast<std::size_t>(K));
                    for (int c = 0; c < cells; ++c)
                        x.set(c / N, c % N, (xi >> c) & 1 ? 1 : -1);
                    for (int k = 0; k < K; ++k)
                        for (int j = 0; j < N; ++j) xr[k].push_back(x.at(k, j));
                    for (const Role role : {Role::A, Role::B}) {
                        const Evaluation e = evaluate(w, x, role);
                        const auto oe = literal_oracle::evaluate(
                            wr, xr, role == Role::A);
                        if (e.fields != oe.fields || e.hidden != oe.hidden ||
                            e.output != oe.output) {
                            all_match = false;
                            break;
                        }
                        for (const int peer : {-1, 1}) {
                            WeightMatrix updated = w;
                            hebbian_update(updated, x, e, peer, p);
                            const auto expected = literal_oracle::update(
                                wr, xr, oe, peer, 1);
                            std::vector<std::vector<int>> ur(
                                static_cast<std::size_t>(K));
                            for (int k = 0; k < K; ++k)
                                for (int j = 0; j < N; ++j)
                                    ur[k].push_back(updated.at(k, j));
                            if (ur != expected) {
                                all_match = false;
                                break;
                            }
                            ++instances;
                        }
                    }
                }
            }
        }
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    report(9, "oracle equivalence", all_match && seconds < 1.0,
           fmt("%ld exhaustive update instances matched the literal "
               "transcription in %.3f s",
               instances, seconds));
}

void criterion_10() {
    // round-trip identity on randomized frames
    SharedInputGenerator rng(0x10AD0001u);
    bool round_trip = true;
    for (int i = 0; i < 500 && round_trip; ++i) {
        static const FrameType kTypes[] = {
            FrameType::bit_package, FrameType::bp_ack,  FrameType::req_key,
            FrameType::key_cha,     FrameType::key_com, FrameType::sync_error,
            FrameType::hello};
        Frame f;
        f.type = kTypes[rng.next_word() % 7];
        f.seq = rng.next_word();
        f.payload.resize(rng.next_word() % 128);
        for (auto& b : f.payload) b = static_cast<std::uint8_t>(rng.next_word());
        round_trip = decode_frame(encode_frame(f)) == f;
    }

    // exhaustive single-bit corruption of a golden frame
    const Frame golden{FrameType::bit_package, 1, {0xDE, 0xAD, 0xBE, 0xEF}};
    const auto bytes = encode_frame(golden);
    long detected = 0;
    const long total = static_cast<long>(bytes.size()) * 8;
    for (std::size_t byte = 0; byte < bytes.size(); ++byte) {
        for (int bit = 0; bit < 8; ++bit) {
            auto corrupted = bytes;
            corrupted[byte] ^= static_cast<std::uint8_t>(1u << bit);
            try {
                (void)decode_frame(corrupted);
            } catch (const Error&) {
                ++detected;
            }
        }
    }

    // identical transcripts across loopback and socket transports
    std::vector<Frame> loop_a, loop_b, sock_a, sock_b;
    {
        auto [ca, cb] = loopback_pair();
        RecordingChannel ra(std::move(ca)), rb(std::move(cb));
        PartyConfig pa;
        pa.params = base_params();
        pa.params.watchdog_limit = 40000;
        pa.connector = true;
        pa.input_seed = 0x10AD0002u;
        pa.weight_seed = 0x10AD0003u;
        PartyConfig pb = pa;
        pb.connector = false;
        pb.input_seed.reset();
        pb.weight_seed = 0x10AD0004u;
        PartyRun run_a, run_b;
        std::thread tb([&] { drive_party(pb, rb, run_b); });
        drive_party(pa, ra, run_a);
        tb.join();
        loop_a = ra.sent;
        loop_b = rb.sent;
    }
    {
        Listener listener("127.0.0.1:0");
        std::unique_ptr<Channel> server;
        std::thread accepter([&] { server = listener.accept_one(); });
        auto client =
            connect_channel("127.0.0.1:" + std::to_string(listener.port()));
        accepter.join();
        RecordingChannel ra(std::move(client)), rb(std::move(server));
        PartyConfig pa;
        pa.params = base_params();
        pa.params.watchdog_limit = 40000;
        pa.connector = true;
        pa.input_seed = 0x10AD0002u;
        pa.weight_seed = 0x10AD0003u;
        PartyConfig pb = pa;
        pb.connector = false;
        pb.input_seed.reset();
        pb.weight_seed = 0x10AD0004u;
        PartyRun run_a, run_b;
        std::thread tb([&] { drive_party(pb, rb, run_b); });
        drive_party(pa, ra, run_a);
        tb.join();
        sock_a = ra.sent;
        sock_b = rb.sent;
    }
    const bool transcripts = loop_a == sock_a && loop_b == sock_b &&
                             !loop_a.empty();
    report(10, "wire conformance", round_trip && detected == total && transcripts,
           fmt("round-trip ok: %s; %ld/%ld corruptions detected; "
               "loopback and socket transcripts identical: %s (%zu frames per "
               "direction)",
               round_trip ? "yes" : "no", detected, total,
               transcripts ? "yes" : "no", loop_a.size()));
}

void criterion_11() {
    ExperimentConfig config;
    config.params = base_params();
    config.trials = 100;
    config.base_seed = kBaseSeed ^ 0x11u;
    config.jobs = 1;
    const SyncBatch serial = run_sync_trials(config);
    config.jobs = 2;
    const SyncBatch parallel = run_sync_trials(config);
    std::ostringstream s1, s2;
    write_sync_csv(serial, s1);
    write_sync_csv(parallel, s2);

    const AttackBatch a1 = run_attack_experiment(
        base_params(), AttackStrategy::Flipping, 20, kBaseSeed ^ 0x12u, 1, 1);
    const AttackBatch a2 = run_attack_experiment(
        base_params(), AttackStrategy::Flipping, 20, kBaseSeed ^ 0x12u, 2, 1);
    std::ostringstream t1, t2;
    write_attack_csv(a1, t1);
    write_attack_csv(a2, t2);

    const bool pass = s1.str() == s2.str() && t1.str() == t2.str();
    report(11, "CSV determinism", pass,
           fmt("sync CSV %zu bytes and attack CSV %zu bytes identical across "
               "re-runs and worker counts: %s",
               s1.str().size(), t1.str().size(), pass ? "yes" : "no"));
}

}  // namespace

int main() {
    std::printf("acceptance suite, base seed %08x\n", kBaseSeed);
    criterion_1_2_5();
    criterion_3();
    criterion_4();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    criterion_11();
    std::printf("%d criterion check(s) failed\n", failures);
    return failures;
}
