// Bit-package session protocol: produce b outputs with frozen weights,
// exchange them in one package, then replay the stored hidden states through
// the learning rule. Synchronization is declared after sync_window
// consecutive agreeing output bits; a watchdog bounds the attempt.

#pragma once

#include "tpmkex/input_gen.hpp"
#include "tpmkex/tpm.hpp"
#include "tpmkex/transport.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace tpmkex {

/// b output bits packed MSB-first plus the package index in its direction.
struct BitPackage {
    std::vector<std::uint8_t> bits;
    int count = 0;
    std::uint32_t seq = 0;

    /// Output of iteration i within the package, as a spin in {-1, +1}.
    int bit(int i) const {
        return (bits[i >> 3] >> (7 - (i & 7))) & 1 ? 1 : -1;
    }
    void set_bit(int i, int spin) {
        if (spin > 0) bits[i >> 3] |= 0x80u >> (i & 7);
    }

    bool operator==(const BitPackage&) const = default;
};

enum class Phase { Idle, Generating, AwaitingPeer, Learning, Synchronized, Failed };

enum class SessionMode {
    SingleKey,            // stop producing keys after the first
    Continuous,           // re-arm after each key, keep the common weights
    ContinuousFullReset,  // re-arm after each key from fresh random weights
};

/// One party's protocol state machine. Single-threaded; the key queue is
/// read by the owner between steps.
class Session {
public:
    /// Called after each learning replay step with the global iteration
    /// index (1-based, in output bits) and the weights at that point.
    using IterationObserver =
        std::function<void(std::int64_t, const WeightMatrix&)>;

    Session(const TpmParams& params, std::uint32_t input_seed,
            std::uint32_t weight_seed, SessionMode mode = SessionMode::SingleKey);

    /// Draws b inputs, evaluates each against the current (frozen) weights,
    /// stores the per-iteration records for the later replay, and returns
    /// the output bits. Allowed while Idle, Generating or Synchronized.
    BitPackage produce_package();

    /// Replays the stored records against the peer's output bits: the
    /// agreement counter and the learning rule advance bit by bit, using the
    /// hidden states exactly as recorded. Requires AwaitingPeer and the
    /// expected package sequence number.
    Phase absorb_package(const BitPackage& peer);

    void set_iteration_observer(IterationObserver obs) {
        observer_ = std::move(obs);
    }

    Phase phase() const { return phase_; }
    const TpmParams& params() const { return params_; }
    const WeightMatrix& weights() const { return weights_; }
    const SharedInputGenerator& input_generator() const { return input_gen_; }
    std::int64_t iterations() const { return iterations_; }
    int agree_count() const { return agree_count_; }
    std::uint32_t packages_produced() const { return packages_produced_; }
    std::uint32_t packages_absorbed() const { return packages_absorbed_; }
    std::optional<std::int64_t> detected_sync_iteration() const {
        return detected_sync_;
    }

    const std::deque<KeyMaterial>& key_queue() const { return key_queue_; }
    std::optional<KeyMaterial> pop_key();

private:
    struct PendingEntry {
        InputVector input;
        Evaluation eval;
    };

    TpmParams params_;
    SessionMode mode_;
    WeightMatrix weights_;
    SharedInputGenerator input_gen_;
    SharedInputGenerator weight_rng_;  // consumed again on full reset
    Phase phase_ = Phase::Idle;
    int agree_count_ = 0;
    std::int64_t iterations_ = 0;
    std::uint32_t packages_produced_ = 0;
    std::uint32_t packages_absorbed_ = 0;
    bool synchronized_ = false;  // latched in SingleKey mode
    std::optional<std::int64_t> detected_sync_;
    std::vector<PendingEntry> pending_;
    std::deque<KeyMaterial> key_queue_;
    IterationObserver observer_;
};

/// What a transcript tap sees after each package round. Weight snapshots of
/// party A cover the round bit by bit (after that bit's learning step);
/// they are empty when recording is off.
struct RoundView {
    const BitPackage& package_a;
    const BitPackage& package_b;
    std::int64_t first_iteration;  // global index of the round's first bit
    std::span<const WeightMatrix> party_a_weights;
    std::optional<std::int64_t> oracle_sync_iteration;
};

/// Passive observer of the public transcript (an eavesdropper harness).
class PackageTap {
public:
    virtual ~PackageTap() = default;
    virtual void on_round(const RoundView& round) = 0;
};

struct ExchangeConfig {
    TpmParams params;              // role is overridden per party
    std::uint32_t input_seed = 1;
    std::uint32_t weight_seed_a = 2;
    std::uint32_t weight_seed_b = 3;
    SessionMode mode = SessionMode::SingleKey;
    int key_target = 1;            // keys to collect in continuous modes
};

struct ExchangeResult {
    std::vector<KeyMaterial> keys_a;
    std::vector<KeyMaterial> keys_b;
    std::optional<std::int64_t> oracle_sync;    // first weight equality
    std::optional<std::int64_t> detected_sync;  // first window crossing
    std::int64_t iterations = 0;
    std::int64_t packages_per_direction = 0;
    bool failed = false;
};

/// Drives both parties of a simulated exchange in lock step, package round
/// by package round. Observes weight equality bit by bit to measure the
/// oracle synchronization time, which only a simulation can see.
class SimulationDriver {
public:
    explicit SimulationDriver(const ExchangeConfig& config);

    /// One package in each direction plus both learning replays.
    /// Returns false once either session failed.
    bool step_round();

    /// Runs the default policy for the configured mode and collects keys.
    ExchangeResult run();

    void set_tap(PackageTap* tap) { tap_ = tap; }

    Session& party_a() { return a_; }
    Session& party_b() { return b_; }
    std::optional<std::int64_t> oracle_sync() const { return oracle_sync_; }
    std::int64_t rounds() const { return rounds_; }

private:
    Session a_;
    Session b_;
    int key_target_ = 1;
    PackageTap* tap_ = nullptr;
    std::optional<std::int64_t> oracle_sync_;
    std::int64_t rounds_ = 0;
    std::vector<WeightMatrix> snapshots_;
    bool recording_ = true;
};

/// Convenience wrapper: run one full exchange to completion.
ExchangeResult run_key_exchange(const ExchangeConfig& config);

/// Key-delivery handshake between a session and its local key consumer,
/// spoken in frames over a channel: the consumer sends REQ_KEY, the service
/// answers KEY_CHA with a key id once a key is available (pumping the
/// exchange if the queue is empty), and the consumer confirms with KEY_COM.
class RekeyService {
public:
    /// pump advances the underlying exchange by one round; it returns false
    /// when no further progress is possible.
    RekeyService(Session& session, std::function<bool()> pump);

    /// Handles exactly one incoming consumer frame.
    void step(Channel& port);

    const std::vector<KeyMaterial>& granted() const { return granted_; }

private:
    enum class State { AwaitingRequest, AwaitingCommit };

    Session& session_;
    std::function<bool()> pump_;
    State state_ = State::AwaitingRequest;
    std::uint32_t next_key_id_ = 0;
    std::uint32_t send_seq_ = 0;
    std::uint32_t recv_seq_ = 0;
    std::optional<KeyMaterial> offered_;
    std::vector<KeyMaterial> granted_;
};

/// Consumer half of the rekey handshake, one request at a time.
class RekeyClient {
public:
    void request(Channel& port);
    std::uint32_t await_grant(Channel& port);  // returns the key id
    void commit(Channel& port, std::uint32_t key_id);

private:
    std::uint32_t send_seq_ = 0;
    std::uint32_t recv_seq_ = 0;
};

struct PartyConfig {
    TpmParams params;
    bool connector = true;  // connector takes role A, listener role B
    std::optional<std::uint32_t> input_seed;
    std::uint32_t weight_seed = 2;
    bool authenticated = false;  // never put the input seed on the wire
    int key_target = 1;
    bool full_reset = false;
};

struct PartyOutcome {
    std::vector<KeyMaterial> keys;
    std::optional<std::int64_t> detected_sync;
    std::int64_t iterations = 0;
    std::int64_t packages = 0;
};

/// Full wire driver for one endpoint: HELLO handshake, lock-step package
/// exchange with acknowledgements, key collection. Throws SyncError when
/// either side's watchdog fires.
PartyOutcome run_party(const PartyConfig& config, Channel& channel);

}  // namespace tpmkex
