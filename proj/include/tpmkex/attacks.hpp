// Passive eavesdroppers against a synchronizing pair. The attacker runs an
// identically structured machine, sees the common inputs and both exchanged
// output bits, and nothing else. Strategies: learn only when the own output
// already matches (naive), or first flip the least-confident hidden unit to
// force a match (flipping).

#pragma once

#include "tpmkex/input_gen.hpp"
#include "tpmkex/session.hpp"
#include "tpmkex/tpm.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace tpmkex {

enum class AttackStrategy { Naive, Flipping };

/// Attacker network. The tie-break role is fixed to A's convention.
struct AttackerState {
    WeightMatrix weights;
    AttackStrategy strategy = AttackStrategy::Naive;
};

/// One observed iteration under the naive strategy: update per the party
/// learning rule only when the parties agreed and the own output matches.
AttackerState naive_step(const AttackerState& attacker, const InputVector& input,
                         int out_a, int out_b, const TpmParams& params);

/// One observed iteration under the flipping strategy: on a mismatch with an
/// agreed output, flip the hidden unit with the smallest |field| (lowest
/// index wins ties), which negates the parity, then learn with the corrected
/// hidden states.
AttackerState flipping_step(const AttackerState& attacker,
                            const InputVector& input, int out_a, int out_b,
                            const TpmParams& params);

/// Eavesdropper operating at bit-package granularity, mirroring the parties:
/// evaluate the package with frozen weights, then replay the stored states
/// once both output packages are public. Plugs into SimulationDriver as a
/// transcript tap.
class PackagedAttacker : public PackageTap {
public:
    PackagedAttacker(const TpmParams& params, AttackStrategy strategy,
                     std::uint32_t input_seed, std::uint32_t weight_seed);

    void on_round(const RoundView& round) override;

    const WeightMatrix& weights() const { return weights_; }
    std::int64_t iterations() const { return iterations_; }

    /// First iteration with full weight agreement with party A, if any.
    std::optional<std::int64_t> full_agreement_iteration() const {
        return full_agreement_;
    }
    /// Overlap with party A at the parties' oracle synchronization point.
    const std::optional<OverlapStats>& overlap_at_party_sync() const {
        return at_party_sync_;
    }

private:
    TpmParams params_;
    AttackStrategy strategy_;
    WeightMatrix weights_;
    SharedInputGenerator input_gen_;
    std::int64_t iterations_ = 0;
    std::optional<std::int64_t> full_agreement_;
    std::optional<OverlapStats> at_party_sync_;
};

struct AttackResult {
    std::optional<std::int64_t> attacker_sync_iter;  // full agreement with A
    double overlap_mean = 0.0;     // mean cosine at party sync
    double frac_equal = 0.0;       // exact component agreement at party sync
    bool success_98 = false;       // overlap_mean >= 0.98 at party sync
    bool full_agree_at_sync = false;
    std::int64_t party_oracle_sync = -1;
    std::int64_t party_detected_sync = -1;
    std::int64_t packages = 0;
    bool failed = false;  // the parties never synchronized (watchdog)
};

struct AttackSummary {
    long trials = 0;
    long failed = 0;
    double success98_rate = 0.0;
    double full_agree_at_sync_rate = 0.0;
    double mean_overlap = 0.0;
    double mean_frac_equal = 0.0;
    /// Fraction of trials where the attacker needed longer than the parties
    /// (no agreement within the iteration cap counts as longer).
    double attacker_slower_rate = 0.0;
    /// Mean of max(attacker time, party time) / party time, capped trials
    /// contributing the cap.
    double mean_time_ratio = 0.0;
};

struct AttackBatch {
    TpmParams params;
    AttackStrategy strategy;
    std::uint32_t base_seed = 0;
    std::vector<AttackResult> rows;
    AttackSummary summary;
};

/// One attack trial with explicit seeds: fresh parties and attacker, run to
/// party (oracle) synchronization and on until the attacker fully agrees or
/// hits the iteration cap (0 selects the watchdog budget).
AttackResult run_attack_trial(const TpmParams& params, AttackStrategy strategy,
                              const TrialSeeds& seeds,
                              std::int64_t attacker_iteration_cap = 0);

/// Monte-Carlo harness over derived per-trial seeds; deterministic in
/// base_seed regardless of the worker count.
AttackBatch run_attack_experiment(const TpmParams& params,
                                  AttackStrategy strategy, long trials,
                                  std::uint32_t base_seed, int jobs = 0,
                                  std::int64_t attacker_iteration_cap = 0);

}  // namespace tpmkex
