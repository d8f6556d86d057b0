#include "tpmkex/attacks.hpp"

#include "tpmkex/parallel.hpp"

#include <algorithm>
#include <cstdlib>

namespace tpmkex {

namespace {

// Shared learning core. `eval` is taken by value: the flipping strategy
// corrects the recorded hidden states before learning from them.
void attack_learn(WeightMatrix& weights, const InputVector& input,
                  Evaluation eval, AttackStrategy strategy, int out_a,
                  int out_b, const TpmParams& params) {
    if (out_a != out_b) return;  // the parties did not learn either
    if (eval.output != out_a) {
        if (strategy == AttackStrategy::Naive) return;
        int k_star = 0;
        for (int k = 1; k < static_cast<int>(eval.fields.size()); ++k)
            if (std::abs(eval.fields[k]) < std::abs(eval.fields[k_star]))
                k_star = k;
        eval.hidden[k_star] = -eval.hidden[k_star];
        eval.output = -eval.output;  // one sign flip negates the parity
    }
    hebbian_update(weights, input, eval, out_a, params);
}

}  // namespace

AttackerState naive_step(const AttackerState& attacker,
                         const InputVector& input, int out_a, int out_b,
                         const TpmParams& params) {
    AttackerState next = attacker;
    const Evaluation eval = evaluate(next.weights, input, Role::A);
    attack_learn(next.weights, input, eval, AttackStrategy::Naive, out_a,
                 out_b, params);
    return next;
}

AttackerState flipping_step(const AttackerState& attacker,
                            const InputVector& input, int out_a, int out_b,
                            const TpmParams& params) {
    AttackerState next = attacker;
    const Evaluation eval = evaluate(next.weights, input, Role::A);
    attack_learn(next.weights, input, eval, AttackStrategy::Flipping, out_a,
                 out_b, params);
    return next;
}

PackagedAttacker::PackagedAttacker(const TpmParams& params,
                                   AttackStrategy strategy,
                                   std::uint32_t input_seed,
                                   std::uint32_t weight_seed)
    : params_(params.with_role(Role::A)),
      strategy_(strategy),
      input_gen_(input_seed) {
    SharedInputGenerator weight_rng(weight_seed);
    weights_ = init_weights(weight_rng, params_);
}

void PackagedAttacker::on_round(const RoundView& round) {
    const int count = round.package_a.count;
    std::vector<InputVector> inputs;
    std::vector<Evaluation> evals;
    inputs.reserve(count);
    evals.reserve(count);
    // Frozen-weight pass over the package, as the parties do.
    for (int i = 0; i < count; ++i) {
        inputs.push_back(input_gen_.next_input(params_.hidden_units,
                                               params_.inputs_per_unit));
        evals.push_back(evaluate(weights_, inputs.back(), Role::A));
    }
    for (int i = 0; i < count; ++i) {
        attack_learn(weights_, inputs[i], std::move(evals[i]), strategy_,
                     round.package_a.bit(i), round.package_b.bit(i), params_);
        ++iterations_;
        if (static_cast<std::size_t>(i) < round.party_a_weights.size()) {
            if (!full_agreement_ && weights_ == round.party_a_weights[i])
                full_agreement_ = iterations_;
            if (!at_party_sync_ && round.oracle_sync_iteration &&
                *round.oracle_sync_iteration == iterations_)
                at_party_sync_ = overlap(weights_, round.party_a_weights[i]);
        }
    }
}

AttackResult run_attack_trial(const TpmParams& params, AttackStrategy strategy,
                              const TrialSeeds& seeds,
                              std::int64_t attacker_iteration_cap) {
    TpmParams p = params;
    p.validate();
    const std::int64_t cap = attacker_iteration_cap > 0
                                 ? attacker_iteration_cap
                                 : p.effective_watchdog();
    // The experiment's stopping rule is oracle sync plus the observation
    // cap; keep the party watchdog from aborting a trial the experiment
    // still wants to observe.
    p.watchdog_limit = std::max(cap, p.effective_watchdog()) + p.package_bits;

    ExchangeConfig config;
    config.params = p;
    config.input_seed = seeds.input;
    config.weight_seed_a = seeds.weights_a;
    config.weight_seed_b = seeds.weights_b;
    SimulationDriver driver(config);
    PackagedAttacker attacker(p, strategy, seeds.input, seeds.attacker);
    driver.set_tap(&attacker);

    AttackResult row;
    for (;;) {
        if (!driver.step_round()) {
            row.failed = true;
            break;
        }
        if (driver.oracle_sync()) {
            if (attacker.full_agreement_iteration() ||
                driver.party_a().iterations() >= cap)
                break;
        }
    }
    if (!row.failed) {
        row.party_oracle_sync = *driver.oracle_sync();
        row.party_detected_sync =
            driver.party_a().detected_sync_iteration().value_or(-1);
        row.attacker_sync_iter = attacker.full_agreement_iteration();
        if (const auto& at_sync = attacker.overlap_at_party_sync()) {
            row.overlap_mean = at_sync->mean;
            row.frac_equal = at_sync->frac_equal;
            row.success_98 = at_sync->mean >= 0.98;
            row.full_agree_at_sync = at_sync->frac_equal >= 1.0;
        }
    }
    row.packages = driver.rounds();
    return row;
}

AttackBatch run_attack_experiment(const TpmParams& params,
                                  AttackStrategy strategy, long trials,
                                  std::uint32_t base_seed, int jobs,
                                  std::int64_t attacker_iteration_cap) {
    if (trials < 1) throw ConfigError("trials must be >= 1");
    TpmParams p = params;
    p.validate();
    const std::int64_t cap = attacker_iteration_cap > 0
                                 ? attacker_iteration_cap
                                 : p.effective_watchdog();
    AttackBatch batch;
    batch.params = p;
    batch.strategy = strategy;
    batch.base_seed = base_seed;
    batch.rows.resize(static_cast<std::size_t>(trials));

    parallel_trials(trials, jobs, [&](long trial) {
        batch.rows[static_cast<std::size_t>(trial)] =
            run_attack_trial(p, strategy, trial_seeds(base_seed, trial), cap);
    });

    AttackSummary& s = batch.summary;
    s.trials = trials;
    long ok = 0;
    double ratio_sum = 0.0;
    for (const AttackResult& row : batch.rows) {
        if (row.failed) {
            ++s.failed;
            continue;
        }
        ++ok;
        s.success98_rate += row.success_98 ? 1.0 : 0.0;
        s.full_agree_at_sync_rate += row.full_agree_at_sync ? 1.0 : 0.0;
        s.mean_overlap += row.overlap_mean;
        s.mean_frac_equal += row.frac_equal;
        const std::int64_t attacker_time = row.attacker_sync_iter.value_or(cap);
        if (!row.attacker_sync_iter ||
            *row.attacker_sync_iter > row.party_oracle_sync)
            s.attacker_slower_rate += 1.0;
        ratio_sum += static_cast<double>(
                         std::max(attacker_time, row.party_oracle_sync)) /
                     static_cast<double>(row.party_oracle_sync);
    }
    if (ok > 0) {
        s.success98_rate /= ok;
        s.full_agree_at_sync_rate /= ok;
        s.mean_overlap /= ok;
        s.mean_frac_equal /= ok;
        s.attacker_slower_rate /= ok;
        s.mean_time_ratio = ratio_sum / ok;
    }
    return batch;
}

}  // namespace tpmkex
