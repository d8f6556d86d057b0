#include "tpmkex/tpm.hpp"

#include <cmath>

namespace tpmkex {

namespace {

void require_same_shape(int au, int an, int bu, int bn) {
    if (au != bu || an != bn)
        throw DimensionError("dimension mismatch: " + std::to_string(au) + "x" +
                             std::to_string(an) + " vs " + std::to_string(bu) +
                             "x" + std::to_string(bn));
}

}  // namespace

void TpmParams::validate() const {
    if (hidden_units < 1) throw ConfigError("hidden_units must be >= 1");
    if (inputs_per_unit < 1) throw ConfigError("inputs_per_unit must be >= 1");
    if (weight_bound < 1) throw ConfigError("weight_bound must be >= 1");
    if (package_bits < 1) throw ConfigError("package_bits must be >= 1");
    if (sync_window < 1) throw ConfigError("sync_window must be >= 1");
    // A watchdog at or below the sync window can never be satisfied; it is
    // allowed so a forced-failure run can be configured deliberately.
    if (watchdog_limit < 0) throw ConfigError("watchdog_limit must be >= 0");
}

std::int64_t expected_sync_iterations(const TpmParams& params) {
    const double l = params.weight_bound;
    return std::max<std::int64_t>(
        1, std::llround(400.0 * l * l / 9.0));
}

std::int64_t TpmParams::effective_watchdog() const {
    if (watchdog_limit > 0) return watchdog_limit;
    return 10 * expected_sync_iterations(*this);
}

bool WeightMatrix::within_bound(int bound) const {
    for (int v : v_)
        if (v < -bound || v > bound) return false;
    return true;
}

std::string KeyMaterial::fingerprint() const {
    std::string out;
    const std::size_t nibbles = 16;
    for (std::size_t i = 0; i < nibbles; ++i) {
        unsigned v = 0;
        for (std::size_t b = 0; b < 4; ++b) {
            const std::size_t pos = i * 4 + b;
            v = (v << 1) | (pos < bit_count ? static_cast<unsigned>(bit(pos)) : 0u);
        }
        out += "0123456789abcdef"[v];
    }
    return out;
}

Evaluation evaluate(const WeightMatrix& weights, const InputVector& input,
                    Role role) {
    require_same_shape(weights.units(), weights.per_unit(), input.units(),
                       input.per_unit());
    const int units = weights.units();
    const int per_unit = weights.per_unit();
    Evaluation ev;
    ev.hidden.resize(units);
    ev.fields.resize(units);
    const int* w = weights.values().data();
    const std::int8_t* x = input.values().data();
    int output = 1;
    for (int k = 0; k < units; ++k) {
        int sum = 0;
        const std::size_t base = static_cast<std::size_t>(k) * per_unit;
        for (int j = 0; j < per_unit; ++j) sum += w[base + j] * x[base + j];
        ev.fields[k] = sum;
        int sign;
        if (sum > 0)
            sign = 1;
        else if (sum < 0)
            sign = -1;
        else
            sign = role == Role::A ? 1 : -1;  // zero field: opposite by role
        ev.hidden[k] = sign;
        output *= sign;
    }
    ev.output = output;
    return ev;
}

void hebbian_update(WeightMatrix& weights, const InputVector& input,
                    const Evaluation& eval, int peer_output,
                    const TpmParams& params) {
    require_same_shape(weights.units(), weights.per_unit(), input.units(),
                       input.per_unit());
    if (static_cast<int>(eval.hidden.size()) != weights.units())
        throw DimensionError("evaluation does not match weight shape");
    if (eval.output != peer_output) return;
    const int per_unit = weights.per_unit();
    const std::int8_t* x = input.values().data();
    int* w = weights.values().data();
    for (int k = 0; k < weights.units(); ++k) {
        if (eval.hidden[k] != eval.output) continue;
        const std::size_t base = static_cast<std::size_t>(k) * per_unit;
        for (int j = 0; j < per_unit; ++j)
            w[base + j] = clip_weight(w[base + j] + eval.output * x[base + j],
                                      params.weight_bound);
    }
}

KeyMaterial extract_key(const WeightMatrix& weights, const TpmParams& params) {
    const int bits_per_weight = params.bits_per_weight();
    KeyMaterial key;
    key.hidden_units = weights.units();
    key.inputs_per_unit = weights.per_unit();
    key.weight_bound = params.weight_bound;
    key.bit_count = static_cast<std::size_t>(weights.units()) *
                    weights.per_unit() * bits_per_weight;
    key.bytes.assign((key.bit_count + 7) / 8, 0);
    std::size_t pos = 0;
    for (int k = 0; k < weights.units(); ++k) {
        for (int j = 0; j < weights.per_unit(); ++j) {
            const unsigned value =
                static_cast<unsigned>(weights.at(k, j) + params.weight_bound);
            for (int b = bits_per_weight - 1; b >= 0; --b) {
                if ((value >> b) & 1u) key.bytes[pos >> 3] |= 0x80u >> (pos & 7);
                ++pos;
            }
        }
    }
    return key;
}

OverlapStats overlap(const WeightMatrix& a, const WeightMatrix& b) {
    require_same_shape(a.units(), a.per_unit(), b.units(), b.per_unit());
    OverlapStats stats;
    stats.per_unit.resize(a.units());
    std::size_t equal = 0;
    double sum = 0.0;
    for (int k = 0; k < a.units(); ++k) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int j = 0; j < a.per_unit(); ++j) {
            const double av = a.at(k, j), bv = b.at(k, j);
            dot += av * bv;
            na += av * av;
            nb += bv * bv;
            if (a.at(k, j) == b.at(k, j)) ++equal;
        }
        stats.per_unit[k] = (na == 0.0 || nb == 0.0) ? 0.0
                                                     : dot / std::sqrt(na * nb);
        sum += stats.per_unit[k];
    }
    stats.mean = sum / a.units();
    stats.frac_equal = static_cast<double>(equal) /
                       (static_cast<double>(a.units()) * a.per_unit());
    return stats;
}

}  // namespace tpmkex
