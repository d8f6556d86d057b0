// Tree parity machine primitives: network evaluation, the coupled learning
// rule, weight bounding, key extraction and overlap metrics. Everything here
// is a pure function of its arguments; randomness enters only through an
// explicit bit source.

#pragma once

#include "tpmkex/errors.hpp"

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tpmkex {

/// Tie-break identity of a party. The two ends of a session hold opposite
/// roles; a zero local field maps to +1 for A and -1 for B, so the parties
/// disagree by construction whenever a field vanishes.
enum class Role : std::uint8_t { A, B };

inline Role opposite(Role r) { return r == Role::A ? Role::B : Role::A; }

/// Structure and protocol parameters shared by both parties.
struct TpmParams {
    int hidden_units = 3;        // K
    int inputs_per_unit = 100;   // N
    int weight_bound = 3;        // L, weights live in [-L, L]
    int package_bits = 32;       // b, outputs exchanged per package
    int sync_window = 96;        // consecutive agreeing bits that declare sync
    std::int64_t watchdog_limit = 0;  // 0 selects the default budget
    Role role = Role::A;

    void validate() const;
    TpmParams with_role(Role r) const {
        TpmParams p = *this;
        p.role = r;
        return p;
    }

    /// Bits needed to encode one of the 2L+1 weight values.
    int bits_per_weight() const {
        return std::bit_width(static_cast<unsigned>(2 * weight_bound));
    }
    std::size_t key_bits() const {
        return static_cast<std::size_t>(hidden_units) * inputs_per_unit *
               bits_per_weight();
    }
    std::int64_t effective_watchdog() const;
};

/// Rule-of-thumb mean synchronization time for a parameter set, anchored at
/// the 400-iteration reference point for (K=3, N=100, L=3) and scaled
/// quadratically in the weight bound. Used only to size default watchdogs.
std::int64_t expected_sync_iterations(const TpmParams& params);

/// K x N matrix of bounded integer weights; the evolving shared secret.
class WeightMatrix {
public:
    WeightMatrix() = default;
    WeightMatrix(int units, int per_unit)
        : units_(units),
          per_unit_(per_unit),
          v_(static_cast<std::size_t>(units) * per_unit, 0) {}

    int units() const { return units_; }
    int per_unit() const { return per_unit_; }
    int at(int k, int j) const {
        return v_[static_cast<std::size_t>(k) * per_unit_ + j];
    }
    int& at(int k, int j) {
        return v_[static_cast<std::size_t>(k) * per_unit_ + j];
    }
    std::span<const int> values() const { return v_; }
    std::span<int> values() { return v_; }

    bool within_bound(int bound) const;
    bool operator==(const WeightMatrix&) const = default;

private:
    int units_ = 0;
    int per_unit_ = 0;
    std::vector<int> v_;
};

/// K x N spin inputs, components in {-1, +1}.
class InputVector {
public:
    InputVector() = default;
    InputVector(int units, int per_unit)
        : units_(units),
          per_unit_(per_unit),
          v_(static_cast<std::size_t>(units) * per_unit, 1) {}

    int units() const { return units_; }
    int per_unit() const { return per_unit_; }
    int at(int k, int j) const {
        return v_[static_cast<std::size_t>(k) * per_unit_ + j];
    }
    void set(int k, int j, int value) {
        v_[static_cast<std::size_t>(k) * per_unit_ + j] =
            static_cast<std::int8_t>(value);
    }
    std::span<const std::int8_t> values() const { return v_; }

    bool operator==(const InputVector&) const = default;

private:
    int units_ = 0;
    int per_unit_ = 0;
    std::vector<std::int8_t> v_;
};

/// Result of presenting one input to a machine: per-unit summation fields,
/// their signs, and the parity output.
struct Evaluation {
    int output = 0;            // product of hidden signs, in {-1, +1}
    std::vector<int> hidden;   // per-unit signs, in {-1, +1}
    std::vector<int> fields;   // per-unit weighted sums before the sign
};

/// Serialized weights; what the application receives as a key.
struct KeyMaterial {
    std::vector<std::uint8_t> bytes;  // packed MSB-first, zero padded
    std::size_t bit_count = 0;
    int hidden_units = 0;
    int inputs_per_unit = 0;
    int weight_bound = 0;

    int bit(std::size_t i) const {
        return (bytes[i >> 3] >> (7 - (i & 7))) & 1;
    }
    /// First 64 key bits as 16 hex digits; what the CLI prints.
    std::string fingerprint() const;

    bool operator==(const KeyMaterial&) const = default;
};

struct OverlapStats {
    std::vector<double> per_unit;  // cosine per hidden unit
    double mean = 0.0;
    double frac_equal = 0.0;       // fraction of exactly equal components
};

/// Clamp a weight back into [-bound, bound]. Defined for any integer even
/// though learning only ever moves a weight one step past the bound.
constexpr int clip_weight(int w, int bound) noexcept {
    if (w > bound) return bound;
    if (w < -bound) return -bound;
    return w;
}

Evaluation evaluate(const WeightMatrix& weights, const InputVector& input,
                    Role role);

/// Coupled learning step. No-op unless the exchanged outputs agree; on
/// agreement, every unit whose sign matched the output moves its weights by
/// output * input and is clamped back into range.
void hebbian_update(WeightMatrix& weights, const InputVector& input,
                    const Evaluation& eval, int peer_output,
                    const TpmParams& params);

/// Offset-binary serialization of the weights, unit-major, each weight in
/// bits_per_weight() bits MSB first. Injective, so equal keys imply equal
/// weight matrices.
KeyMaterial extract_key(const WeightMatrix& weights, const TpmParams& params);

OverlapStats overlap(const WeightMatrix& a, const WeightMatrix& b);

/// Draw every weight independently and uniformly from the 2L+1 values in
/// [-L, L], by rejection sampling on the bit source.
template <class BitSource>
WeightMatrix init_weights(BitSource& rng, const TpmParams& params) {
    params.validate();
    const int span = 2 * params.weight_bound + 1;
    const int draw_bits = params.bits_per_weight();
    WeightMatrix w(params.hidden_units, params.inputs_per_unit);
    for (int& value : w.values()) {
        int draw;
        do {
            draw = 0;
            for (int i = 0; i < draw_bits; ++i)
                draw = (draw << 1) | rng.next_bit();
        } while (draw >= span);
        value = draw - params.weight_bound;
    }
    return w;
}

}  // namespace tpmkex
