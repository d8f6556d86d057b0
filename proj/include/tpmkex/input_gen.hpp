// Shared pseudo-random input generation. Both parties run the same 32-bit
// Galois LFSR over the standard CRC-32 polynomial from a common seed, so
// identical seeds yield identical input sequences. Keeping the seed secret
// turns the exchange into an authenticated one.

#pragma once

#include "tpmkex/errors.hpp"
#include "tpmkex/tpm.hpp"

#include <cstdint>

namespace tpmkex {

class SharedInputGenerator {
public:
    // x^32+x^26+x^23+x^22+x^16+x^12+x^11+x^10+x^8+x^7+x^5+x^4+x^2+x+1,
    // the x^32 term implicit.
    static constexpr std::uint32_t feedback_polynomial = 0x04C11DB7u;

    explicit SharedInputGenerator(std::uint32_t seed) : state_(seed) {
        if (seed == 0)
            throw ConfigError("degenerate seed: 0 is the absorbing state");
    }

    /// One Galois step, left-shift form; the output is the bit shifted out.
    /// A nonzero state can never reach zero.
    int next_bit() noexcept {
        const std::uint32_t out = state_ >> 31;
        state_ <<= 1;
        if (out) state_ ^= feedback_polynomial;
        return static_cast<int>(out);
    }

    /// Next 32 output bits, MSB first.
    std::uint32_t next_word() noexcept {
        std::uint32_t w = 0;
        for (int i = 0; i < 32; ++i)
            w = (w << 1) | static_cast<std::uint32_t>(next_bit());
        return w;
    }

    /// Draw K*N bits, unit-major, mapping 0 -> -1 and 1 -> +1.
    InputVector next_input(int units, int per_unit) {
        InputVector x(units, per_unit);
        for (int k = 0; k < units; ++k)
            for (int j = 0; j < per_unit; ++j)
                x.set(k, j, next_bit() ? 1 : -1);
        return x;
    }

    void skip(long bits) noexcept {
        for (long i = 0; i < bits; ++i) next_bit();
    }

    std::uint32_t state() const noexcept { return state_; }

    bool operator==(const SharedInputGenerator&) const = default;

private:
    std::uint32_t state_;
};

/// Deterministic seed derivation: XOR in a salt, replace a zero result, then
/// run the generator forward to decorrelate nearby inputs. Never returns 0.
std::uint32_t derive_seed(std::uint32_t base, std::uint32_t salt);

/// The four independent streams one experiment trial needs.
struct TrialSeeds {
    std::uint32_t input;
    std::uint32_t weights_a;
    std::uint32_t weights_b;
    std::uint32_t attacker;
};

/// Per-trial seeds: the base seed XOR (index + 1), zero skipped, split into
/// four decorrelated streams.
TrialSeeds trial_seeds(std::uint32_t base_seed, long trial_index);

}  // namespace tpmkex
