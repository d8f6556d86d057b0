#include "tpmkex/input_gen.hpp"

namespace tpmkex {

std::uint32_t derive_seed(std::uint32_t base, std::uint32_t salt) {
    std::uint32_t s = base ^ salt;
    if (s == 0) s = 0x9E3779B9u;
    SharedInputGenerator gen(s);
    gen.skip(64);
    return gen.state();
}

TrialSeeds trial_seeds(std::uint32_t base_seed, long trial_index) {
    std::uint32_t mixed = base_seed ^ static_cast<std::uint32_t>(trial_index + 1);
    if (mixed == 0) mixed = 0x9E3779B9u;
    // High-half salts keep the streams apart for any realistic trial count.
    return TrialSeeds{
        derive_seed(mixed, 0x00000000u),
        derive_seed(mixed, 0x40000000u),
        derive_seed(mixed, 0x80000000u),
        derive_seed(mixed, 0xC0000000u),
    };
}

}  // namespace tpmkex
