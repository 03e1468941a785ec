#pragma once

#include <cstdint>
#include <string>

namespace modelhash {

struct ChaosParams {
    double mu = 0.2;
    double k = 2.0;
    int iterations = 100;
};

struct DistanceWeights {
    double k1 = 0.8;
    double k2 = 0.2;
    double tau = 0.32;

    void validate() const;
};

/// Every tunable of both hash pipelines. Defaults reproduce the published
/// setting: T = (2N + 1 + K) * b = 484 piracy bits and 450 tamper blocks.
struct HashConfig {
    double c = 1.0 / 16.0;
    int N = 50;
    int b = 4;
    int K = 20;
    DistanceWeights weights;
    int B = 450;
    ChaosParams chaos;
    std::string key;

    // Minimum elements per HOS segment.
    int min_segment = 5;

    int hos_bit_count() const { return 2 * N * b; }
    int struct_bit_count() const { return (1 + K) * b; }
    int piracy_bit_count() const { return (2 * N + 1 + K) * b; }

    /// B = 100, for models in the sub-million parameter range.
    static HashConfig small_profile();

    void validate() const;

    // Digests identify the parameters that make two hashes comparable,
    // including a fingerprint of the key (never the key itself).
    std::string piracy_digest() const;
    std::string tamper_digest() const;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

} // namespace modelhash
