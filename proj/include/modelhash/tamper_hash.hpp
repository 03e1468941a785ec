#pragma once

#include "modelhash/config.hpp"
#include "modelhash/error.hpp"
#include "modelhash/tensor_store.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace modelhash {

class MapDivergence : public Error {
public:
    explicit MapDivergence(int step)
        : Error("map divergence at step " + std::to_string(step)), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

/// Iterates x' = mu x (1 - x) + k cos(q) x, q' = q + x from (x0, x0 / 2) and
/// returns the final x. Throws MapDivergence if the state leaves the finite range.
double chaotic_iterate(double x0, const ChaosParams& params);

struct LyapunovExponents {
    double lambda1 = 0.0; // largest
    double lambda2 = 0.0;
};

// Tangent-space propagation with Gram-Schmidt re-orthonormalization every step.
LyapunovExponents lyapunov_exponents(const ChaosParams& params, double x0, double q0,
                                     long warmup, long horizon);

struct BlockRange {
    std::uint64_t begin = 0;
    std::uint64_t end = 0;

    std::uint64_t size() const { return end - begin; }
    friend bool operator==(const BlockRange&, const BlockRange&) = default;
};

/// Contiguous cover of [0, total); the first (total mod B) blocks are one longer.
std::vector<BlockRange> block_partition(std::uint64_t total, int B);

inline constexpr int kStateCodeBits = 17;

/// 1 sign bit (1 = negative) followed by the first four significant decimal
/// digits of |x|, truncated, each as a 4-bit field. The exponent is dropped.
std::uint32_t encode_state(double x);

enum class TamperVariant {
    Chaotic, // block mean -> map -> code
    Direct,  // block mean -> code; the no-chaos baseline
};

struct NormRange {
    double min = 0.0;
    double max = 0.0;
    friend bool operator==(const NormRange&, const NormRange&) = default;
};

struct BlockFeature {
    std::size_t index = 0;
    double mean = 0.0;
    double final_x = 0.0;
};

struct TamperOptions {
    TamperVariant variant = TamperVariant::Chaotic;
    // Reuse a reference model's min-max range instead of the model's own,
    // so edits that move the global extremes stay local to their blocks.
    std::optional<NormRange> anchor;
};

struct TamperHash {
    std::string model_id;
    int B = 0;
    ChaosParams chaos;
    TamperVariant variant = TamperVariant::Chaotic;
    std::uint64_t total_params = 0;
    NormRange norm;
    std::vector<std::uint32_t> codes; // encrypted, 17 bits each
    std::vector<BlockRange> boundaries;
    std::string config_digest;

    friend bool operator==(const TamperHash& a, const TamperHash& b);
};

std::vector<BlockFeature> block_features(const ModelWeights& model, const HashConfig& cfg,
                                         const TamperOptions& options = {});

TamperHash tamper_localization_hash(const ModelWeights& model, const HashConfig& cfg,
                                    const TamperOptions& options = {});

struct TamperReport {
    int B = 0;
    std::vector<std::size_t> flagged;
    std::optional<std::size_t> eta;
    std::optional<std::size_t> eta_prime;
    std::optional<double> r_t; // unset when no ground truth or eta = 0
    std::optional<std::size_t> false_flags;
};

TamperReport locate_tampering(const TamperHash& reference, const TamperHash& test,
                              const std::optional<std::set<std::size_t>>& ground_truth = std::nullopt);

std::string tamper_report_to_json(const TamperReport& report);

std::string tamper_hash_to_json(const TamperHash& h);
TamperHash tamper_hash_from_json(std::string_view text);
void save_tamper_hash(const TamperHash& h, const std::filesystem::path& path);
TamperHash load_tamper_hash(const std::filesystem::path& path);

/// Block indices, whitespace or comma separated.
std::set<std::size_t> load_block_set(const std::filesystem::path& path);
void save_block_set(const std::set<std::size_t>& blocks, const std::filesystem::path& path);

} // namespace modelhash
