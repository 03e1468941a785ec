#pragma once

#include "modelhash/config.hpp"
#include "modelhash/encoding.hpp"
#include "modelhash/tamper_hash.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace modelhash {

/// Normalized Hamming distance, (1/t) * number of differing bits.
double hamming(const BitVector& a, const BitVector& b);

enum class Verdict { Similar, Distinct };

std::string_view verdict_name(Verdict v);

struct MatchResult {
    std::string model_id;
    double distance = 0.0;
    Verdict verdict = Verdict::Distinct;
    double d_hos = 0.0;
    double d_struct = 0.0;
};

/// k1 * hamming(HOS parts) + k2 * hamming(structure parts); SIMILAR iff the
/// result is strictly below tau. Throws ConfigMismatch for hashes produced
/// under different configurations or keys.
MatchResult weighted_distance(const PiracyHash& a, const PiracyHash& b, const DistanceWeights& w = {});

struct RegistryRecord {
    std::string model_id;
    PiracyHash piracy_hash;
    std::optional<TamperHash> tamper_hash;
    std::string created_at; // ISO-8601 UTC
    std::string notes;
};

std::string utc_timestamp();

struct RegistryLineError {
    std::size_t line = 0;
    std::string message;
};

struct QueryResult {
    std::vector<MatchResult> matches; // ascending distance, ties by model_id
    std::vector<RegistryLineError> errors;
    std::size_t skipped_incompatible = 0;
};

/// Appends one JSON line. Rejects an id that is already present. The file is
/// held under an exclusive advisory lock while it is checked and extended.
void register_record(const RegistryRecord& record, const std::filesystem::path& registry);

struct RegistryContents {
    std::vector<RegistryRecord> records;
    std::vector<RegistryLineError> errors;
};

RegistryContents read_registry(const std::filesystem::path& registry);

/// Records whose config digest differs from the query are skipped and counted.
QueryResult query(const PiracyHash& h, const std::filesystem::path& registry, const DistanceWeights& w = {});

} // namespace modelhash
