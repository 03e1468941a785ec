#pragma once

#include "modelhash/config.hpp"
#include "modelhash/tensor_store.hpp"

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace modelhash::sim {

/// Deterministic random source. Uses only std::mt19937_64 raw output (fully
/// specified by the standard) and hand-written transforms, so draws are
/// identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform01();                    // [0, 1)
    double uniform(double a, double b);    // [a, b)
    double normal();                       // standard normal, Box-Muller
    std::uint64_t below(std::uint64_t n);  // uniform in [0, n), rejection sampled

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

struct Distribution {
    enum class Kind { Gaussian, Uniform };
    Kind kind = Kind::Gaussian;
    double sigma = 0.05; // Gaussian
    double a = -0.05;    // Uniform lower bound
    double b = 0.05;     // Uniform upper bound

    static Distribution gaussian(double sigma) { return {Kind::Gaussian, sigma, 0.0, 0.0}; }
    static Distribution uniform(double a, double b) { return {Kind::Uniform, 0.0, a, b}; }
};

struct LayerSpec {
    std::string name;
    std::vector<std::uint64_t> shape;
    bool conv = false;
    Distribution dist;
};

struct ArchSpec {
    std::string name;
    std::vector<LayerSpec> layers;
    std::uint64_t seed = 0;
    // Block count the localization experiments use for this architecture.
    int tamper_blocks = 450;

    std::uint64_t parameter_count() const;
    void validate(const HashConfig& cfg = {}) const;
};

ModelWeights generate_model(const ArchSpec& spec);

/// Eight architectures shaped after common CIFAR-10 / MNIST networks,
/// from ~6e4 to ~1e7 parameters, with per-layer Gaussian or uniform draws.
std::vector<ArchSpec> default_suite();
ArchSpec suite_spec(const std::string& name);

/// Zeroes, in every rank >= 2 tensor, the entries whose magnitude falls
/// below that tensor's `rate` magnitude quantile.
ModelWeights prune(const ModelWeights& model, double rate);

struct TamperPlan {
    double alpha = 0.1;
    double sigma = 0.1;
    std::uint64_t seed = 0;
};

/// round(alpha * B) distinct block indices, uniformly without replacement.
std::set<std::size_t> choose_blocks(double alpha, int B, std::uint64_t seed);

struct TamperOutcome {
    ModelWeights model;
    std::set<std::size_t> blocks;
};

/// Adds N(0, sigma^2) noise to every raw parameter of the chosen blocks, where
/// blocks partition the flattened ALL-tensor sequence as in the tamper hash.
TamperOutcome tamper(const ModelWeights& model, const TamperPlan& plan, int B);

/// w -> w * (1 + epsilon * g), g standard normal.
ModelWeights finetune_surrogate(const ModelWeights& model, double epsilon, std::uint64_t seed);

struct ResultRow {
    std::string model_id;
    std::string transform;
    std::string params;
    std::uint64_t seed = 0;
    std::string metric;
    double value = 0.0;
};

/// Runs a JSON experiment manifest (see README) and returns one row per
/// (experiment, seed, metric).
std::vector<ResultRow> run_manifest(std::string_view manifest_json);
std::string results_to_tsv(const std::vector<ResultRow>& rows);

ArchSpec arch_spec_from_json(std::string_view text);
std::string arch_spec_to_json(const ArchSpec& spec);

} // namespace modelhash::sim
