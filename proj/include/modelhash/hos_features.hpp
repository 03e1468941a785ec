#pragma once

#include "modelhash/config.hpp"
#include "modelhash/tensor_store.hpp"

#include <span>
#include <vector>

namespace modelhash {

/// Linear-interpolation quantile over the ascending sort of `values`:
/// r = q(n-1), k = floor(r), d = r - k, result (1-d)v[k] + d v[k+1].
double quantile(std::span<const double> values, double q);

/// Keeps weights whose magnitude reaches the (1-c) magnitude quantile, in
/// their original order. Ties with the threshold are kept.
std::vector<double> select_weights(std::span<const double> weights, double c);

/// Contiguous split into `n` parts; the first (size mod n) parts are one
/// element longer. Throws if any part would hold fewer than `min_size`.
std::vector<std::span<const double>> segment(std::span<const double> values, int n, int min_size = 5);

struct Moments {
    double skewness = 0.0;
    double kurtosis = 0.0; // raw fourth standardized moment, 3 for a normal
};

// Population (1/n) estimators. Throws on fewer than two values or zero spread.
Moments standardized_moments(std::span<const double> x);
double skewness(std::span<const double> x);
double kurtosis(std::span<const double> x);

struct HOSSequence {
    std::vector<double> skews;
    std::vector<double> kurts;

    int N() const { return static_cast<int>(skews.size()); }
    /// (s_1..s_N, k_1..k_N)
    std::vector<double> concatenated() const;
};

struct StructureSequence {
    std::vector<double> values; // 1 + K entries
    int K = 0;
    int P = 0;
};

struct StageTimings {
    double selection_seconds = 0.0;
    double features_seconds = 0.0;
};

HOSSequence hos_sequence(const ModelWeights& model, const HashConfig& cfg,
                         StageTimings* timings = nullptr);

StructureSequence structure_sequence(const ModelWeights& model, int K);

} // namespace modelhash
