#include "modelhash/hos_features.hpp"

#include "modelhash/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace modelhash {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

double quantile(std::span<const double> values, double q) {
    if (values.empty()) throw Error("quantile of empty sequence");
    if (!(q >= 0.0 && q <= 1.0)) throw Error("quantile level outside [0, 1]");

    std::vector<double> v(values.begin(), values.end());
    const std::size_t n = v.size();
    const double r = q * static_cast<double>(n - 1);
    const auto k = std::min(static_cast<std::size_t>(std::floor(r)), n - 1);
    const double d = r - static_cast<double>(k);

    // Partial selection: v[k] is the k-th order statistic and everything
    // after it is >= v[k], so the (k+1)-th is the minimum of the tail.
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    const double lo = v[k];
    if (k + 1 >= n || d == 0.0) return lo;
    const double hi = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(k) + 1, v.end());
    return (1.0 - d) * lo + d * hi;
}

std::vector<double> select_weights(std::span<const double> weights, double c) {
    if (weights.empty()) throw Error("empty weight sequence");
    if (!(c > 0.0 && c <= 1.0)) throw Error("retain ratio c must lie in (0, 1]");

    std::vector<double> magnitudes(weights.size());
    std::transform(weights.begin(), weights.end(), magnitudes.begin(),
                   [](double w) { return std::abs(w); });
    const double th = quantile(magnitudes, 1.0 - c);

    std::vector<double> kept;
    kept.reserve(static_cast<std::size_t>(c * static_cast<double>(weights.size())) + 2);
    for (double w : weights) {
        if (std::abs(w) >= th) kept.push_back(w);
    }
    if (kept.empty()) throw Error("weight selection produced no weights");
    return kept;
}

std::vector<std::span<const double>> segment(std::span<const double> values, int n, int min_size) {
    if (n < 1) throw Error("segment count must be positive");
    const auto count = static_cast<std::size_t>(n);
    if (values.size() < count * static_cast<std::size_t>(std::max(min_size, 1))) {
        throw Error("insufficient weights for N segments (" + std::to_string(values.size()) +
                    " < " + std::to_string(count * static_cast<std::size_t>(min_size)) + ")");
    }
    const std::size_t base = values.size() / count;
    const std::size_t extra = values.size() % count;

    std::vector<std::span<const double>> parts;
    parts.reserve(count);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t len = base + (i < extra ? 1 : 0);
        parts.push_back(values.subspan(offset, len));
        offset += len;
    }
    return parts;
}

Moments standardized_moments(std::span<const double> x) {
    if (x.size() < 2) throw Error("degenerate segment: fewer than two values");
    const double n = static_cast<double>(x.size());

    // Neumaier-compensated mean. The double nearest the true mean can still
    // sit a sizable fraction of sigma away when the offset dwarfs the spread,
    // so moments are taken about it and shifted by the residual delta.
    double sum = 0.0, comp = 0.0;
    for (double v : x) {
        const double t = sum + v;
        comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
        sum = t;
    }
    const double mean = (sum + comp) / n;

    double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
    for (double v : x) {
        const double d = v - mean;
        const double d2 = d * d;
        s1 += d;
        s2 += d2;
        s3 += d2 * d;
        s4 += d2 * d2;
    }
    const double delta = s1 / n;
    s2 /= n;
    s3 /= n;
    s4 /= n;
    const double dd = delta * delta;
    const double m2 = s2 - dd;
    const double m3 = s3 - 3.0 * delta * s2 + 2.0 * dd * delta;
    const double m4 = s4 - 4.0 * delta * s3 + 6.0 * dd * s2 - 3.0 * dd * dd;
    if (!(m2 > 0.0)) throw Error("degenerate segment: zero standard deviation");

    const double sigma = std::sqrt(m2);
    return {m3 / (sigma * sigma * sigma), m4 / (m2 * m2)};
}

double skewness(std::span<const double> x) {
    return standardized_moments(x).skewness;
}

double kurtosis(std::span<const double> x) {
    return standardized_moments(x).kurtosis;
}

std::vector<double> HOSSequence::concatenated() const {
    std::vector<double> a(skews);
    a.insert(a.end(), kurts.begin(), kurts.end());
    return a;
}

HOSSequence hos_sequence(const ModelWeights& model, const HashConfig& cfg, StageTimings* timings) {
    auto start = std::chrono::steady_clock::now();
    const auto flat = flatten_weights(model, TensorFilter::KernelsOnly);
    const auto selected = select_weights(flat, cfg.c);
    if (timings) {
        timings->selection_seconds = seconds_since(start);
        start = std::chrono::steady_clock::now();
    }

    HOSSequence seq;
    seq.skews.reserve(static_cast<std::size_t>(cfg.N));
    seq.kurts.reserve(static_cast<std::size_t>(cfg.N));
    for (auto part : segment(selected, cfg.N, cfg.min_segment)) {
        const auto m = standardized_moments(part);
        seq.skews.push_back(m.skewness);
        seq.kurts.push_back(m.kurtosis);
    }
    if (timings) timings->features_seconds = seconds_since(start);
    return seq;
}

StructureSequence structure_sequence(const ModelWeights& model, int K) {
    if (K < 1) throw Error("structure capacity K must be positive");

    std::vector<double> counts;
    for (const auto& t : model.tensors) {
        if (model.is_conv(t)) counts.push_back(static_cast<double>(t.values.size()));
    }
    if (counts.empty()) throw Error("structure features unavailable: no convolution layers");

    double total = 0.0;
    for (double p : counts) total += p;
    if (!(total > 0.0)) throw Error("structure features unavailable: convolution layers are empty");

    StructureSequence s;
    s.K = K;
    s.P = static_cast<int>(counts.size());
    s.values.assign(static_cast<std::size_t>(K) + 1, 0.0);
    s.values[0] = std::min(static_cast<double>(s.P) / K, 1.0);
    const auto kept = std::min(counts.size(), static_cast<std::size_t>(K));
    for (std::size_t i = 0; i < kept; ++i) s.values[i + 1] = counts[i] / total;
    return s;
}

} // namespace modelhash
