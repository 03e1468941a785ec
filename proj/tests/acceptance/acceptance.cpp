// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance [--only NAME]...
// Exit status is 0 iff every selected criterion passed.

#include "modelhash/encoding.hpp"
#include "modelhash/hos_features.hpp"
#include "modelhash/modsim.hpp"
#include "modelhash/similarity.hpp"
#include "modelhash/tamper_hash.hpp"
#include "modelhash/tensor_store.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

using namespace modelhash;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

HashConfig config(int B = 450) {
    HashConfig cfg;
    cfg.key = "acceptance-key";
    cfg.B = B;
    return cfg;
}

struct Suite {
    std::vector<sim::ArchSpec> specs;
    std::vector<ModelWeights> models;
};

const Suite& suite() {
    static const Suite s = [] {
        Suite out;
        out.specs = sim::default_suite();
        for (const auto& spec : out.specs) out.models.push_back(sim::generate_model(spec));
        return out;
    }();
    return s;
}

Outcome self_distance() {
    const auto t0 = Clock::now();
    const auto& s = suite();
    const auto cfg = config();
    const auto dir = std::filesystem::temp_directory_path() / ("modelhash-accept-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    bool ok = true;
    double worst = 0.0;
    for (const auto& m : s.models) {
        const auto path = dir / (m.model_id + ".bin");
        save_container(m, path);
        const auto a = piracy_hash(m, cfg);
        const auto b = piracy_hash(load_container(path), cfg);
        const auto r = weighted_distance(a, b);
        worst = std::max(worst, r.distance);
        ok = ok && r.distance == 0.0 && r.verdict == Verdict::Similar;
    }
    std::filesystem::remove_all(dir);
    const double secs = seconds_since(t0);
    return {ok && secs < 60.0, fmt("max self-distance %.3g over %zu models, %.1f s (limit 60 s)", worst,
                                   s.models.size(), secs)};
}

Outcome discrimination() {
    const auto& s = suite();
    const auto cfg = config();
    std::vector<PiracyHash> hashes;
    for (const auto& m : s.models) hashes.push_back(piracy_hash(m, cfg));
    double lo = 1.0;
    std::string lo_pair;
    int above = 0, total = 0;
    for (std::size_t i = 0; i < hashes.size(); ++i) {
        for (std::size_t j = i + 1; j < hashes.size(); ++j) {
            const double d = weighted_distance(hashes[i], hashes[j]).distance;
            ++total;
            above += d > cfg.weights.tau;
            if (d < lo) {
                lo = d;
                lo_pair = s.models[i].model_id + " / " + s.models[j].model_id;
            }
        }
    }
    return {above == total, fmt("%d/%d pairs above tau = %.2f, min %.4f (%s)", above, total, cfg.weights.tau, lo,
                                lo_pair.c_str())};
}

Outcome pruning() {
    const auto t0 = Clock::now();
    const auto& s = suite();
    const auto cfg = config();
    bool ok = true;
    double worst = 0.0, worst70 = 0.0;
    for (const auto& m : s.models) {
        const auto h = piracy_hash(m, cfg);
        for (int pct = 10; pct <= 70; pct += 10) {
            const double d = weighted_distance(h, piracy_hash(sim::prune(m, pct / 100.0), cfg)).distance;
            if (pct == 70) {
                worst70 = std::max(worst70, d);
            } else {
                worst = std::max(worst, d);
                ok = ok && d < cfg.weights.tau;
            }
        }
    }
    const double secs = seconds_since(t0);
    return {ok && secs < 300.0,
            fmt("max distance %.4f at rates 10-60%% (tau %.2f); 70%% (waived) max %.4f; %.1f s (limit 300 s)", worst,
                cfg.weights.tau, worst70, secs)};
}

Outcome finetune() {
    const auto& s = suite();
    const auto cfg = config();
    bool ok = true;
    double worst = 0.0;
    std::string worst_id;
    for (const auto& m : s.models) {
        const double d =
            weighted_distance(piracy_hash(m, cfg), piracy_hash(sim::finetune_surrogate(m, 0.01, 1), cfg)).distance;
        if (d > worst) {
            worst = d;
            worst_id = m.model_id;
        }
        ok = ok && d < cfg.weights.tau;
    }
    return {ok, fmt("epsilon 0.01: max distance %.4f (%s), tau %.2f", worst, worst_id.c_str(), cfg.weights.tau)};
}

struct LocalizationStats {
    double mean = 0.0;
    double min = 1.0;
    int runs = 0;
};

LocalizationStats localize(const std::vector<double>& alphas, double sigma, int seeds, TamperVariant variant) {
    const auto& s = suite();
    LocalizationStats st;
    double sum = 0.0;
    for (std::size_t i = 0; i < s.models.size(); ++i) {
        const auto cfg = config(s.specs[i].tamper_blocks);
        TamperOptions opt{variant, std::nullopt};
        const auto ref = tamper_localization_hash(s.models[i], cfg, opt);
        opt.anchor = ref.norm;
        for (double alpha : alphas) {
            for (int seed = 1; seed <= seeds; ++seed) {
                const auto out = sim::tamper(s.models[i], {alpha, sigma, static_cast<std::uint64_t>(seed)}, cfg.B);
                const auto test = tamper_localization_hash(out.model, cfg, opt);
                const double r = locate_tampering(ref, test, out.blocks).r_t.value_or(0.0);
                sum += r;
                st.min = std::min(st.min, r);
                ++st.runs;
            }
        }
    }
    st.mean = sum / st.runs;
    return st;
}

Outcome localization() {
    const auto t0 = Clock::now();
    const auto st = localize({0.1, 0.2, 0.3, 0.4, 0.5}, 0.1, 5, TamperVariant::Chaotic);
    const double secs = seconds_since(t0);
    return {st.mean >= 0.999 && st.min >= 0.99 && secs < 300.0,
            fmt("%d runs: mean R_t %.5f (need >= 0.999), min %.5f (need >= 0.99), %.1f s (limit 300 s)", st.runs,
                st.mean, st.min, secs)};
}

Outcome chaos_necessity() {
    const std::vector<double> alphas{0.1, 0.3, 0.5};
    const auto chaotic = localize(alphas, 1e-5, 5, TamperVariant::Chaotic);
    const auto direct = localize(alphas, 1e-5, 5, TamperVariant::Direct);
    return {direct.mean < chaotic.mean,
            fmt("sigma 1e-5, %d runs: chaotic mean R_t %.4f, direct mean R_t %.4f", chaotic.runs, chaotic.mean,
                direct.mean)};
}

Outcome hyperchaos() {
    sim::Rng rng(20240601);
    bool ok = true;
    double lo1 = INFINITY, lo2 = INFINITY;
    for (int i = 0; i < 10; ++i) {
        double x0 = 0.0;
        while (x0 == 0.0) x0 = rng.uniform01();
        const auto le = lyapunov_exponents(ChaosParams{}, x0, x0 / 2.0, 1000, 100000);
        lo1 = std::min(lo1, le.lambda1);
        lo2 = std::min(lo2, le.lambda2);
        ok = ok && le.lambda1 > 0.0 && le.lambda2 > 0.0;
    }
    return {ok, fmt("10 starts, horizon 1e5: min lambda1 %.4f, min lambda2 %.4f", lo1, lo2)};
}

Outcome sensitivity() {
    sim::Rng rng(777);
    int changed = 0;
    const int trials = 1000;
    for (int i = 0; i < trials; ++i) {
        const double x0 = rng.uniform01();
        changed += encode_state(chaotic_iterate(x0, {})) != encode_state(chaotic_iterate(x0 + 1e-8, {}));
    }
    return {changed >= 950, fmt("%d/%d codes changed under 1e-8 perturbations (need >= 950)", changed, trials)};
}

BitVector random_bits(sim::Rng& rng, std::size_t n) {
    BitVector v(n);
    for (std::size_t i = 0; i < n; ++i) v.set(i, rng.below(2) == 1);
    return v;
}

Outcome metric_crypto() {
    sim::Rng rng(99);
    int violations = 0;
    const int triples = 10000;
    for (int t = 0; t < triples; ++t) {
        const std::size_t n = 484;
        const auto x = random_bits(rng, n), y = random_bits(rng, n), z = random_bits(rng, n);
        const double dxy = hamming(x, y), dyx = hamming(y, x), dxz = hamming(x, z), dyz = hamming(y, z);
        // Distances are k/n, so the comparisons below are exact in integers.
        const auto cnt = [n](double d) { return std::llround(d * static_cast<double>(n)); };
        violations += hamming(x, x) != 0.0;
        violations += dxy != dyx;
        violations += cnt(dxz) > cnt(dxy) + cnt(dyz);
        violations += (dxy == 0.0) != (x == y);
        const std::string key = "key-" + std::to_string(t % 97);
        violations += !(decrypt(encrypt(x, key), key) == x);
        violations += hamming(encrypt(x, key), encrypt(y, key)) != dxy;
    }
    return {violations == 0, fmt("%d triples: %d violations of metric axioms, involution or key invariance", triples,
                                 violations)};
}

std::pair<long double, long double> naive_moments(const std::vector<double>& x) {
    long double n = x.size(), mean = 0;
    for (double v : x) mean += v;
    mean /= n;
    long double m2 = 0, m3 = 0, m4 = 0;
    for (double v : x) m2 += (v - mean) * (v - mean);
    m2 /= n;
    const long double sd = std::sqrt(m2);
    for (double v : x) {
        const long double z = (v - mean) / sd;
        m3 += z * z * z;
        m4 += z * z * z * z;
    }
    return {m3 / n, m4 / n};
}

Outcome statistics() {
    sim::Rng rng(4242);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> x(5 + rng.below(500));
        const double shift = 10.0 * rng.normal();
        const double scale = std::exp(rng.uniform(-5.0, 5.0));
        for (auto& v : x) v = shift + scale * (t % 2 ? rng.normal() : std::exp(rng.normal()));
        const auto [s, k] = naive_moments(x);
        const auto m = standardized_moments(x);
        worst = std::max(worst, static_cast<double>(std::abs(m.skewness - s) / std::max(1.0L, std::abs(s))));
        worst = std::max(worst, static_cast<double>(std::abs(m.kurtosis - k) / k));
    }
    const std::vector<double> v{1, 2, 3, 4};
    const std::vector<double> five{1, 2, 3, 4, 5};
    const bool hand = quantile(v, 0.5) == 2.5 && quantile(v, 0.0) == 1.0 && quantile(v, 1.0) == 4.0 &&
                      quantile(std::vector<double>{5}, 0.7) == 5.0 &&
                      std::abs(quantile(std::vector<double>{0, 10}, 0.25) - 2.5) < 1e-15 &&
                      std::abs(kurtosis(five) - 1.7) < 1e-14 && std::abs(skewness(five)) < 1e-15;
    return {worst <= 1e-12 && hand, fmt("max relative moment error %.2e over 1000 sequences (limit 1e-12); "
                                        "quantile/moment hand cases %s",
                                        worst, hand ? "ok" : "wrong")};
}

Outcome throughput() {
    const auto spec = sim::suite_spec("syn-resnet18");
    const auto model = sim::generate_model(spec);
    const auto dir = std::filesystem::temp_directory_path() / ("modelhash-tp-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    save_container(model, dir / "big.bin");
    const auto cfg = config();
    double best = INFINITY;
    StageTimings st;
    for (int i = 0; i < 3; ++i) {
        const auto t0 = Clock::now();
        const auto h = piracy_hash(load_container(dir / "big.bin"), cfg, &st);
        best = std::min(best, seconds_since(t0));
        if (h.T() != 484) best = INFINITY;
    }
    std::filesystem::remove_all(dir);
    return {model.parameter_count() >= 10000000 && best <= 5.0,
            fmt("%.3g parameters: load + hash %.3f s (limit 5 s); selection %.3f s, features %.3f s",
                static_cast<double>(model.parameter_count()), best, st.selection_seconds, st.features_seconds)};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"self_distance", self_distance},
        {"discrimination", discrimination},
        {"pruning", pruning},
        {"finetune", finetune},
        {"localization", localization},
        {"chaos_necessity", chaos_necessity},
        {"hyperchaos", hyperchaos},
        {"sensitivity", sensitivity},
        {"metric_crypto", metric_crypto},
        {"statistics", statistics},
        {"throughput", throughput},
    };

    std::set<std::string> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--only" && i + 1 < argc) {
            only.insert(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: %s [--only NAME]...\n", argv[0]);
            return 2;
        }
    }
    for (const auto& name : only) {
        if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == name; })) {
            std::fprintf(stderr, "unknown criterion '%s'\n", name.c_str());
            return 2;
        }
    }

    int failed = 0;
    for (const auto& [name, run] : criteria) {
        if (!only.empty() && !only.count(name)) continue;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
