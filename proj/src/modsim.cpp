#include "modelhash/modsim.hpp"

#include "json_io.hpp"
#include "modelhash/encoding.hpp"
#include "modelhash/error.hpp"
#include "modelhash/hos_features.hpp"
#include "modelhash/similarity.hpp"
#include "modelhash/tamper_hash.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace modelhash::sim {

double Rng::uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double a, double b) {
    return a + (b - a) * uniform01();
}

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    const double u1 = 1.0 - uniform01(); // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(t);
    has_cached_ = true;
    return r * std::cos(t);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw Error("empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

std::uint64_t ArchSpec::parameter_count() const {
    std::uint64_t n = 0;
    for (const auto& l : layers) {
        std::uint64_t c = 1;
        for (auto d : l.shape) c *= d;
        n += c;
    }
    return n;
}

void ArchSpec::validate(const HashConfig& cfg) const {
    if (layers.empty()) throw Error("architecture '" + name + "' has no layers");
    bool any_conv = false;
    for (const auto& l : layers) {
        any_conv = any_conv || l.conv;
        if (l.dist.kind == Distribution::Kind::Gaussian && !(l.dist.sigma > 0.0)) {
            throw Error("layer '" + l.name + "' has non-positive sigma");
        }
        if (l.dist.kind == Distribution::Kind::Uniform && !(l.dist.a < l.dist.b)) {
            throw Error("layer '" + l.name + "' has an empty uniform range");
        }
    }
    if (!any_conv) throw Error("architecture '" + name + "' has no convolution layer");
    const auto n = parameter_count();
    if (n < static_cast<std::uint64_t>(cfg.min_segment * cfg.N) || n < static_cast<std::uint64_t>(tamper_blocks)) {
        throw Error("architecture '" + name + "' is too small");
    }
}

ModelWeights generate_model(const ArchSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    ModelWeights model;
    model.model_id = spec.name;
    std::vector<std::string> conv;
    for (const auto& l : spec.layers) {
        Tensor t;
        t.meta.name = l.name;
        t.meta.dtype = DType::F64;
        t.meta.shape = l.shape;
        t.values.resize(t.meta.element_count());
        if (l.dist.kind == Distribution::Kind::Gaussian) {
            for (auto& v : t.values) v = l.dist.sigma * rng.normal();
        } else {
            for (auto& v : t.values) v = rng.uniform(l.dist.a, l.dist.b);
        }
        if (l.conv) conv.push_back(l.name);
        model.tensors.push_back(std::move(t));
    }
    model.conv_layer_flags = std::move(conv);
    normalize_layout(model);
    return model;
}

namespace {

// Builds layer lists for the default suite. Every weight layer draws the
// fraction f of its entries that should exceed the model-wide magnitude
// threshold (log-uniform, capped at 0.3) and, for uniform layers, how that
// fraction splits between the negative and positive side. The fractions are
// then rescaled so they average to the selection ratio 1/16, which makes the
// expected global threshold exactly kThreshold, and each layer's parameters
// are solved from its f. Capping f keeps magnitude pruning below 70% away
// from the selected weights; keeping both sides of a uniform layer well above
// the threshold avoids distribution edges that sit right at it.
class SuiteBuilder {
public:
    SuiteBuilder(std::string name, std::uint64_t seed, double uniform_share)
        : rng_(seed ^ 0x5bd1e995ULL), uniform_share_(uniform_share) {
        spec_.name = std::move(name);
        spec_.seed = seed;
    }

    void conv(std::uint64_t out, std::uint64_t in, std::uint64_t kh, std::uint64_t kw) {
        add("conv" + std::to_string(++conv_count_) + ".weight", {out, in, kh, kw}, true);
    }

    void fc(std::uint64_t out, std::uint64_t in, bool bias = true) {
        const auto idx = std::to_string(++fc_count_);
        add("fc" + idx + ".weight", {out, in}, false);
        if (bias) {
            LayerSpec b;
            b.name = "fc" + idx + ".bias";
            b.shape = {out};
            b.dist = Distribution::uniform(-0.5 * kThreshold, 0.5 * kThreshold);
            spec_.layers.push_back(std::move(b));
        }
    }

    ArchSpec finish(int blocks) {
        place();
        spec_.tamper_blocks = blocks;
        return std::move(spec_);
    }

private:
    static constexpr double kThreshold = 0.05;
    static constexpr double kMaxFraction = 0.3;

    struct Draw {
        std::size_t layer;
        double count;
        double fraction;
        double split; // share of the selected entries on the short side
        bool negative_long;
    };

    void add(std::string name, std::vector<std::uint64_t> shape, bool is_conv) {
        LayerSpec l;
        l.name = std::move(name);
        l.shape = std::move(shape);
        l.conv = is_conv;
        const bool uniform = rng_.uniform01() < uniform_share_;
        l.dist.kind = uniform ? Distribution::Kind::Uniform : Distribution::Kind::Gaussian;
        Draw d;
        d.layer = spec_.layers.size();
        d.count = 1.0;
        for (auto v : l.shape) d.count *= static_cast<double>(v);
        d.fraction = std::exp(rng_.uniform(std::log(0.01), std::log(kMaxFraction)));
        d.split = rng_.uniform(0.25, 0.5);
        d.negative_long = rng_.uniform01() < 0.5;
        draws_.push_back(d);
        spec_.layers.push_back(std::move(l));
    }

    // z with P(|Z| > z) = f for a standard normal Z.
    static double two_sided_z(double f) {
        double lo = 0.0, hi = 40.0;
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            (std::erfc(mid / std::numbers::sqrt2) > f ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

    void place() {
        double total = 0.0;
        for (const auto& d : draws_) total += d.count;
        const double target = total / 16.0;
        for (int it = 0; it < 100; ++it) {
            double selected = 0.0;
            for (const auto& d : draws_) selected += d.count * d.fraction;
            const double g = target / selected;
            if (std::abs(g - 1.0) < 1e-12) break;
            for (auto& d : draws_) d.fraction = std::min(kMaxFraction, d.fraction * g);
        }
        for (const auto& d : draws_) {
            auto& dist = spec_.layers[d.layer].dist;
            if (dist.kind == Distribution::Kind::Gaussian) {
                dist.sigma = kThreshold / two_sided_z(d.fraction);
                continue;
            }
            const double width = 2.0 * kThreshold / (1.0 - d.fraction);
            const double short_side = kThreshold + d.split * d.fraction * width;
            const double long_side = kThreshold + (1.0 - d.split) * d.fraction * width;
            dist.a = d.negative_long ? -long_side : -short_side;
            dist.b = d.negative_long ? short_side : long_side;
        }
    }

    ArchSpec spec_;
    Rng rng_;
    double uniform_share_;
    std::vector<Draw> draws_;
    int conv_count_ = 0;
    int fc_count_ = 0;
};

ArchSpec cifar_resnet(const std::string& name, int n, std::uint64_t seed, double uniform_share) {
    SuiteBuilder s(name, seed, uniform_share);
    s.conv(16, 3, 3, 3);
    std::uint64_t in = 16;
    for (std::uint64_t width : {16, 32, 64}) {
        for (int i = 0; i < 2 * n; ++i) {
            s.conv(width, in, 3, 3);
            in = width;
        }
    }
    s.fc(10, 64);
    return s.finish(450);
}

ArchSpec resnet18(std::uint64_t seed) {
    SuiteBuilder s("syn-resnet18", seed, 0.5);
    s.conv(64, 3, 3, 3);
    std::uint64_t in = 64;
    for (std::uint64_t width : {64, 128, 256, 512}) {
        for (int block = 0; block < 2; ++block) {
            s.conv(width, in, 3, 3);
            s.conv(width, width, 3, 3);
            if (in != width) s.conv(width, in, 1, 1);
            in = width;
        }
    }
    s.fc(10, 512);
    return s.finish(450);
}

ArchSpec vgg16(std::uint64_t seed) {
    SuiteBuilder s("syn-vgg16", seed, 0.7);
    std::uint64_t in = 3;
    for (auto [width, reps] : std::vector<std::pair<std::uint64_t, int>>{{64, 2}, {128, 2}, {256, 3}, {384, 3}, {384, 3}}) {
        for (int i = 0; i < reps; ++i) {
            s.conv(width, in, 3, 3);
            in = width;
        }
    }
    s.fc(10, 384);
    return s.finish(450);
}

ArchSpec densenet121(std::uint64_t seed) {
    SuiteBuilder s("syn-densenet121", seed, 0.4);
    const std::uint64_t growth = 32;
    std::uint64_t channels = 2 * growth;
    s.conv(channels, 3, 3, 3);
    const int layers_per_block[] = {6, 12, 24, 16};
    for (int b = 0; b < 4; ++b) {
        for (int i = 0; i < layers_per_block[b]; ++i) {
            s.conv(4 * growth, channels, 1, 1);
            s.conv(growth, 4 * growth, 3, 3);
            channels += growth;
        }
        if (b != 3) {
            s.conv(channels / 2, channels, 1, 1);
            channels /= 2;
        }
    }
    s.fc(10, channels);
    return s.finish(450);
}

ArchSpec mnist_net(std::uint64_t seed) {
    SuiteBuilder s("syn-mnistnet", seed, 0.6);
    s.conv(20, 1, 5, 5);
    s.conv(50, 20, 5, 5);
    s.fc(100, 800);
    s.fc(10, 100);
    return s.finish(100);
}

ArchSpec lenet(std::uint64_t seed) {
    SuiteBuilder s("syn-lenet", seed, 0.3);
    s.conv(6, 1, 5, 5);
    s.conv(16, 6, 5, 5);
    s.fc(120, 400);
    s.fc(84, 120);
    s.fc(10, 84);
    return s.finish(100);
}

} // namespace

std::vector<ArchSpec> default_suite() {
    return {
        resnet18(1801),
        cifar_resnet("syn-resnet32", 5, 3201, 0.5),
        cifar_resnet("syn-resnet56", 9, 5601, 0.5),
        cifar_resnet("syn-resnet110", 18, 11001, 0.5),
        densenet121(12101),
        vgg16(1601),
        mnist_net(2801),
        lenet(501),
    };
}

ArchSpec suite_spec(const std::string& name) {
    for (auto& s : default_suite()) {
        if (s.name == name) return s;
    }
    throw Error("unknown architecture '" + name + "'");
}

ModelWeights prune(const ModelWeights& model, double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw Error("prune rate must lie in [0, 1)");
    ModelWeights out = model;
    if (rate == 0.0) return out;
    for (auto& t : out.tensors) {
        if (t.meta.rank() < 2 || t.values.empty()) continue;
        std::vector<double> mags(t.values.size());
        std::transform(t.values.begin(), t.values.end(), mags.begin(), [](double v) { return std::abs(v); });
        const double th = quantile(mags, rate);
        for (auto& v : t.values) {
            if (std::abs(v) < th) v = 0.0;
        }
    }
    return out;
}

std::set<std::size_t> choose_blocks(double alpha, int B, std::uint64_t seed) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("tamper fraction alpha must lie in (0, 1]");
    if (B < 1) throw Error("block count must be positive");
    const auto count = static_cast<std::size_t>(std::llround(alpha * B));
    if (count == 0) throw Error("empty tamper plan");

    std::vector<std::size_t> idx(static_cast<std::size_t>(B));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + rng.below(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }
    return {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count)};
}

TamperOutcome tamper(const ModelWeights& model, const TamperPlan& plan, int B) {
    if (!(plan.sigma >= 0.0)) throw Error("tamper sigma must be non-negative");
    TamperOutcome out{model, choose_blocks(plan.alpha, B, plan.seed)};
    const auto blocks = block_partition(out.model.parameter_count(), B);

    // Noise uses a stream separate from block selection.
    Rng noise(plan.seed ^ 0xA5A5A5A5DEADBEEFULL);
    for (auto b : out.blocks) {
        auto pos = blocks[b].begin;
        const auto end = blocks[b].end;
        std::uint64_t offset = 0;
        for (auto& t : out.model.tensors) {
            const std::uint64_t n = t.values.size();
            while (pos < end && pos >= offset && pos < offset + n) {
                t.values[pos - offset] += plan.sigma * noise.normal();
                ++pos;
            }
            offset += n;
            if (pos >= end) break;
        }
    }
    return out;
}

ModelWeights finetune_surrogate(const ModelWeights& model, double epsilon, std::uint64_t seed) {
    if (!(epsilon > 0.0 && epsilon <= 0.1)) throw Error("epsilon must lie in (0, 0.1]");
    ModelWeights out = model;
    Rng rng(seed);
    for (auto& t : out.tensors) {
        for (auto& v : t.values) v *= 1.0 + epsilon * rng.normal();
    }
    return out;
}

namespace {

using detail::ordered_json;

Distribution dist_from_json(const ordered_json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "gaussian") return Distribution::gaussian(j.at("sigma").get<double>());
    if (kind == "uniform") return Distribution::uniform(j.at("a").get<double>(), j.at("b").get<double>());
    throw Error("unknown distribution kind '" + kind + "'");
}

ordered_json dist_to_json(const Distribution& d) {
    if (d.kind == Distribution::Kind::Gaussian) return {{"kind", "gaussian"}, {"sigma", d.sigma}};
    return {{"kind", "uniform"}, {"a", d.a}, {"b", d.b}};
}

ArchSpec spec_from_json(const ordered_json& j) {
    try {
        ArchSpec s;
        s.name = j.at("name").get<std::string>();
        s.seed = j.value("seed", std::uint64_t{0});
        s.tamper_blocks = j.value("tamper_blocks", 450);
        for (const auto& l : j.at("layers")) {
            LayerSpec layer;
            layer.name = l.at("name").get<std::string>();
            layer.shape = l.at("shape").get<std::vector<std::uint64_t>>();
            layer.conv = l.value("conv", false);
            layer.dist = dist_from_json(l.at("dist"));
            s.layers.push_back(std::move(layer));
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed architecture spec: ") + e.what());
    }
}

ArchSpec resolve_spec(const ordered_json& j) {
    if (j.is_string()) return suite_spec(j.get<std::string>());
    return spec_from_json(j);
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss << v;
    return ss.str();
}

} // namespace

ArchSpec arch_spec_from_json(std::string_view text) {
    return spec_from_json(detail::parse_json_text(text, "architecture spec"));
}

std::string arch_spec_to_json(const ArchSpec& spec) {
    ordered_json j;
    j["name"] = spec.name;
    j["seed"] = spec.seed;
    j["tamper_blocks"] = spec.tamper_blocks;
    j["layers"] = ordered_json::array();
    for (const auto& l : spec.layers) {
        j["layers"].push_back({{"name", l.name}, {"shape", l.shape}, {"conv", l.conv}, {"dist", dist_to_json(l.dist)}});
    }
    return j.dump();
}

std::vector<ResultRow> run_manifest(std::string_view manifest_json) {
    const auto manifest = detail::parse_json_text(manifest_json, "manifest");
    std::vector<ResultRow> rows;
    try {
        HashConfig base;
        base.key = manifest.value("key", std::string("modelhash-simulation"));
        for (const auto& exp : manifest.at("experiments")) {
            const auto spec = resolve_spec(exp.at("spec"));
            const auto transform = exp.at("transform").get<std::string>();
            const auto params = exp.value("params", ordered_json::object());
            auto seeds = exp.value("seeds", std::vector<std::uint64_t>{0});
            if (seeds.empty()) seeds.push_back(0);

            HashConfig cfg = base;
            cfg.B = params.value("B", spec.tamper_blocks);
            const auto original = generate_model(spec);

            for (auto seed : seeds) {
                ResultRow row;
                row.model_id = spec.name;
                row.transform = transform;
                row.seed = seed;
                if (transform == "identity" || transform == "prune" || transform == "finetune") {
                    ModelWeights modified = original;
                    if (transform == "prune") {
                        const double rate = params.at("rate").get<double>();
                        row.params = "rate=" + fmt(rate);
                        modified = prune(original, rate);
                    } else if (transform == "finetune") {
                        const double eps = params.at("epsilon").get<double>();
                        row.params = "epsilon=" + fmt(eps);
                        modified = finetune_surrogate(original, eps, seed);
                    }
                    const auto m = weighted_distance(piracy_hash(original, cfg), piracy_hash(modified, cfg), cfg.weights);
                    row.metric = "distance";
                    row.value = m.distance;
                    rows.push_back(row);
                    row.metric = "similar";
                    row.value = m.verdict == Verdict::Similar ? 1.0 : 0.0;
                    rows.push_back(row);
                } else if (transform == "tamper") {
                    TamperPlan plan;
                    plan.alpha = params.value("alpha", 0.1);
                    plan.sigma = params.value("sigma", 0.1);
                    plan.seed = seed;
                    TamperOptions options;
                    const auto variant = params.value("variant", std::string("chaotic"));
                    if (variant == "direct") {
                        options.variant = TamperVariant::Direct;
                    } else if (variant != "chaotic") {
                        throw Error("unknown tamper variant '" + variant + "'");
                    }
                    row.params = "alpha=" + fmt(plan.alpha) + ",sigma=" + fmt(plan.sigma) + ",B=" +
                                 std::to_string(cfg.B) + ",variant=" + variant;
                    const auto ref = tamper_localization_hash(original, cfg, options);
                    auto outcome = tamper(original, plan, cfg.B);
                    options.anchor = ref.norm;
                    const auto test = tamper_localization_hash(outcome.model, cfg, options);
                    const auto report = locate_tampering(ref, test, outcome.blocks);
                    row.metric = "R_t";
                    row.value = report.r_t.value_or(0.0);
                    rows.push_back(row);
                    row.metric = "false_flags";
                    row.value = static_cast<double>(report.false_flags.value_or(0));
                    rows.push_back(row);
                } else {
                    throw Error("unknown transform '" + transform + "'");
                }
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    }
    return rows;
}

std::string results_to_tsv(const std::vector<ResultRow>& rows) {
    std::ostringstream out;
    out << "model_id\ttransform\tparams\tseed\tmetric\tvalue\n";
    for (const auto& r : rows) {
        out << r.model_id << '\t' << r.transform << '\t' << (r.params.empty() ? "-" : r.params) << '\t'
            << r.seed << '\t' << r.metric << '\t' << fmt(r.value) << '\n';
    }
    return out.str();
}

} // namespace modelhash::sim
