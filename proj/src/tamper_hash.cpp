#include "modelhash/tamper_hash.hpp"

#include "json_io.hpp"
#include "modelhash/encoding.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <sstream>

namespace modelhash {

namespace {

constexpr int kTamperFileVersion = 1;

std::string_view variant_name(TamperVariant v) {
    return v == TamperVariant::Chaotic ? "chaotic" : "direct";
}

TamperVariant parse_variant(std::string_view s) {
    if (s == "chaotic") return TamperVariant::Chaotic;
    if (s == "direct") return TamperVariant::Direct;
    throw FormatError("unknown tamper variant '" + std::string(s) + "'");
}

std::string digest_for(const HashConfig& cfg, TamperVariant variant) {
    if (variant == TamperVariant::Chaotic) return cfg.tamper_digest();
    return hex64(fnv1a64(cfg.tamper_digest() + ";direct"));
}

BitVector code_bits(std::uint32_t code) {
    BitVector bits;
    bits.append_uint(code, kStateCodeBits);
    return bits;
}

// Codes are encrypted block by block with keystreams derived from key || index.
std::uint32_t encrypt_code(std::uint32_t code, const std::string& key, std::size_t index) {
    const auto enc = encrypt(code_bits(code), key + std::to_string(index));
    return static_cast<std::uint32_t>(enc.read_uint(0, kStateCodeBits));
}

NormRange range_of(std::span<const double> flat) {
    const auto [lo, hi] = std::minmax_element(flat.begin(), flat.end());
    return {*lo, *hi};
}

// Min-max normalization to [0, 1] (0.5 everywhere for a constant range),
// then per-block mean and, for the chaotic variant, the map's final state.
std::vector<BlockFeature> features_of(std::span<const double> flat, const HashConfig& cfg,
                                      const NormRange& range, TamperVariant variant);

} // namespace

double chaotic_iterate(double x0, const ChaosParams& params) {
    if (!std::isfinite(x0)) throw Error("initial state must be finite");
    if (params.iterations < 1) throw Error("iterations must be at least 1");
    double x = x0;
    double q = x0 / 2.0;
    for (int step = 1; step <= params.iterations; ++step) {
        const double next_x = params.mu * x * (1.0 - x) + params.k * std::cos(q) * x;
        const double next_q = q + x;
        if (!std::isfinite(next_x) || !std::isfinite(next_q)) throw MapDivergence(step);
        x = next_x;
        q = next_q;
    }
    return x;
}

LyapunovExponents lyapunov_exponents(const ChaosParams& params, double x0, double q0, long warmup,
                                     long horizon) {
    if (horizon < 10000) throw Error("Lyapunov horizon must be at least 10^4 steps");
    if (warmup < 0) throw Error("warmup must be non-negative");
    const double mu = params.mu;
    const double k = params.k;

    double x = x0;
    double q = q0;
    auto advance = [&](long step) {
        const double nx = mu * x * (1.0 - x) + k * std::cos(q) * x;
        const double nq = q + x;
        if (!std::isfinite(nx) || !std::isfinite(nq)) {
            throw MapDivergence(static_cast<int>(std::min<long>(step, INT32_MAX)));
        }
        x = nx;
        q = nq;
    };
    for (long i = 0; i < warmup; ++i) advance(i + 1);

    // Orthonormal tangent frame (u, v).
    double ux = 1.0, uq = 0.0;
    double vx = 0.0, vq = 1.0;
    double sum1 = 0.0, sum2 = 0.0;
    for (long i = 0; i < horizon; ++i) {
        const double j11 = mu * (1.0 - 2.0 * x) + k * std::cos(q);
        const double j12 = -k * x * std::sin(q);
        // Second row of the Jacobian is [1, 1].
        const double au_x = j11 * ux + j12 * uq, au_q = ux + uq;
        const double av_x = j11 * vx + j12 * vq, av_q = vx + vq;

        const double n1 = std::hypot(au_x, au_q);
        ux = au_x / n1;
        uq = au_q / n1;
        const double proj = av_x * ux + av_q * uq;
        const double wx = av_x - proj * ux;
        const double wq = av_q - proj * uq;
        const double n2 = std::hypot(wx, wq);
        vx = wx / n2;
        vq = wq / n2;

        sum1 += std::log(n1);
        sum2 += std::log(n2);
        advance(warmup + i + 1);
    }
    const double l1 = sum1 / static_cast<double>(horizon);
    const double l2 = sum2 / static_cast<double>(horizon);
    return {std::max(l1, l2), std::min(l1, l2)};
}

std::vector<BlockRange> block_partition(std::uint64_t total, int B) {
    if (B < 1) throw Error("block count must be positive");
    const auto count = static_cast<std::uint64_t>(B);
    if (total < count) {
        throw Error("too few parameters (" + std::to_string(total) + ") for " + std::to_string(B) +
                    " blocks");
    }
    const std::uint64_t base = total / count;
    const std::uint64_t extra = total % count;
    std::vector<BlockRange> blocks;
    blocks.reserve(count);
    std::uint64_t offset = 0;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint64_t len = base + (i < extra ? 1 : 0);
        blocks.push_back({offset, offset + len});
        offset += len;
    }
    return blocks;
}

std::uint32_t encode_state(double x) {
    if (!std::isfinite(x)) throw Error("cannot encode non-finite state");
    std::uint32_t code = std::signbit(x) && x != 0.0 ? 1U : 0U;
    const double mag = std::abs(x);
    std::array<std::uint32_t, 4> digits{0, 0, 0, 0};
    if (mag != 0.0) {
        // 30 significant digits is far past where a carry could reach the
        // fourth digit, so the leading four are the truncated mantissa.
        char buf[64];
        const auto res = std::to_chars(buf, buf + sizeof buf, mag, std::chars_format::scientific, 30);
        if (res.ec != std::errc{}) throw Error("state formatting failed");
        digits = {static_cast<std::uint32_t>(buf[0] - '0'), static_cast<std::uint32_t>(buf[2] - '0'),
                  static_cast<std::uint32_t>(buf[3] - '0'), static_cast<std::uint32_t>(buf[4] - '0')};
    }
    for (auto d : digits) code = (code << 4) | d;
    return code;
}

namespace {

std::vector<BlockFeature> features_of(std::span<const double> flat, const HashConfig& cfg,
                                      const NormRange& range, TamperVariant variant) {
    const auto blocks = block_partition(flat.size(), cfg.B);
    const double width = range.max - range.min;

    std::vector<BlockFeature> features;
    features.reserve(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& blk = blocks[i];
        double sum = 0.0;
        for (auto j = blk.begin; j < blk.end; ++j) {
            sum += width > 0.0 ? (flat[j] - range.min) / width : 0.5;
        }
        BlockFeature f;
        f.index = i;
        f.mean = sum / static_cast<double>(blk.size());
        if (variant == TamperVariant::Chaotic) {
            try {
                f.final_x = chaotic_iterate(f.mean, cfg.chaos);
            } catch (const MapDivergence& e) {
                throw Error("block " + std::to_string(i) + ": " + e.what());
            }
        } else {
            f.final_x = f.mean;
        }
        features.push_back(f);
    }
    return features;
}

} // namespace

bool operator==(const TamperHash& a, const TamperHash& b) {
    return a.model_id == b.model_id && a.B == b.B && a.chaos.mu == b.chaos.mu &&
           a.chaos.k == b.chaos.k && a.chaos.iterations == b.chaos.iterations &&
           a.variant == b.variant && a.total_params == b.total_params && a.norm == b.norm &&
           a.codes == b.codes && a.boundaries == b.boundaries && a.config_digest == b.config_digest;
}

std::vector<BlockFeature> block_features(const ModelWeights& model, const HashConfig& cfg,
                                         const TamperOptions& options) {
    const auto flat = flatten_weights(model, TensorFilter::All);
    return features_of(flat, cfg, options.anchor.value_or(range_of(flat)), options.variant);
}

TamperHash tamper_localization_hash(const ModelWeights& model, const HashConfig& cfg,
                                    const TamperOptions& options) {
    cfg.validate();
    const auto flat = flatten_weights(model, TensorFilter::All);

    TamperHash h;
    h.model_id = model.model_id;
    h.B = cfg.B;
    h.chaos = cfg.chaos;
    h.variant = options.variant;
    h.total_params = flat.size();
    h.boundaries = block_partition(h.total_params, cfg.B);
    h.norm = options.anchor.value_or(range_of(flat));

    const auto features = features_of(flat, cfg, h.norm, options.variant);
    h.codes.reserve(features.size());
    for (const auto& f : features) {
        h.codes.push_back(encrypt_code(encode_state(f.final_x), cfg.key, f.index));
    }
    h.config_digest = digest_for(cfg, options.variant);
    return h;
}

TamperReport locate_tampering(const TamperHash& reference, const TamperHash& test,
                              const std::optional<std::set<std::size_t>>& ground_truth) {
    if (reference.B != test.B || reference.codes.size() != test.codes.size()) {
        throw ConfigMismatch("block counts differ (" + std::to_string(reference.B) + " vs " +
                             std::to_string(test.B) + ")");
    }
    if (reference.config_digest != test.config_digest) {
        throw ConfigMismatch("tamper hash digests differ");
    }
    if (reference.total_params != test.total_params) {
        throw ConfigMismatch("parameter counts differ");
    }

    TamperReport report;
    report.B = reference.B;
    for (std::size_t i = 0; i < reference.codes.size(); ++i) {
        if (reference.codes[i] != test.codes[i]) report.flagged.push_back(i);
    }
    if (ground_truth) {
        for (auto idx : *ground_truth) {
            if (idx >= reference.codes.size()) {
                throw Error("ground-truth block " + std::to_string(idx) + " out of range");
            }
        }
        std::size_t hit = 0;
        for (auto idx : report.flagged) hit += ground_truth->count(idx);
        report.eta = ground_truth->size();
        report.eta_prime = hit;
        report.false_flags = report.flagged.size() - hit;
        if (!ground_truth->empty()) {
            report.r_t = static_cast<double>(hit) / static_cast<double>(ground_truth->size());
        }
    }
    return report;
}

std::string tamper_report_to_json(const TamperReport& report) {
    detail::ordered_json j;
    j["B"] = report.B;
    j["flagged"] = report.flagged;
    j["flagged_count"] = report.flagged.size();
    j["eta"] = report.eta ? detail::ordered_json(*report.eta) : detail::ordered_json(nullptr);
    j["eta_prime"] = report.eta_prime ? detail::ordered_json(*report.eta_prime) : detail::ordered_json(nullptr);
    j["R_t"] = report.r_t ? detail::ordered_json(*report.r_t) : detail::ordered_json(nullptr);
    j["false_flags"] =
        report.false_flags ? detail::ordered_json(*report.false_flags) : detail::ordered_json(nullptr);
    return j.dump();
}

namespace detail {

ordered_json to_json(const TamperHash& h) {
    BitVector bits;
    for (auto code : h.codes) bits.append_uint(code, kStateCodeBits);
    return {
        {"version", kTamperFileVersion},
        {"kind", "tamper"},
        {"model_id", h.model_id},
        {"B", h.B},
        {"iterations", h.chaos.iterations},
        {"mu", h.chaos.mu},
        {"k", h.chaos.k},
        {"variant", variant_name(h.variant)},
        {"total_params", h.total_params},
        {"norm_min", h.norm.min},
        {"norm_max", h.norm.max},
        {"codes", bits.to_hex()},
        {"config_digest", h.config_digest},
    };
}

TamperHash tamper_from_json(const ordered_json& j) {
    try {
        if (j.at("version").get<int>() != kTamperFileVersion) throw FormatError("unsupported tamper hash version");
        if (j.contains("kind") && j.at("kind") != "tamper") throw FormatError("not a tamper hash record");
        TamperHash h;
        h.model_id = j.at("model_id").get<std::string>();
        h.B = j.at("B").get<int>();
        h.chaos.iterations = j.at("iterations").get<int>();
        h.chaos.mu = j.at("mu").get<double>();
        h.chaos.k = j.at("k").get<double>();
        h.variant = parse_variant(j.value("variant", std::string("chaotic")));
        h.total_params = j.at("total_params").get<std::uint64_t>();
        h.norm = {j.at("norm_min").get<double>(), j.at("norm_max").get<double>()};
        h.boundaries = block_partition(h.total_params, h.B);
        const auto bits = BitVector::from_hex(j.at("codes").get<std::string>(),
                                              static_cast<std::size_t>(h.B) * kStateCodeBits);
        for (int i = 0; i < h.B; ++i) {
            h.codes.push_back(static_cast<std::uint32_t>(
                bits.read_uint(static_cast<std::size_t>(i) * kStateCodeBits, kStateCodeBits)));
        }
        h.config_digest = j.at("config_digest").get<std::string>();
        return h;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed tamper hash record: ") + e.what());
    }
}

} // namespace detail

std::string tamper_hash_to_json(const TamperHash& h) {
    return detail::to_json(h).dump();
}

TamperHash tamper_hash_from_json(std::string_view text) {
    return detail::tamper_from_json(detail::parse_json_text(text, "tamper hash"));
}

void save_tamper_hash(const TamperHash& h, const std::filesystem::path& path) {
    detail::write_text_file(path, tamper_hash_to_json(h) + "\n");
}

TamperHash load_tamper_hash(const std::filesystem::path& path) {
    return tamper_hash_from_json(detail::read_text_file(path));
}

std::set<std::size_t> load_block_set(const std::filesystem::path& path) {
    std::string text = detail::read_text_file(path);
    std::replace(text.begin(), text.end(), ',', ' ');
    std::istringstream in(text);
    std::set<std::size_t> blocks;
    std::string token;
    while (in >> token) {
        std::size_t value = 0;
        const auto* end = token.data() + token.size();
        const auto res = std::from_chars(token.data(), end, value);
        if (res.ec != std::errc{} || res.ptr != end) {
            throw FormatError("invalid block index '" + token + "' in " + path.string());
        }
        blocks.insert(value);
    }
    return blocks;
}

void save_block_set(const std::set<std::size_t>& blocks, const std::filesystem::path& path) {
    std::string text;
    for (auto b : blocks) text += std::to_string(b) + "\n";
    detail::write_text_file(path, text);
}

} // namespace modelhash
