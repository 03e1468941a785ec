#include "modelhash/encoding.hpp"

#include "json_io.hpp"
#include "modelhash/error.hpp"

#include <algorithm>
#include <cmath>

namespace modelhash {

namespace {

constexpr std::uint64_t kZeroSeedReplacement = 0x9E3779B97F4A7C15ULL;
constexpr int kHashFileVersion = 1;

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

} // namespace

BitVector::BitVector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto& b : bits_) {
        if (b > 1) throw Error("bit values must be 0 or 1");
    }
}

BitVector BitVector::from_string(std::string_view s) {
    BitVector v;
    for (char c : s) {
        if (c == '0' || c == '1') {
            v.push_back(c == '1');
        } else if (c != ' ' && c != '_') {
            throw Error("invalid bit character");
        }
    }
    return v;
}

BitVector BitVector::from_hex(std::string_view hex, std::size_t nbits) {
    if (hex.size() != (nbits + 3) / 4) {
        throw FormatError("hex length " + std::to_string(hex.size()) + " does not encode " +
                          std::to_string(nbits) + " bits");
    }
    BitVector v;
    v.bits_.reserve(hex.size() * 4);
    for (char c : hex) {
        const int x = hex_value(c);
        if (x < 0) throw FormatError("invalid hex digit");
        v.append_uint(static_cast<std::uint64_t>(x), 4);
    }
    for (std::size_t i = nbits; i < v.size(); ++i) {
        if (v.bits_[i]) throw FormatError("non-zero padding bits in hex field");
    }
    v.bits_.resize(nbits);
    return v;
}

void BitVector::append(const BitVector& other) {
    bits_.insert(bits_.end(), other.bits_.begin(), other.bits_.end());
}

void BitVector::append_uint(std::uint64_t value, int width) {
    for (int i = width - 1; i >= 0; --i) bits_.push_back(static_cast<std::uint8_t>((value >> i) & 1U));
}

std::uint64_t BitVector::read_uint(std::size_t offset, int width) const {
    if (offset + static_cast<std::size_t>(width) > bits_.size()) throw Error("bit read out of range");
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v = (v << 1) | bits_[offset + static_cast<std::size_t>(i)];
    return v;
}

std::size_t BitVector::count_ones() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::string BitVector::to_hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve((bits_.size() + 3) / 4);
    for (std::size_t i = 0; i < bits_.size(); i += 4) {
        unsigned nibble = 0;
        for (std::size_t j = 0; j < 4; ++j) {
            nibble <<= 1;
            if (i + j < bits_.size()) nibble |= bits_[i + j];
        }
        out.push_back(digits[nibble]);
    }
    return out;
}

std::string BitVector::to_string() const {
    std::string out;
    out.reserve(bits_.size());
    for (auto b : bits_) out.push_back(b ? '1' : '0');
    return out;
}

BitVector BitVector::operator^(const BitVector& other) const {
    if (other.size() != size()) throw Error("bit vector length mismatch");
    BitVector out(size());
    for (std::size_t i = 0; i < size(); ++i) out.bits_[i] = bits_[i] ^ other.bits_[i];
    return out;
}

KeyStream::KeyStream(std::string_view key) {
    if (key.empty()) throw Error("key must not be empty");
    seed_ = fnv1a64(key);
    if (seed_ == 0) seed_ = kZeroSeedReplacement;
    state_ = seed_;
}

std::uint64_t KeyStream::next_word() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
}

BitVector KeyStream::take(std::size_t n) {
    BitVector out;
    for (std::size_t i = 0; i < n; ++i) {
        if (remaining_ == 0) {
            word_ = next_word();
            remaining_ = 64;
        }
        --remaining_;
        out.push_back((word_ >> remaining_) & 1U);
    }
    return out;
}

BitVector keystream_bits(std::string_view key, std::size_t n) {
    if (n == 0) throw Error("keystream length must be positive");
    return KeyStream(key).take(n);
}

BitVector encrypt(const BitVector& bits, std::string_view key) {
    if (bits.empty()) return bits;
    return bits ^ keystream_bits(key, bits.size());
}

std::vector<std::uint32_t> quantize_levels(std::span<const double> a, int b_bits) {
    if (a.empty()) throw Error("cannot encode an empty sequence");
    if (b_bits < 1 || b_bits > 16) throw Error("bits per value must lie in [1, 16]");
    for (double v : a) {
        if (!std::isfinite(v)) throw Error("cannot encode non-finite value");
    }
    const double lowest = *std::min_element(a.begin(), a.end());
    std::vector<double> z(a.size());
    std::transform(a.begin(), a.end(), z.begin(), [&](double v) { return std::log1p(v - lowest); });
    const double top = *std::max_element(z.begin(), z.end());
    const double span = static_cast<double>((1U << b_bits) - 1U);

    std::vector<std::uint32_t> levels(a.size(), 0);
    if (top > 0.0) {
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double u = z[i] / top;
            levels[i] = static_cast<std::uint32_t>(std::min(std::floor(u * span + 0.5), span));
        }
    }
    return levels;
}

BitVector encode_sequence(std::span<const double> a, int b_bits) {
    BitVector out;
    for (auto level : quantize_levels(a, b_bits)) out.append_uint(level, b_bits);
    return out;
}

PiracyHash piracy_hash(const ModelWeights& model, const HashConfig& cfg, StageTimings* timings) {
    cfg.validate();
    const auto hos = hos_sequence(model, cfg, timings);
    const auto structure = structure_sequence(model, cfg.K);

    PiracyHash h;
    h.model_id = model.model_id;
    h.N = cfg.N;
    h.b = cfg.b;
    h.K = cfg.K;
    h.hos_bits = encrypt(encode_sequence(hos.concatenated(), cfg.b), cfg.key);
    h.struct_bits = encrypt(encode_sequence(structure.values, cfg.b), cfg.key);
    h.config_digest = cfg.piracy_digest();
    return h;
}

namespace detail {

ordered_json to_json(const PiracyHash& h) {
    return {
        {"version", kHashFileVersion},
        {"kind", "piracy"},
        {"model_id", h.model_id},
        {"T", h.T()},
        {"N", h.N},
        {"b", h.b},
        {"K", h.K},
        {"hos_bits", h.hos_bits.to_hex()},
        {"struct_bits", h.struct_bits.to_hex()},
        {"config_digest", h.config_digest},
    };
}

PiracyHash piracy_from_json(const ordered_json& j) {
    try {
        if (j.at("version").get<int>() != kHashFileVersion) throw FormatError("unsupported hash file version");
        if (j.contains("kind") && j.at("kind") != "piracy") throw FormatError("not a piracy hash record");
        PiracyHash h;
        h.model_id = j.at("model_id").get<std::string>();
        h.N = j.at("N").get<int>();
        h.b = j.at("b").get<int>();
        h.K = j.at("K").get<int>();
        if (h.N < 1 || h.b < 1 || h.b > 16 || h.K < 1) throw FormatError("invalid hash dimensions");
        const auto hos_len = static_cast<std::size_t>(2 * h.N * h.b);
        const auto struct_len = static_cast<std::size_t>((1 + h.K) * h.b);
        h.hos_bits = BitVector::from_hex(j.at("hos_bits").get<std::string>(), hos_len);
        h.struct_bits = BitVector::from_hex(j.at("struct_bits").get<std::string>(), struct_len);
        h.config_digest = j.at("config_digest").get<std::string>();
        if (j.at("T").get<int>() != h.T()) throw FormatError("T disagrees with N, b, K");
        return h;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed piracy hash record: ") + e.what());
    }
}

} // namespace detail

std::string piracy_hash_to_json(const PiracyHash& h) {
    return detail::to_json(h).dump();
}

PiracyHash piracy_hash_from_json(std::string_view text) {
    return detail::piracy_from_json(detail::parse_json_text(text, "piracy hash"));
}

void save_piracy_hash(const PiracyHash& h, const std::filesystem::path& path) {
    detail::write_text_file(path, piracy_hash_to_json(h) + "\n");
}

PiracyHash load_piracy_hash(const std::filesystem::path& path) {
    return piracy_hash_from_json(detail::read_text_file(path));
}

} // namespace modelhash
