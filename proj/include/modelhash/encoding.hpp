#pragma once

#include "modelhash/config.hpp"
#include "modelhash/hos_features.hpp"
#include "modelhash/tensor_store.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace modelhash {

class BitVector {
public:
    BitVector() = default;
    explicit BitVector(std::size_t n) : bits_(n, 0) {}
    explicit BitVector(std::vector<std::uint8_t> bits);

    static BitVector from_string(std::string_view zeros_and_ones);
    /// Inverse of to_hex(); `nbits` may be shorter than 4 * hex.size() by up
    /// to three trailing pad bits, which must be zero.
    static BitVector from_hex(std::string_view hex, std::size_t nbits);

    std::size_t size() const { return bits_.size(); }
    bool empty() const { return bits_.empty(); }
    std::uint8_t operator[](std::size_t i) const { return bits_[i]; }
    void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }
    void push_back(bool v) { bits_.push_back(v ? 1 : 0); }
    void append(const BitVector& other);
    /// Appends the low `width` bits of `value`, most significant first.
    void append_uint(std::uint64_t value, int width);
    std::uint64_t read_uint(std::size_t offset, int width) const;

    std::span<const std::uint8_t> bits() const { return bits_; }
    std::size_t count_ones() const;

    /// Lowercase, most-significant nibble first; the final nibble is
    /// zero-padded when size() is not a multiple of four.
    std::string to_hex() const;
    std::string to_string() const;

    BitVector operator^(const BitVector& other) const;
    friend bool operator==(const BitVector&, const BitVector&) = default;

private:
    std::vector<std::uint8_t> bits_;
};

/// xorshift64* generator seeded with FNV-1a-64 of the key bytes.
class KeyStream {
public:
    explicit KeyStream(std::string_view key);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_word();
    BitVector take(std::size_t n);

private:
    std::uint64_t seed_;
    std::uint64_t state_;
    std::uint64_t word_ = 0;
    int remaining_ = 0;
};

BitVector keystream_bits(std::string_view key, std::size_t n);

BitVector encrypt(const BitVector& bits, std::string_view key);
inline BitVector decrypt(const BitVector& bits, std::string_view key) { return encrypt(bits, key); }

/// Quantization levels before binarization: shift to zero minimum, ln(1+y),
/// divide by the maximum, round-half-up onto 2^b - 1.
std::vector<std::uint32_t> quantize_levels(std::span<const double> a, int b_bits);
BitVector encode_sequence(std::span<const double> a, int b_bits);

struct PiracyHash {
    std::string model_id;
    int N = 0;
    int b = 0;
    int K = 0;
    BitVector hos_bits;
    BitVector struct_bits;
    std::string config_digest;

    int T() const { return static_cast<int>(hos_bits.size() + struct_bits.size()); }
    friend bool operator==(const PiracyHash&, const PiracyHash&) = default;
};

PiracyHash piracy_hash(const ModelWeights& model, const HashConfig& cfg,
                       StageTimings* timings = nullptr);

// Hash file: a single JSON object with version, model_id, T, N, b, K,
// hos_bits / struct_bits as hex and config_digest.
std::string piracy_hash_to_json(const PiracyHash& h);
PiracyHash piracy_hash_from_json(std::string_view text);
void save_piracy_hash(const PiracyHash& h, const std::filesystem::path& path);
PiracyHash load_piracy_hash(const std::filesystem::path& path);

} // namespace modelhash
