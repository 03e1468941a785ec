#include "modelhash/config.hpp"

#include "modelhash/error.hpp"

#include <cmath>
#include <cstdio>

namespace modelhash {

namespace {

std::string key_fingerprint(const std::string& key) {
    return hex64(fnv1a64("modelhash-key-fingerprint:" + key));
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void DistanceWeights::validate() const {
    if (!(k1 >= 0.0) || !(k2 >= 0.0)) throw Error("k1 and k2 must be non-negative");
    if (!(tau > 0.0 && tau < 1.0)) throw Error("tau must lie in (0, 1)");
}

HashConfig HashConfig::small_profile() {
    HashConfig cfg;
    cfg.B = 100;
    return cfg;
}

void HashConfig::validate() const {
    if (!(c > 0.0 && c <= 1.0)) throw Error("c must lie in (0, 1]");
    if (N < 1) throw Error("N must be positive");
    if (b < 1 || b > 16) throw Error("b must lie in [1, 16]");
    if (K < 1) throw Error("K must be positive");
    if (B < 1) throw Error("B must be positive");
    if (chaos.iterations < 1) throw Error("iterations must be at least 1");
    if (!std::isfinite(chaos.mu) || !std::isfinite(chaos.k)) throw Error("map parameters must be finite");
    if (min_segment < 2) throw Error("min_segment must be at least 2");
    if (key.empty()) throw Error("key must not be empty");
    weights.validate();
}

std::string HashConfig::piracy_digest() const {
    const std::string canon = "piracy/v1;c=" + fmt_double(c) + ";N=" + std::to_string(N) +
                              ";b=" + std::to_string(b) + ";K=" + std::to_string(K) +
                              ";key=" + key_fingerprint(key);
    return hex64(fnv1a64(canon));
}

std::string HashConfig::tamper_digest() const {
    const std::string canon = "tamper/v1;B=" + std::to_string(B) + ";mu=" + fmt_double(chaos.mu) +
                              ";k=" + fmt_double(chaos.k) +
                              ";iterations=" + std::to_string(chaos.iterations) +
                              ";key=" + key_fingerprint(key);
    return hex64(fnv1a64(canon));
}

} // namespace modelhash
