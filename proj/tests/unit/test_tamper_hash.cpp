#include "modelhash/error.hpp"
#include "modelhash/modsim.hpp"
#include "modelhash/tamper_hash.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

using namespace modelhash;

namespace {

HashConfig keyed(const std::string& key, int B = 450) {
    HashConfig cfg;
    cfg.key = key;
    cfg.B = B;
    return cfg;
}

// 24112 parameters, enough for 450 blocks.
ModelWeights model(std::uint64_t seed) { return testing::small_cnn(seed); }

} // namespace

TEST_SUITE("tamper_hash") {

TEST_CASE("zero is a fixed point") {
    CHECK(chaotic_iterate(0.0, ChaosParams{}) == 0.0);
    CHECK(chaotic_iterate(0.0, ChaosParams{0.2, 2.0, 1000}) == 0.0);
}

TEST_CASE("one step from 0.5") {
    const double expect = 0.2 * 0.25 + 2.0 * std::cos(0.25) * 0.5;
    CHECK(chaotic_iterate(0.5, ChaosParams{0.2, 2.0, 1}) == doctest::Approx(expect).epsilon(1e-15));
    CHECK(expect == doctest::Approx(1.0189124217106447).epsilon(1e-15));
}

TEST_CASE("hundred-step reference values") {
    CHECK(chaotic_iterate(0.3, ChaosParams{}) == doctest::Approx(1.6118773213518265).epsilon(1e-12));
    CHECK(chaotic_iterate(0.5, ChaosParams{}) == doctest::Approx(-0.4841684095503718).epsilon(1e-12));
    CHECK(chaotic_iterate(0.123456, ChaosParams{}) == doctest::Approx(-1.7072401193508147).epsilon(1e-12));
}

TEST_CASE("divergence is reported with its step") {
    try {
        chaotic_iterate(0.5, ChaosParams{0.2, 1e200, 100});
        FAIL("expected divergence");
    } catch (const MapDivergence& e) {
        CHECK(e.step() >= 1);
        CHECK(std::string(e.what()).find("map divergence at step") == 0);
    }
    CHECK_THROWS_AS(chaotic_iterate(NAN, ChaosParams{}), Error);
    CHECK_THROWS_AS(chaotic_iterate(0.1, ChaosParams{0.2, 2.0, 0}), Error);
}

TEST_CASE("orbits separate from nearby starts") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int separated = 0, code_changed = 0;
    for (int t = 0; t < 1000; ++t) {
        const double x0 = u(rng);
        separated += std::abs(chaotic_iterate(x0, {}) - chaotic_iterate(x0 + 1e-9, {})) > 1e-3;
        const double y0 = u(rng);
        code_changed += encode_state(chaotic_iterate(y0, {})) != encode_state(chaotic_iterate(y0 + 1e-8, {}));
    }
    CHECK(separated >= 950);
    CHECK(code_changed >= 950);
}

TEST_CASE("Lyapunov exponents are both positive at the default parameters") {
    const auto le = lyapunov_exponents(ChaosParams{}, 0.3, 0.15, 1000, 100000);
    CHECK(le.lambda1 > 0.0);
    CHECK(le.lambda2 > 0.0);
    CHECK(le.lambda1 >= le.lambda2);
}

TEST_CASE("Lyapunov exponents without the memristive term") {
    // k = 0 decouples x into a contracting logistic map; the q direction is
    // neutral, so the spectrum is {0, mean ln|mu (1 - 2x)|}. The exponents
    // also sum to the mean log determinant, which is exact for any horizon.
    const ChaosParams p{0.2, 0.0, 100};
    const long warmup = 100, horizon = 20000;
    double x = 0.3;
    for (long i = 0; i < warmup; ++i) x = 0.2 * x * (1 - x);
    double sum = 0;
    for (long i = 0; i < horizon; ++i) {
        sum += std::log(std::abs(0.2 * (1 - 2 * x)));
        x = 0.2 * x * (1 - x);
    }
    const auto le = lyapunov_exponents(p, 0.3, 0.15, warmup, horizon);
    CHECK(le.lambda1 + le.lambda2 == doctest::Approx(sum / horizon).epsilon(1e-9));
    CHECK(le.lambda2 == doctest::Approx(std::log(0.2)).epsilon(1e-3));
    CHECK(std::abs(le.lambda1) < 1e-3);
}

TEST_CASE("Lyapunov horizon must be long enough") {
    CHECK_THROWS_WITH_AS(lyapunov_exponents(ChaosParams{}, 0.3, 0.15, 0, 100), doctest::Contains("10^4"), Error);
}

TEST_CASE("block partition") {
    auto p = block_partition(10, 2);
    CHECK(p == std::vector<BlockRange>{{0, 5}, {5, 10}});
    p = block_partition(7, 3);
    CHECK(p == std::vector<BlockRange>{{0, 3}, {3, 5}, {5, 7}});
    CHECK_THROWS_AS(block_partition(3, 5), Error);
    CHECK_THROWS_AS(block_partition(3, 0), Error);

    std::mt19937_64 rng(1);
    for (int t = 0; t < 200; ++t) {
        const int B = 1 + static_cast<int>(rng() % 500);
        const std::uint64_t total = B + rng() % 100000;
        p = block_partition(total, B);
        REQUIRE(p.size() == static_cast<std::size_t>(B));
        CHECK(p.front().begin == 0);
        CHECK(p.back().end == total);
        std::uint64_t lo = total, hi = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (i) CHECK(p[i].begin == p[i - 1].end);
            lo = std::min(lo, p[i].size());
            hi = std::max(hi, p[i].size());
        }
        CHECK(hi - lo <= 1);
    }
}

TEST_CASE("state codes") {
    CHECK(encode_state(-0.987654) == 0b1'1001'1000'0111'0110U);
    CHECK(encode_state(0.0) == 0U);
    CHECK(encode_state(-0.0) == 0U);
    CHECK(encode_state(1.2345) == encode_state(12.345));
    CHECK(encode_state(1.2345) == 0b0'0001'0010'0011'0100U);
    CHECK(encode_state(0.00999999) == 0b0'1001'1001'1001'1001U);
    CHECK(encode_state(-3.0) == 0b1'0011'0000'0000'0000U);
    CHECK_THROWS_AS(encode_state(INFINITY), Error);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0, 100);
    for (int t = 0; t < 1000; ++t) CHECK(encode_state(g(rng)) < (1U << 17));
}

TEST_CASE("hash size and determinism") {
    const auto m = model(1);
    const auto h = tamper_localization_hash(m, keyed("k1"));
    CHECK(h.codes.size() == 450);
    CHECK(h.codes.size() * kStateCodeBits == 7650);
    CHECK(h.boundaries.size() == 450);
    CHECK(h.boundaries.back().end == m.parameter_count());
    CHECK(tamper_localization_hash(model(1), keyed("k1")) == h);
}

TEST_CASE("block means are normalized") {
    for (const auto& f : block_features(model(2), keyed("k1"))) {
        CHECK(f.mean >= 0.0);
        CHECK(f.mean <= 1.0);
        CHECK(std::isfinite(f.final_x));
    }
    auto flat = testing::make_model({testing::make_tensor("w", {4, 4}, std::vector<double>(16, 2.0))});
    for (const auto& f : block_features(flat, keyed("k1", 4))) CHECK(f.mean == 0.5);
}

TEST_CASE("a single-parameter edit changes exactly its own block") {
    auto m = model(3);
    const auto cfg = keyed("k1");
    const auto ref = tamper_localization_hash(m, cfg);
    const auto flat = flatten_weights(m, TensorFilter::All);
    const double width = ref.norm.max - ref.norm.min;

    std::mt19937_64 rng(5);
    int checked = 0;
    while (checked < 20) {
        const auto pos = rng() % flat.size();
        const double v = flat[pos] + 0.01 * width;
        if (v >= ref.norm.max || flat[pos] == ref.norm.min) continue;
        auto edited = m;
        std::uint64_t offset = 0;
        for (auto& t : edited.tensors) {
            if (pos < offset + t.values.size()) {
                t.values[pos - offset] = v;
                break;
            }
            offset += t.values.size();
        }
        const auto h = tamper_localization_hash(edited, cfg);
        std::size_t block = 0;
        while (!(pos >= ref.boundaries[block].begin && pos < ref.boundaries[block].end)) ++block;
        const auto report = locate_tampering(ref, h);
        CHECK(report.flagged == std::vector<std::size_t>{block});
        ++checked;
    }
}

TEST_CASE("locate against itself and against known tampering") {
    const auto cfg = keyed("k1");
    const auto m = model(4);
    const auto ref = tamper_localization_hash(m, cfg);

    const auto self = locate_tampering(ref, ref, std::set<std::size_t>{});
    CHECK(self.flagged.empty());
    CHECK(self.eta == 0U);
    CHECK_FALSE(self.r_t.has_value());
    CHECK_FALSE(locate_tampering(ref, ref).r_t.has_value());

    auto out = sim::tamper(m, {0.1, 0.1, 9}, 450);
    const auto h = tamper_localization_hash(out.model, cfg, {TamperVariant::Chaotic, ref.norm});
    const auto report = locate_tampering(ref, h, out.blocks);
    CHECK(report.eta == 45U);
    REQUIRE(report.r_t.has_value());
    CHECK(*report.r_t == 1.0);
    CHECK(report.false_flags == 0U);
}

TEST_CASE("R_t for a hand-made pair of hashes") {
    const auto cfg = keyed("k1", 10);
    auto m = testing::make_model({testing::make_tensor("w", {10, 10}, std::vector<double>(100, 0.0))});
    for (int i = 0; i < 100; ++i) m.tensors[0].values[i] = std::sin(i);
    const auto ref = tamper_localization_hash(m, cfg);
    auto edited = m;
    edited.tensors[0].values[35] += 0.1;
    edited.tensors[0].values[71] -= 0.1;
    const auto h = tamper_localization_hash(edited, cfg, {TamperVariant::Chaotic, ref.norm});
    const auto report = locate_tampering(ref, h, std::set<std::size_t>{3, 7});
    CHECK(report.flagged == std::vector<std::size_t>{3, 7});
    CHECK(report.r_t == 1.0);
    CHECK(report.eta_prime == 2U);

    const auto half = locate_tampering(ref, h, std::set<std::size_t>{3, 5});
    CHECK(half.r_t == 0.5);
    CHECK(half.false_flags == 1U);
    CHECK_THROWS_AS(locate_tampering(ref, h, std::set<std::size_t>{10}), Error);
}

TEST_CASE("locate refuses incomparable hashes") {
    const auto m = model(5);
    const auto a = tamper_localization_hash(m, keyed("k1", 450));
    CHECK_THROWS_AS(locate_tampering(a, tamper_localization_hash(m, keyed("k1", 100))), ConfigMismatch);
    CHECK_THROWS_AS(locate_tampering(a, tamper_localization_hash(m, keyed("k2", 450))), ConfigMismatch);
    CHECK_THROWS_AS(
        locate_tampering(a, tamper_localization_hash(m, keyed("k1", 450), {TamperVariant::Direct, {}})),
        ConfigMismatch);
}

TEST_CASE("encryption does not change which blocks are flagged") {
    const auto cfg = keyed("k1");
    const auto m = model(6);
    const auto out = sim::tamper(m, {0.2, 0.01, 3}, 450);
    const auto ref = tamper_localization_hash(m, cfg);
    const TamperOptions anchored{TamperVariant::Chaotic, ref.norm};
    const auto test = tamper_localization_hash(out.model, cfg, anchored);

    const auto plain_ref = block_features(m, cfg, anchored);
    const auto plain_test = block_features(out.model, cfg, anchored);
    std::vector<std::size_t> plain_flags;
    for (std::size_t i = 0; i < plain_ref.size(); ++i) {
        if (encode_state(plain_ref[i].final_x) != encode_state(plain_test[i].final_x)) plain_flags.push_back(i);
    }
    CHECK(locate_tampering(ref, test).flagged == plain_flags);
}

TEST_CASE("per-block keystreams hide equal codes") {
    auto m = testing::make_model({testing::make_tensor("w", {4, 4}, std::vector<double>(16, 1.0))});
    const auto h = tamper_localization_hash(m, keyed("k1", 4));
    CHECK(h.codes[0] != h.codes[1]);
}

TEST_CASE("tamper hash file round trip") {
    testing::TempDir dir;
    const auto h = tamper_localization_hash(model(7), keyed("k1"));
    CHECK(tamper_hash_from_json(tamper_hash_to_json(h)) == h);
    save_tamper_hash(h, dir / "h.th");
    CHECK(load_tamper_hash(dir / "h.th") == h);
    const auto d = tamper_localization_hash(model(7), keyed("k1"), {TamperVariant::Direct, {}});
    CHECK(tamper_hash_from_json(tamper_hash_to_json(d)) == d);
    CHECK_THROWS_AS(tamper_hash_from_json("{}"), FormatError);
}

TEST_CASE("block set files") {
    testing::TempDir dir;
    save_block_set({1, 5, 9}, dir / "t.txt");
    CHECK(load_block_set(dir / "t.txt") == std::set<std::size_t>{1, 5, 9});
    std::ofstream(dir / "c.txt") << "3, 7\n12";
    CHECK(load_block_set(dir / "c.txt") == std::set<std::size_t>{3, 7, 12});
    std::ofstream(dir / "bad.txt") << "3 x";
    CHECK_THROWS_AS(load_block_set(dir / "bad.txt"), FormatError);
}

} // TEST_SUITE
