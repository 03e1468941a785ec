#pragma once

#include "modelhash/tensor_store.hpp"

#include <cstdint>
#include <cstring>
#include <unistd.h>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace testing {

inline modelhash::Tensor make_tensor(std::string name, std::vector<std::uint64_t> shape, std::vector<double> values,
                                     modelhash::DType dtype = modelhash::DType::F64) {
    modelhash::Tensor t;
    t.meta.name = std::move(name);
    t.meta.dtype = dtype;
    t.meta.shape = std::move(shape);
    t.values = std::move(values);
    return t;
}

inline modelhash::ModelWeights make_model(std::vector<modelhash::Tensor> tensors, std::string id = "m") {
    modelhash::ModelWeights m;
    m.model_id = std::move(id);
    m.tensors = std::move(tensors);
    modelhash::normalize_layout(m);
    return m;
}

// Gaussian kernels of the given shapes, one shared stream.
inline modelhash::ModelWeights random_model(std::uint64_t seed, const std::vector<std::vector<std::uint64_t>>& shapes,
                                            double sigma = 0.05) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sigma);
    std::vector<modelhash::Tensor> ts;
    int i = 0;
    for (const auto& s : shapes) {
        std::uint64_t n = 1;
        for (auto d : s) n *= d;
        std::vector<double> v(n);
        for (auto& x : v) x = g(rng);
        ts.push_back(make_tensor("layer" + std::to_string(i++) + ".weight", s, std::move(v)));
    }
    return make_model(std::move(ts), "random-" + std::to_string(seed));
}

inline modelhash::ModelWeights small_cnn(std::uint64_t seed) {
    return random_model(seed, {{16, 3, 3, 3}, {32, 16, 3, 3}, {64, 32, 3, 3}, {10, 64}});
}

// Raw container bytes from a header string and a data block.
inline std::vector<std::byte> raw_container(const std::string& header, const std::vector<std::byte>& data) {
    std::vector<std::byte> out(8);
    const std::uint64_t n = header.size();
    for (int i = 0; i < 8; ++i) out[i] = static_cast<std::byte>((n >> (8 * i)) & 0xff);
    for (char c : header) out.push_back(static_cast<std::byte>(c));
    out.insert(out.end(), data.begin(), data.end());
    return out;
}

inline std::vector<std::byte> f64_bytes(const std::vector<double>& v) {
    std::vector<std::byte> out(v.size() * 8);
    std::memcpy(out.data(), v.data(), out.size());
    return out;
}

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("modelhash-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

} // namespace testing
