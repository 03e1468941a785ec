#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace modelhash {

enum class DType { F32, F64 };

std::size_t dtype_size(DType dtype);
std::string_view dtype_name(DType dtype);
DType parse_dtype(std::string_view name);

struct ByteRange {
    std::uint64_t begin = 0;
    std::uint64_t end = 0;

    std::uint64_t size() const { return end - begin; }
    friend bool operator==(const ByteRange&, const ByteRange&) = default;
};

struct TensorMeta {
    std::string name;
    DType dtype = DType::F64;
    std::vector<std::uint64_t> shape;
    ByteRange byte_range;

    std::uint64_t element_count() const;
    std::size_t rank() const { return shape.size(); }
    friend bool operator==(const TensorMeta&, const TensorMeta&) = default;
};

// Elements are always held as double regardless of the on-disk dtype.
struct Tensor {
    TensorMeta meta;
    std::vector<double> values;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// An ordered set of weight tensors. Header order is layer order.
///
/// `conv_layer_flags` mirrors the optional `__meta__.conv_layer_flags` entry;
/// when absent, rank-4 tensors are treated as convolution kernels.
struct ModelWeights {
    std::string model_id;
    std::vector<Tensor> tensors;
    std::optional<std::vector<std::string>> conv_layer_flags;

    std::uint64_t parameter_count() const;
    const Tensor* find(std::string_view name) const;
    bool is_conv(const Tensor& t) const;

    friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

enum class TensorFilter {
    KernelsOnly, // rank >= 2
    All,
};

/// Recomputes byte ranges (packed in tensor order) and checks shape/size
/// agreement, name uniqueness and finiteness. Throws FormatError.
void normalize_layout(ModelWeights& model);

ModelWeights parse_container(std::span<const std::byte> bytes, std::string fallback_id = {});
std::vector<std::byte> serialize_container(const ModelWeights& model);

ModelWeights load_container(const std::filesystem::path& path);
void save_container(const ModelWeights& model, const std::filesystem::path& path);

std::vector<double> flatten_weights(const ModelWeights& model, TensorFilter filter);

} // namespace modelhash
