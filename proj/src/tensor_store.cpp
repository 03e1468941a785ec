#include "modelhash/tensor_store.hpp"

#include "modelhash/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_set>

namespace modelhash {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::string_view kMetaKey = "__meta__";

template <typename T>
T read_le(const std::byte* p) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<std::byte, sizeof(T)> raw;
    std::memcpy(raw.data(), p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(raw.begin(), raw.end());
    }
    return std::bit_cast<T>(raw);
}

template <typename T>
void append_le(std::vector<std::byte>& out, T value) {
    auto raw = std::bit_cast<std::array<std::byte, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(raw.begin(), raw.end());
    }
    out.insert(out.end(), raw.begin(), raw.end());
}

std::uint64_t checked_product(const std::vector<std::uint64_t>& shape, const std::string& name) {
    std::uint64_t n = 1;
    for (auto d : shape) {
        if (d != 0 && n > UINT64_MAX / d) {
            throw FormatError("shape overflow in tensor '" + name + "'");
        }
        n *= d;
    }
    return n;
}

void check_finite(const Tensor& t) {
    for (std::size_t i = 0; i < t.values.size(); ++i) {
        if (!std::isfinite(t.values[i])) {
            throw FormatError("non-finite value in tensor '" + t.meta.name + "' at element " +
                              std::to_string(i));
        }
    }
}

TensorMeta parse_entry(const std::string& name, const ordered_json& entry) {
    if (!entry.is_object()) {
        throw FormatError("header entry '" + name + "' is not an object");
    }
    TensorMeta meta;
    meta.name = name;

    auto dtype_it = entry.find("dtype");
    if (dtype_it == entry.end() || !dtype_it->is_string()) {
        throw FormatError("tensor '" + name + "' has no dtype");
    }
    meta.dtype = parse_dtype(dtype_it->get<std::string>());

    auto shape_it = entry.find("shape");
    if (shape_it == entry.end() || !shape_it->is_array()) {
        throw FormatError("tensor '" + name + "' has no shape");
    }
    for (const auto& d : *shape_it) {
        if (!d.is_number_unsigned()) {
            throw FormatError("tensor '" + name + "' has a negative or non-integer dimension");
        }
        meta.shape.push_back(d.get<std::uint64_t>());
    }

    auto off_it = entry.find("data_offsets");
    if (off_it == entry.end() || !off_it->is_array() || off_it->size() != 2 ||
        !(*off_it)[0].is_number_unsigned() || !(*off_it)[1].is_number_unsigned()) {
        throw FormatError("tensor '" + name + "' has malformed data_offsets");
    }
    meta.byte_range = {(*off_it)[0].get<std::uint64_t>(), (*off_it)[1].get<std::uint64_t>()};
    if (meta.byte_range.end < meta.byte_range.begin) {
        throw FormatError("tensor '" + name + "' has reversed data_offsets");
    }
    const auto n = checked_product(meta.shape, name);
    if (n > UINT64_MAX / dtype_size(meta.dtype) || n * dtype_size(meta.dtype) != meta.byte_range.size()) {
        throw FormatError("tensor '" + name + "' size does not match shape and dtype");
    }
    return meta;
}

} // namespace

std::size_t dtype_size(DType dtype) {
    return dtype == DType::F32 ? 4 : 8;
}

std::string_view dtype_name(DType dtype) {
    return dtype == DType::F32 ? "F32" : "F64";
}

DType parse_dtype(std::string_view name) {
    if (name == "F32") return DType::F32;
    if (name == "F64") return DType::F64;
    throw FormatError("unsupported dtype '" + std::string(name) + "'");
}

std::uint64_t TensorMeta::element_count() const {
    return checked_product(shape, name);
}

std::uint64_t ModelWeights::parameter_count() const {
    std::uint64_t n = 0;
    for (const auto& t : tensors) n += t.values.size();
    return n;
}

const Tensor* ModelWeights::find(std::string_view name) const {
    auto it = std::find_if(tensors.begin(), tensors.end(),
                           [&](const Tensor& t) { return t.meta.name == name; });
    return it == tensors.end() ? nullptr : &*it;
}

bool ModelWeights::is_conv(const Tensor& t) const {
    if (conv_layer_flags) {
        return std::find(conv_layer_flags->begin(), conv_layer_flags->end(), t.meta.name) !=
               conv_layer_flags->end();
    }
    return t.meta.rank() == 4;
}

void normalize_layout(ModelWeights& model) {
    std::unordered_set<std::string> names;
    std::uint64_t offset = 0;
    for (auto& t : model.tensors) {
        if (t.meta.name.empty() || t.meta.name == kMetaKey) {
            throw FormatError("invalid tensor name '" + t.meta.name + "'");
        }
        if (!names.insert(t.meta.name).second) {
            throw FormatError("duplicate tensor name '" + t.meta.name + "'");
        }
        if (t.meta.element_count() != t.values.size()) {
            throw FormatError("tensor '" + t.meta.name + "' element count does not match shape");
        }
        check_finite(t);
        const auto bytes = t.values.size() * dtype_size(t.meta.dtype);
        t.meta.byte_range = {offset, offset + bytes};
        offset += bytes;
    }
    if (model.conv_layer_flags) {
        for (const auto& flag : *model.conv_layer_flags) {
            if (!names.contains(flag)) {
                throw FormatError("conv_layer_flags names unknown tensor '" + flag + "'");
            }
        }
    }
}

ModelWeights parse_container(std::span<const std::byte> bytes, std::string fallback_id) {
    if (bytes.size() < 8) {
        throw FormatError("malformed header length: file shorter than 8 bytes");
    }
    const auto header_len = read_le<std::uint64_t>(bytes.data());
    if (header_len > bytes.size() - 8) {
        throw FormatError("malformed header length: " + std::to_string(header_len) +
                          " exceeds file size");
    }
    const std::string_view header_text(reinterpret_cast<const char*>(bytes.data() + 8), header_len);
    const auto data = bytes.subspan(8 + header_len);

    std::unordered_set<std::string> seen;
    auto reject_duplicates = [&](int depth, nlohmann::ordered_json::parse_event_t event,
                                 ordered_json& parsed) {
        if (depth == 1 && event == nlohmann::ordered_json::parse_event_t::key) {
            auto key = parsed.get<std::string>();
            if (!seen.insert(key).second) {
                throw FormatError("duplicate tensor name '" + key + "'");
            }
        }
        return true;
    };

    ordered_json header;
    try {
        header = ordered_json::parse(header_text.begin(), header_text.end(), reject_duplicates);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("header is not valid JSON: ") + e.what());
    }
    if (!header.is_object()) {
        throw FormatError("header is not a JSON object");
    }

    ModelWeights model;
    model.model_id = std::move(fallback_id);
    for (const auto& [key, entry] : header.items()) {
        if (key == kMetaKey) {
            if (!entry.is_object()) throw FormatError("__meta__ is not an object");
            if (auto it = entry.find("model_id"); it != entry.end()) {
                if (!it->is_string()) throw FormatError("__meta__.model_id is not a string");
                model.model_id = it->get<std::string>();
            }
            if (auto it = entry.find("conv_layer_flags"); it != entry.end()) {
                if (!it->is_array()) throw FormatError("__meta__.conv_layer_flags is not a list");
                std::vector<std::string> flags;
                for (const auto& f : *it) {
                    if (!f.is_string()) throw FormatError("conv_layer_flags entry is not a string");
                    flags.push_back(f.get<std::string>());
                }
                model.conv_layer_flags = std::move(flags);
            }
            continue;
        }
        Tensor t;
        t.meta = parse_entry(key, entry);
        model.tensors.push_back(std::move(t));
    }
    if (model.tensors.empty()) {
        throw FormatError("no tensors");
    }

    std::vector<const TensorMeta*> by_offset;
    for (const auto& t : model.tensors) {
        if (t.meta.byte_range.end > data.size()) {
            throw FormatError("out-of-bounds tensor '" + t.meta.name + "'");
        }
        by_offset.push_back(&t.meta);
    }
    std::sort(by_offset.begin(), by_offset.end(), [](auto* a, auto* b) {
        return std::pair(a->byte_range.begin, a->byte_range.end) <
               std::pair(b->byte_range.begin, b->byte_range.end);
    });
    for (std::size_t i = 1; i < by_offset.size(); ++i) {
        const auto& prev = by_offset[i - 1]->byte_range;
        const auto& cur = by_offset[i]->byte_range;
        if (cur.size() > 0 && prev.size() > 0 && cur.begin < prev.end) {
            throw FormatError("overlapping tensors '" + by_offset[i - 1]->name + "' and '" +
                              by_offset[i]->name + "'");
        }
    }

    for (auto& t : model.tensors) {
        const auto n = static_cast<std::size_t>(t.meta.element_count());
        t.values.resize(n);
        const std::byte* p = data.data() + t.meta.byte_range.begin;
        if (t.meta.dtype == DType::F32) {
            for (std::size_t i = 0; i < n; ++i) t.values[i] = read_le<float>(p + 4 * i);
        } else {
            for (std::size_t i = 0; i < n; ++i) t.values[i] = read_le<double>(p + 8 * i);
        }
        check_finite(t);
    }

    if (model.conv_layer_flags) {
        for (const auto& flag : *model.conv_layer_flags) {
            if (!model.find(flag)) {
                throw FormatError("conv_layer_flags names unknown tensor '" + flag + "'");
            }
        }
    }
    return model;
}

std::vector<std::byte> serialize_container(const ModelWeights& model) {
    ModelWeights laid_out = model;
    normalize_layout(laid_out);

    ordered_json header = ordered_json::object();
    if (!laid_out.model_id.empty() || laid_out.conv_layer_flags) {
        ordered_json meta = ordered_json::object();
        if (!laid_out.model_id.empty()) meta["model_id"] = laid_out.model_id;
        if (laid_out.conv_layer_flags) meta["conv_layer_flags"] = *laid_out.conv_layer_flags;
        header[std::string(kMetaKey)] = std::move(meta);
    }
    for (const auto& t : laid_out.tensors) {
        header[t.meta.name] = {
            {"dtype", dtype_name(t.meta.dtype)},
            {"shape", t.meta.shape},
            {"data_offsets", {t.meta.byte_range.begin, t.meta.byte_range.end}},
        };
    }
    std::string text = header.dump();
    // Pad with spaces so the data block starts 8-byte aligned.
    text.append((8 - text.size() % 8) % 8, ' ');

    std::vector<std::byte> out;
    out.reserve(8 + text.size() + laid_out.parameter_count() * 8);
    append_le<std::uint64_t>(out, text.size());
    const auto* tb = reinterpret_cast<const std::byte*>(text.data());
    out.insert(out.end(), tb, tb + text.size());
    for (const auto& t : laid_out.tensors) {
        if (t.meta.dtype == DType::F32) {
            for (double v : t.values) append_le<float>(out, static_cast<float>(v));
        } else {
            for (double v : t.values) append_le<double>(out, v);
        }
    }
    return out;
}

ModelWeights load_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open container '" + path.string() + "'");
    }
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    in.seekg(0, std::ios::beg);
    if (size < 0) throw Error("cannot size container '" + path.string() + "'");
    std::vector<std::byte> bytes(static_cast<std::size_t>(size));
    if (!in.read(reinterpret_cast<char*>(bytes.data()), size)) {
        throw Error("cannot read container '" + path.string() + "'");
    }
    return parse_container(bytes, path.stem().string());
}

void save_container(const ModelWeights& model, const std::filesystem::path& path) {
    const auto bytes = serialize_container(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write container '" + path.string() + "'");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("failed writing container '" + path.string() + "'");
    }
}

std::vector<double> flatten_weights(const ModelWeights& model, TensorFilter filter) {
    std::vector<double> out;
    std::size_t total = 0;
    for (const auto& t : model.tensors) {
        if (filter == TensorFilter::All || t.meta.rank() >= 2) total += t.values.size();
    }
    if (total == 0) {
        throw Error("empty weight sequence");
    }
    out.reserve(total);
    for (const auto& t : model.tensors) {
        if (filter == TensorFilter::All || t.meta.rank() >= 2) {
            out.insert(out.end(), t.values.begin(), t.values.end());
        }
    }
    return out;
}

} // namespace modelhash
