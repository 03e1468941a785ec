#include "modelhash/config.hpp"
#include "modelhash/encoding.hpp"
#include "modelhash/error.hpp"
#include "modelhash/hos_features.hpp"
#include "modelhash/modsim.hpp"
#include "modelhash/similarity.hpp"
#include "modelhash/tamper_hash.hpp"
#include "modelhash/tensor_store.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace modelhash;

namespace {

py::array_t<double> tensor_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.meta.shape.begin(), t.meta.shape.end());
    py::array_t<double> a(shape);
    std::copy(t.values.begin(), t.values.end(), a.mutable_data());
    return a;
}

// dict name -> array, insertion order kept as layer order.
ModelWeights model_from_arrays(const py::dict& arrays, const std::string& model_id,
                               std::optional<std::vector<std::string>> conv_layer_flags, const std::string& dtype) {
    ModelWeights m;
    m.model_id = model_id;
    m.conv_layer_flags = std::move(conv_layer_flags);
    for (auto item : arrays) {
        auto arr = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(item.second);
        if (!arr) throw Error("tensor values must be numeric arrays");
        Tensor t;
        t.meta.name = py::cast<std::string>(item.first);
        t.meta.dtype = parse_dtype(dtype);
        for (py::ssize_t i = 0; i < arr.ndim(); ++i) t.meta.shape.push_back(static_cast<std::uint64_t>(arr.shape(i)));
        t.values.assign(arr.data(), arr.data() + arr.size());
        m.tensors.push_back(std::move(t));
    }
    normalize_layout(m);
    return m;
}

HashConfig make_config(const std::string& key, const std::string& profile) {
    HashConfig cfg = profile == "small" ? HashConfig::small_profile() : HashConfig{};
    if (profile != "small" && profile != "default") throw Error("unknown profile '" + profile + "'");
    cfg.key = key;
    return cfg;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Perceptual hashing of CNN weight containers";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<ConfigMismatch>(m, "ConfigMismatch", base.ptr());

    py::class_<ChaosParams>(m, "ChaosParams")
        .def(py::init<>())
        .def_readwrite("mu", &ChaosParams::mu)
        .def_readwrite("k", &ChaosParams::k)
        .def_readwrite("iterations", &ChaosParams::iterations);

    py::class_<DistanceWeights>(m, "DistanceWeights")
        .def(py::init<>())
        .def_readwrite("k1", &DistanceWeights::k1)
        .def_readwrite("k2", &DistanceWeights::k2)
        .def_readwrite("tau", &DistanceWeights::tau);

    py::class_<HashConfig>(m, "HashConfig")
        .def(py::init([](const std::string& key, const std::string& profile) { return make_config(key, profile); }),
             py::arg("key") = "", py::arg("profile") = "default")
        .def_readwrite("c", &HashConfig::c)
        .def_readwrite("N", &HashConfig::N)
        .def_readwrite("b", &HashConfig::b)
        .def_readwrite("K", &HashConfig::K)
        .def_readwrite("B", &HashConfig::B)
        .def_readwrite("key", &HashConfig::key)
        .def_readwrite("weights", &HashConfig::weights)
        .def_readwrite("chaos", &HashConfig::chaos)
        .def_property_readonly("T", &HashConfig::piracy_bit_count)
        .def("validate", &HashConfig::validate);

    py::class_<ModelWeights>(m, "ModelWeights")
        .def_static("from_arrays", &model_from_arrays, py::arg("arrays"), py::arg("model_id") = "model",
                    py::arg("conv_layer_flags") = py::none(), py::arg("dtype") = "F64")
        .def_readwrite("model_id", &ModelWeights::model_id)
        .def_readwrite("conv_layer_flags", &ModelWeights::conv_layer_flags)
        .def_property_readonly("parameter_count", &ModelWeights::parameter_count)
        .def_property_readonly("names", [](const ModelWeights& w) {
            std::vector<std::string> names;
            for (const auto& t : w.tensors) names.push_back(t.meta.name);
            return names;
        })
        .def("dtype", [](const ModelWeights& w, const std::string& name) {
            const auto* t = w.find(name);
            if (!t) throw py::key_error(name);
            return std::string(dtype_name(t->meta.dtype));
        })
        .def("__getitem__", [](const ModelWeights& w, const std::string& name) {
            const auto* t = w.find(name);
            if (!t) throw py::key_error(name);
            return tensor_array(*t);
        })
        .def("__len__", [](const ModelWeights& w) { return w.tensors.size(); })
        .def("flatten", [](const ModelWeights& w, bool kernels_only) {
            auto v = flatten_weights(w, kernels_only ? TensorFilter::KernelsOnly : TensorFilter::All);
            return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
        }, py::arg("kernels_only") = false);

    m.def("load_container", &load_container, py::arg("path"));
    m.def("save_container", &save_container, py::arg("model"), py::arg("path"));

    py::class_<PiracyHash>(m, "PiracyHash")
        .def_readonly("model_id", &PiracyHash::model_id)
        .def_readonly("config_digest", &PiracyHash::config_digest)
        .def_property_readonly("T", &PiracyHash::T)
        .def_property_readonly("hos_bits", [](const PiracyHash& h) { return h.hos_bits.to_string(); })
        .def_property_readonly("struct_bits", [](const PiracyHash& h) { return h.struct_bits.to_string(); })
        .def("to_json", &piracy_hash_to_json)
        .def_static("from_json", &piracy_hash_from_json)
        .def("__eq__", [](const PiracyHash& a, const PiracyHash& b) { return a == b; });

    py::class_<TamperHash>(m, "TamperHash")
        .def_readonly("model_id", &TamperHash::model_id)
        .def_readonly("B", &TamperHash::B)
        .def_readonly("codes", &TamperHash::codes)
        .def_property_readonly("norm", [](const TamperHash& h) { return py::make_tuple(h.norm.min, h.norm.max); })
        .def("to_json", &tamper_hash_to_json)
        .def_static("from_json", &tamper_hash_from_json);

    py::class_<MatchResult>(m, "MatchResult")
        .def_readonly("model_id", &MatchResult::model_id)
        .def_readonly("distance", &MatchResult::distance)
        .def_readonly("d_hos", &MatchResult::d_hos)
        .def_readonly("d_struct", &MatchResult::d_struct)
        .def_property_readonly("verdict", [](const MatchResult& r) { return std::string(verdict_name(r.verdict)); });

    py::class_<TamperReport>(m, "TamperReport")
        .def_readonly("B", &TamperReport::B)
        .def_readonly("flagged", &TamperReport::flagged)
        .def_readonly("eta", &TamperReport::eta)
        .def_readonly("eta_prime", &TamperReport::eta_prime)
        .def_readonly("r_t", &TamperReport::r_t)
        .def_readonly("false_flags", &TamperReport::false_flags);

    m.def("piracy_hash", [](const ModelWeights& w, const HashConfig& cfg) { return piracy_hash(w, cfg); },
          py::arg("model"), py::arg("config"));
    m.def("tamper_hash", [](const ModelWeights& w, const HashConfig& cfg, bool direct,
                            std::optional<std::pair<double, double>> anchor) {
        TamperOptions opt;
        opt.variant = direct ? TamperVariant::Direct : TamperVariant::Chaotic;
        if (anchor) opt.anchor = NormRange{anchor->first, anchor->second};
        return tamper_localization_hash(w, cfg, opt);
    }, py::arg("model"), py::arg("config"), py::arg("direct") = false, py::arg("anchor") = py::none());
    m.def("locate", [](const TamperHash& ref, const TamperHash& test, std::optional<std::set<std::size_t>> truth) {
        return locate_tampering(ref, test, truth);
    }, py::arg("reference"), py::arg("test"), py::arg("truth") = py::none());

    m.def("weighted_distance", &weighted_distance, py::arg("a"), py::arg("b"), py::arg("weights") = DistanceWeights{});
    m.def("hamming", [](const std::string& a, const std::string& b) {
        return hamming(BitVector::from_string(a), BitVector::from_string(b));
    }, py::arg("a"), py::arg("b"), "normalized Hamming distance of two '0'/'1' strings");

    m.def("quantile", [](std::vector<double> v, double q) { return quantile(v, q); });
    m.def("skewness", [](std::vector<double> v) { return skewness(v); });
    m.def("kurtosis", [](std::vector<double> v) { return kurtosis(v); });
    m.def("quantize_levels", [](std::vector<double> v, int b) { return quantize_levels(v, b); });
    m.def("hos_sequence", [](const ModelWeights& w, const HashConfig& cfg) {
        auto h = hos_sequence(w, cfg);
        return py::make_tuple(h.skews, h.kurts);
    });
    m.def("structure_sequence", [](const ModelWeights& w, int K) { return structure_sequence(w, K).values; },
          py::arg("model"), py::arg("K") = 20);

    m.def("chaotic_iterate", [](double x0, double mu, double k, int iterations) {
        return chaotic_iterate(x0, ChaosParams{mu, k, iterations});
    }, py::arg("x0"), py::arg("mu") = 0.2, py::arg("k") = 2.0, py::arg("iterations") = 100);
    m.def("encode_state", &encode_state);
    m.def("lyapunov_exponents", [](double x0, double mu, double k, long warmup, long horizon) {
        auto le = lyapunov_exponents(ChaosParams{mu, k, 100}, x0, x0 / 2.0, warmup, horizon);
        return py::make_tuple(le.lambda1, le.lambda2);
    }, py::arg("x0"), py::arg("mu") = 0.2, py::arg("k") = 2.0, py::arg("warmup") = 1000, py::arg("horizon") = 100000);

    m.def("suite_names", [] {
        std::vector<std::string> names;
        for (const auto& s : sim::default_suite()) names.push_back(s.name);
        return names;
    });
    m.def("generate", [](const std::string& name, std::optional<std::uint64_t> seed) {
        auto spec = sim::suite_spec(name);
        if (seed) spec.seed = *seed;
        return sim::generate_model(spec);
    }, py::arg("name"), py::arg("seed") = py::none());
    m.def("prune", &sim::prune, py::arg("model"), py::arg("rate"));
    m.def("finetune", &sim::finetune_surrogate, py::arg("model"), py::arg("epsilon"), py::arg("seed") = 0);
    m.def("tamper", [](const ModelWeights& w, double alpha, double sigma, std::uint64_t seed, int B) {
        auto out = sim::tamper(w, sim::TamperPlan{alpha, sigma, seed}, B);
        return py::make_tuple(std::move(out.model), out.blocks);
    }, py::arg("model"), py::arg("alpha"), py::arg("sigma") = 0.1, py::arg("seed") = 0, py::arg("B") = 450);
    m.def("simulate", [](const std::string& manifest_json) {
        return sim::results_to_tsv(sim::run_manifest(manifest_json));
    });
}
