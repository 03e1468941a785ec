#include "modelhash/config.hpp"
#include "modelhash/encoding.hpp"
#include "modelhash/error.hpp"
#include "modelhash/hos_features.hpp"
#include "modelhash/modsim.hpp"
#include "modelhash/similarity.hpp"
#include "modelhash/tamper_hash.hpp"
#include "modelhash/tensor_store.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace modelhash;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitDistinct = 3;
constexpr const char* kKeyEnv = "MODELHASH_KEY";

struct ConfigFlags {
    HashConfig cfg;
    std::string key;
    std::string key_file;
    std::string profile = "default";
    bool B_set = false;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
    cmd->add_option("--c", f.cfg.c, "retain ratio of the weight selection")->capture_default_str();
    cmd->add_option("--N", f.cfg.N, "number of HOS segments")->capture_default_str();
    cmd->add_option("--b", f.cfg.b, "bits per statistic")->capture_default_str();
    cmd->add_option("--K", f.cfg.K, "structure capacity")->capture_default_str();
    cmd->add_option("--tau", f.cfg.weights.tau, "decision threshold")->capture_default_str();
    cmd->add_option("--k1", f.cfg.weights.k1, "HOS distance weight")->capture_default_str();
    cmd->add_option("--k2", f.cfg.weights.k2, "structure distance weight")->capture_default_str();
    cmd->add_option_function<int>("--B", [&f](int v) { f.cfg.B = v; f.B_set = true; },
                                  "tamper blocks (default 450)");
    cmd->add_option("--mu", f.cfg.chaos.mu, "map parameter mu")->capture_default_str();
    cmd->add_option("--k-map", f.cfg.chaos.k, "map coupling k")->capture_default_str();
    cmd->add_option("--iterations", f.cfg.chaos.iterations, "map iterations")->capture_default_str();
    cmd->add_option("--key", f.key, "secret key (else $" + std::string(kKeyEnv) + ", else --key-file)");
    cmd->add_option("--key-file", f.key_file, "file holding the secret key");
    cmd->add_option("--profile", f.profile, "default | small (B = 100)")
        ->check(CLI::IsMember({"default", "small"}));
}

std::string trim(std::string s) {
    auto issp = [](unsigned char ch) { return std::isspace(ch) != 0; };
    s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), issp));
    s.erase(std::find_if_not(s.rbegin(), s.rend(), issp).base(), s.end());
    return s;
}

std::string resolve_key(const ConfigFlags& f) {
    if (!f.key.empty()) return f.key;
    if (const char* env = std::getenv(kKeyEnv); env && *env) return env;
    if (!f.key_file.empty()) {
        std::ifstream in(f.key_file);
        if (!in) throw Error("cannot read key file " + f.key_file);
        std::stringstream ss;
        ss << in.rdbuf();
        auto key = trim(ss.str());
        if (key.empty()) throw Error("key file " + f.key_file + " is empty");
        return key;
    }
    throw Error("no key: pass --key, set " + std::string(kKeyEnv) + " or pass --key-file");
}

HashConfig resolve_config(const ConfigFlags& f, bool need_key = true) {
    HashConfig cfg = f.cfg;
    if (f.profile == "small" && !f.B_set) cfg.B = HashConfig::small_profile().B;
    if (need_key) cfg.key = resolve_key(f);
    cfg.weights.validate();
    if (need_key) cfg.validate();
    return cfg;
}

bool looks_like_json(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open " + p.string());
    char ch = 0;
    while (in.get(ch)) {
        if (!std::isspace(static_cast<unsigned char>(ch))) return ch == '{';
    }
    return false;
}

// A hash file is used as is; anything else is treated as a container and hashed.
PiracyHash piracy_input(const fs::path& p, const ConfigFlags& f) {
    if (looks_like_json(p)) return load_piracy_hash(p);
    return piracy_hash(load_container(p), resolve_config(f));
}

fs::path with_suffix(const fs::path& p, const std::string& ext) {
    auto out = p;
    out.replace_extension(ext);
    return out;
}

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

ordered_json match_json(const MatchResult& m, double tau) {
    ordered_json j;
    j["model_id"] = m.model_id;
    j["distance"] = m.distance;
    j["d_hos"] = m.d_hos;
    j["d_struct"] = m.d_struct;
    j["verdict"] = std::string(verdict_name(m.verdict));
    j["tau"] = tau;
    return j;
}

// ---- hash ---------------------------------------------------------------

struct HashArgs {
    ConfigFlags flags;
    std::vector<std::string> inputs;
    std::string out;
    std::string tamper_out;
    bool tamper = false;
    bool timing = false;
    bool json = false;
    int jobs = 1;
};

struct HashJob {
    PiracyHash piracy;
    std::optional<TamperHash> tamper;
    StageTimings timings;
    double total_seconds = 0.0;
    std::string error;
};

int cmd_hash(const HashArgs& a) {
    if (a.inputs.size() > 1 && (!a.out.empty() || !a.tamper_out.empty())) {
        throw Error("-o/--tamper-out take a single input; outputs default to <stem>.ph / <stem>.th");
    }
    const auto cfg = resolve_config(a.flags);
    std::vector<HashJob> jobs(a.inputs.size());

    auto run = [&](std::size_t i) {
        try {
            const auto t0 = std::chrono::steady_clock::now();
            const auto model = load_container(a.inputs[i]);
            jobs[i].piracy = piracy_hash(model, cfg, &jobs[i].timings);
            if (a.tamper) jobs[i].tamper = tamper_localization_hash(model, cfg);
            jobs[i].total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        } catch (const std::exception& e) {
            jobs[i].error = e.what();
        }
    };

    const auto workers = static_cast<std::size_t>(std::max(1, std::min<int>(a.jobs, static_cast<int>(jobs.size()))));
    if (workers == 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) run(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) run(i);
            });
        }
        for (auto& t : pool) t.join();
    }

    int rc = kExitOk;
    ordered_json records = ordered_json::array();
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const fs::path in = a.inputs[i];
        if (!jobs[i].error.empty()) {
            std::cerr << "modelhash: error: " << in.string() << ": " << jobs[i].error << '\n';
            rc = kExitError;
            continue;
        }
        const fs::path ph = a.out.empty() ? with_suffix(in, ".ph") : fs::path(a.out);
        save_piracy_hash(jobs[i].piracy, ph);
        ordered_json rec;
        rec["input"] = in.string();
        rec["model_id"] = jobs[i].piracy.model_id;
        rec["piracy_hash"] = ph.string();
        rec["T"] = jobs[i].piracy.T();
        if (jobs[i].tamper) {
            const fs::path th = a.tamper_out.empty() ? with_suffix(in, ".th") : fs::path(a.tamper_out);
            save_tamper_hash(*jobs[i].tamper, th);
            rec["tamper_hash"] = th.string();
            rec["B"] = jobs[i].tamper->B;
        }
        if (a.timing) {
            rec["selection_seconds"] = jobs[i].timings.selection_seconds;
            rec["features_seconds"] = jobs[i].timings.features_seconds;
            rec["total_seconds"] = jobs[i].total_seconds;
        }
        if (a.json) {
            records.push_back(rec);
            continue;
        }
        std::cout << jobs[i].piracy.model_id << ": " << jobs[i].piracy.T() << "-bit piracy hash -> " << ph.string();
        if (jobs[i].tamper) std::cout << ", " << jobs[i].tamper->B << "-block tamper hash -> " << rec["tamper_hash"].get<std::string>();
        std::cout << '\n';
        if (a.timing) {
            std::cout << "  weight selection " << fmt(jobs[i].timings.selection_seconds, 3) << " s, feature generation "
                      << fmt(jobs[i].timings.features_seconds, 3) << " s, total " << fmt(jobs[i].total_seconds, 3) << " s\n";
        }
    }
    if (a.json) std::cout << (records.size() == 1 ? records[0] : records).dump(2) << '\n';
    return rc;
}

// ---- tamper-hash / locate -----------------------------------------------

int cmd_tamper_hash(const ConfigFlags& f, const std::string& input, std::string out, const std::string& variant) {
    const auto cfg = resolve_config(f);
    TamperOptions opt;
    opt.variant = variant == "direct" ? TamperVariant::Direct : TamperVariant::Chaotic;
    const auto h = tamper_localization_hash(load_container(input), cfg, opt);
    if (out.empty()) out = with_suffix(input, ".th").string();
    save_tamper_hash(h, out);
    std::cout << h.model_id << ": " << h.B << "-block tamper hash -> " << out << '\n';
    return kExitOk;
}

int cmd_locate(const ConfigFlags& f, const std::string& ref_path, const std::string& test_path,
               const std::string& truth_path, bool json) {
    const auto ref = load_tamper_hash(ref_path);
    HashConfig cfg = resolve_config(f);
    // Block layout and map parameters come from the reference hash.
    cfg.B = ref.B;
    cfg.chaos = ref.chaos;
    TamperOptions opt;
    opt.variant = ref.variant;
    opt.anchor = ref.norm;
    const auto test = tamper_localization_hash(load_container(test_path), cfg, opt);
    std::optional<std::set<std::size_t>> truth;
    if (!truth_path.empty()) truth = load_block_set(truth_path);
    const auto report = locate_tampering(ref, test, truth);

    if (json) {
        std::cout << tamper_report_to_json(report) << '\n';
        return kExitOk;
    }
    std::cout << "flagged " << report.flagged.size() << " of " << report.B << " blocks:";
    if (report.flagged.empty()) std::cout << " none";
    for (auto b : report.flagged) std::cout << ' ' << b;
    std::cout << '\n';
    if (truth) {
        std::cout << "eta " << *report.eta << ", eta' " << *report.eta_prime << ", R_t "
                  << (report.r_t ? fmt(*report.r_t) : std::string("n/a")) << ", false flags " << *report.false_flags << '\n';
    }
    return kExitOk;
}

// ---- registry / comparison ----------------------------------------------

int cmd_register(const ConfigFlags& f, const std::string& registry, const std::string& input, const std::string& id,
                 const std::string& notes, bool with_tamper) {
    RegistryRecord rec;
    if (looks_like_json(input)) {
        if (with_tamper) throw Error("--tamper needs a container input");
        rec.piracy_hash = load_piracy_hash(input);
    } else {
        const auto cfg = resolve_config(f);
        const auto model = load_container(input);
        rec.piracy_hash = piracy_hash(model, cfg);
        if (with_tamper) rec.tamper_hash = tamper_localization_hash(model, cfg);
    }
    if (!id.empty()) {
        rec.piracy_hash.model_id = id;
        if (rec.tamper_hash) rec.tamper_hash->model_id = id;
    }
    rec.model_id = rec.piracy_hash.model_id;
    rec.created_at = utc_timestamp();
    rec.notes = notes;
    register_record(rec, registry);
    std::cout << "registered " << rec.model_id << " in " << registry << '\n';
    return kExitOk;
}

int cmd_query(const ConfigFlags& f, const std::string& registry, const std::string& input, int top, bool json) {
    const auto h = piracy_input(input, f);
    const auto w = resolve_config(f, false).weights;
    const auto res = query(h, registry, w);
    for (const auto& e : res.errors) {
        std::cerr << "modelhash: warning: " << registry << ":" << e.line << ": " << e.message << '\n';
    }
    const bool any_similar = std::any_of(res.matches.begin(), res.matches.end(),
                                         [](const MatchResult& m) { return m.verdict == Verdict::Similar; });
    const auto shown = top > 0 ? std::min<std::size_t>(static_cast<std::size_t>(top), res.matches.size()) : res.matches.size();
    if (json) {
        ordered_json j;
        j["query"] = h.model_id;
        j["matches"] = ordered_json::array();
        for (std::size_t i = 0; i < shown; ++i) j["matches"].push_back(match_json(res.matches[i], w.tau));
        j["skipped_incompatible"] = res.skipped_incompatible;
        j["corrupt_lines"] = res.errors.size();
        std::cout << j.dump(2) << '\n';
    } else {
        if (res.matches.empty()) std::cout << "no comparable records\n";
        for (std::size_t i = 0; i < shown; ++i) {
            const auto& m = res.matches[i];
            std::cout << fmt(m.distance) << "  " << verdict_name(m.verdict) << "  " << m.model_id << '\n';
        }
        if (res.skipped_incompatible) std::cout << res.skipped_incompatible << " record(s) skipped: config mismatch\n";
    }
    return any_similar ? kExitOk : kExitDistinct;
}

int report_match(const MatchResult& m, const std::string& a, const std::string& b, double tau, bool json) {
    if (json) {
        auto j = match_json(m, tau);
        j.erase("model_id");
        j["a"] = a;
        j["b"] = b;
        std::cout << j.dump(2) << '\n';
    } else {
        std::cout << "distance " << fmt(m.distance) << " (hos " << fmt(m.d_hos) << ", struct " << fmt(m.d_struct) << ") "
                  << verdict_name(m.verdict) << '\n';
    }
    return m.verdict == Verdict::Similar ? kExitOk : kExitDistinct;
}

int cmd_distance(const ConfigFlags& f, const std::string& a, const std::string& b, bool json) {
    const auto ha = piracy_input(a, f);
    const auto hb = piracy_input(b, f);
    const auto w = resolve_config(f, false).weights;
    return report_match(weighted_distance(ha, hb, w), ha.model_id, hb.model_id, w.tau, json);
}

int cmd_verify(const ConfigFlags& f, const std::string& container, const std::string& ref, bool json) {
    const auto href = load_piracy_hash(ref);
    const auto cfg = resolve_config(f);
    const auto h = piracy_hash(load_container(container), cfg);
    return report_match(weighted_distance(href, h, cfg.weights), href.model_id, h.model_id, cfg.weights.tau, json);
}

// ---- analysis / simulation ----------------------------------------------

int cmd_analyze(const ConfigFlags& f, const std::string& input, bool json) {
    auto cfg = resolve_config(f, false);
    const auto model = load_container(input);
    const auto hos = hos_sequence(model, cfg);
    const auto st = structure_sequence(model, cfg.K);
    const auto a = hos.concatenated();
    const auto levels = quantize_levels(a, cfg.b);
    const auto slevels = quantize_levels(st.values, cfg.b);
    if (json) {
        ordered_json j;
        j["model_id"] = model.model_id;
        j["parameters"] = model.parameter_count();
        j["conv_layers"] = st.P;
        j["skewness"] = hos.skews;
        j["kurtosis"] = hos.kurts;
        j["structure"] = st.values;
        j["hos_levels"] = levels;
        j["structure_levels"] = slevels;
        std::cout << j.dump(2) << '\n';
        return kExitOk;
    }
    std::cout << model.model_id << ": " << model.parameter_count() << " parameters, " << model.tensors.size()
              << " tensors, " << st.P << " convolution layers\n";
    std::cout << "segment  skewness  kurtosis  levels\n";
    for (int i = 0; i < hos.N(); ++i) {
        char line[96];
        std::snprintf(line, sizeof line, "%7d  %8.4f  %8.4f  %2u %2u\n", i, hos.skews[i], hos.kurts[i], levels[i],
                      levels[i + hos.N()]);
        std::cout << line;
    }
    std::cout << "structure:";
    for (auto v : st.values) std::cout << ' ' << fmt(v);
    std::cout << '\n';
    return kExitOk;
}

int cmd_simulate(const std::string& manifest, const std::string& out) {
    std::ifstream in(manifest);
    if (!in) throw Error("cannot open " + manifest);
    std::stringstream ss;
    ss << in.rdbuf();
    const auto tsv = sim::results_to_tsv(sim::run_manifest(ss.str()));
    if (out.empty()) {
        std::cout << tsv;
    } else {
        std::ofstream o(out);
        if (!(o << tsv)) throw Error("cannot write " + out);
    }
    return kExitOk;
}

int cmd_lyapunov(const ConfigFlags& f, double x0, double q0, long warmup, long horizon, bool json) {
    const auto cfg = resolve_config(f, false);
    if (q0 < 0.0) q0 = x0 / 2.0;
    const auto le = lyapunov_exponents(cfg.chaos, x0, q0, warmup, horizon);
    const bool hyper = le.lambda1 > 0.0 && le.lambda2 > 0.0;
    if (json) {
        ordered_json j;
        j["mu"] = cfg.chaos.mu;
        j["k"] = cfg.chaos.k;
        j["x0"] = x0;
        j["q0"] = q0;
        j["horizon"] = horizon;
        j["lambda1"] = le.lambda1;
        j["lambda2"] = le.lambda2;
        j["hyperchaotic"] = hyper;
        std::cout << j.dump(2) << '\n';
    } else {
        std::cout << "lambda1 " << fmt(le.lambda1, 6) << ", lambda2 " << fmt(le.lambda2, 6)
                  << (hyper ? " (hyperchaotic)" : "") << '\n';
    }
    return kExitOk;
}

sim::ArchSpec arch_from_arg(const std::string& arg) {
    if (fs::exists(arg)) {
        std::ifstream in(arg);
        std::stringstream ss;
        ss << in.rdbuf();
        return sim::arch_spec_from_json(ss.str());
    }
    return sim::suite_spec(arg);
}

int cmd_generate(const std::string& arch, const std::string& out, std::optional<std::uint64_t> seed) {
    auto spec = arch_from_arg(arch);
    if (seed) spec.seed = *seed;
    const auto model = sim::generate_model(spec);
    save_container(model, out);
    std::cout << spec.name << ": " << model.parameter_count() << " parameters -> " << out << '\n';
    return kExitOk;
}

struct TransformArgs {
    std::string input;
    std::string out;
    std::optional<double> prune;
    std::optional<double> finetune;
    std::optional<double> alpha;
    double sigma = 0.1;
    int blocks = 450;
    std::uint64_t seed = 0;
    std::string truth_out;
};

int cmd_transform(const TransformArgs& t) {
    const int n = int(t.prune.has_value()) + int(t.finetune.has_value()) + int(t.alpha.has_value());
    if (n != 1) throw Error("choose exactly one of --prune, --finetune, --tamper");
    const auto model = load_container(t.input);
    ModelWeights out;
    if (t.prune) {
        out = sim::prune(model, *t.prune);
    } else if (t.finetune) {
        out = sim::finetune_surrogate(model, *t.finetune, t.seed);
    } else {
        sim::TamperPlan plan{*t.alpha, t.sigma, t.seed};
        auto res = sim::tamper(model, plan, t.blocks);
        out = std::move(res.model);
        if (!t.truth_out.empty()) save_block_set(res.blocks, t.truth_out);
        std::cout << "tampered " << res.blocks.size() << " of " << t.blocks << " blocks\n";
    }
    if (fs::exists(t.out) && fs::equivalent(t.out, t.input)) throw Error("refusing to overwrite the input container");
    save_container(out, t.out);
    std::cout << "wrote " << t.out << '\n';
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Perceptual hashing of CNN weight containers: piracy detection and tamper localization"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "modelhash 0.1.0");

    HashArgs hash;
    auto* c_hash = app.add_subcommand("hash", "compute piracy hashes (and optionally tamper hashes) of containers");
    add_config_flags(c_hash, hash.flags);
    c_hash->add_option("inputs", hash.inputs, "weight containers")->required()->check(CLI::ExistingFile);
    c_hash->add_option("-o,--out", hash.out, "piracy hash output (single input; default <stem>.ph)");
    c_hash->add_flag("--tamper", hash.tamper, "also write the tamper localization hash (<stem>.th)");
    c_hash->add_option("--tamper-out", hash.tamper_out, "tamper hash output (implies --tamper)");
    c_hash->add_flag("--timing", hash.timing, "report weight-selection and feature-generation times");
    c_hash->add_flag("--json", hash.json, "machine-readable output");
    c_hash->add_option("-j,--jobs", hash.jobs, "parallel workers")->check(CLI::PositiveNumber);

    ConfigFlags th_flags;
    std::string th_in, th_out, th_variant = "chaotic";
    auto* c_th = app.add_subcommand("tamper-hash", "compute the tamper localization hash of a container");
    add_config_flags(c_th, th_flags);
    c_th->add_option("input", th_in)->required()->check(CLI::ExistingFile);
    c_th->add_option("-o,--out", th_out, "output (default <stem>.th)");
    c_th->add_option("--variant", th_variant, "chaotic | direct")->check(CLI::IsMember({"chaotic", "direct"}));

    ConfigFlags loc_flags;
    std::string loc_ref, loc_test, loc_truth;
    bool loc_json = false;
    auto* c_loc = app.add_subcommand("locate", "compare a container against a reference tamper hash");
    add_config_flags(c_loc, loc_flags);
    c_loc->add_option("reference", loc_ref, "reference tamper hash (.th)")->required()->check(CLI::ExistingFile);
    c_loc->add_option("test", loc_test, "container under test")->required()->check(CLI::ExistingFile);
    c_loc->add_option("--truth", loc_truth, "file of truly tampered block indices")->check(CLI::ExistingFile);
    c_loc->add_flag("--json", loc_json);

    ConfigFlags reg_flags;
    std::string reg_path, reg_in, reg_id, reg_notes;
    bool reg_tamper = false;
    auto* c_reg = app.add_subcommand("register", "append a model to a registry");
    add_config_flags(c_reg, reg_flags);
    c_reg->add_option("registry", reg_path)->required();
    c_reg->add_option("input", reg_in, "container or piracy hash file")->required()->check(CLI::ExistingFile);
    c_reg->add_option("--id", reg_id, "model id (default: from the container)");
    c_reg->add_option("--notes", reg_notes);
    c_reg->add_flag("--tamper", reg_tamper, "store the tamper hash too");

    ConfigFlags q_flags;
    std::string q_path, q_in;
    int q_top = 0;
    bool q_json = false;
    auto* c_q = app.add_subcommand("query", "rank registry records by distance; exit 0 if any is SIMILAR, 3 otherwise");
    add_config_flags(c_q, q_flags);
    c_q->add_option("registry", q_path)->required();
    c_q->add_option("input", q_in, "container or piracy hash file")->required()->check(CLI::ExistingFile);
    c_q->add_option("--top", q_top, "show only the best n matches");
    c_q->add_flag("--json", q_json);

    ConfigFlags d_flags;
    std::string d_a, d_b;
    bool d_json = false;
    auto* c_d = app.add_subcommand("distance", "weighted distance between two hashes or containers; exit 0 SIMILAR, 3 DISTINCT");
    add_config_flags(c_d, d_flags);
    c_d->add_option("first", d_a, "hash file or container")->required()->check(CLI::ExistingFile);
    c_d->add_option("second", d_b, "hash file or container")->required()->check(CLI::ExistingFile);
    c_d->add_flag("--json", d_json);

    ConfigFlags v_flags;
    std::string v_in, v_ref;
    bool v_json = false;
    auto* c_v = app.add_subcommand("verify", "hash a container and compare it with a reference piracy hash");
    add_config_flags(c_v, v_flags);
    c_v->add_option("input", v_in, "container")->required()->check(CLI::ExistingFile);
    c_v->add_option("reference", v_ref, "piracy hash file")->required()->check(CLI::ExistingFile);
    c_v->add_flag("--json", v_json);

    ConfigFlags an_flags;
    std::string an_in;
    bool an_json = false;
    auto* c_an = app.add_subcommand("analyze", "print the HOS and structure sequences of a container");
    add_config_flags(c_an, an_flags);
    c_an->add_option("input", an_in)->required()->check(CLI::ExistingFile);
    c_an->add_flag("--json", an_json);

    std::string sim_manifest, sim_out;
    auto* c_sim = app.add_subcommand("simulate", "run an experiment manifest and emit TSV results");
    c_sim->add_option("manifest", sim_manifest)->required()->check(CLI::ExistingFile);
    c_sim->add_option("-o,--out", sim_out, "TSV output (default stdout)");

    ConfigFlags ly_flags;
    double ly_x0 = 0.3, ly_q0 = -1.0;
    long ly_warmup = 1000, ly_horizon = 100000;
    bool ly_json = false;
    auto* c_ly = app.add_subcommand("lyapunov", "Lyapunov exponents of the coupled map");
    add_config_flags(c_ly, ly_flags);
    c_ly->add_option("--x0", ly_x0)->capture_default_str();
    c_ly->add_option("--q0", ly_q0, "initial q (default x0 / 2)");
    c_ly->add_option("--warmup", ly_warmup)->capture_default_str();
    c_ly->add_option("--horizon", ly_horizon)->capture_default_str();
    c_ly->add_flag("--json", ly_json);

    std::string gen_arch, gen_out;
    std::optional<std::uint64_t> gen_seed;
    auto* c_gen = app.add_subcommand("generate", "write a synthetic model container");
    c_gen->add_option("arch", gen_arch, "suite architecture name or architecture JSON file")->required();
    c_gen->add_option("-o,--out", gen_out)->required();
    c_gen->add_option("--seed", gen_seed, "override the architecture seed");

    TransformArgs tr;
    auto* c_tr = app.add_subcommand("transform", "write a pruned, fine-tuned or tampered copy of a container");
    c_tr->add_option("input", tr.input)->required()->check(CLI::ExistingFile);
    c_tr->add_option("-o,--out", tr.out)->required();
    c_tr->add_option("--prune", tr.prune, "magnitude pruning rate in [0, 1)");
    c_tr->add_option("--finetune", tr.finetune, "relative noise epsilon");
    c_tr->add_option("--tamper", tr.alpha, "fraction of blocks to tamper");
    c_tr->add_option("--sigma", tr.sigma, "tamper noise standard deviation")->capture_default_str();
    c_tr->add_option("--blocks", tr.blocks, "block count used for tampering")->capture_default_str();
    c_tr->add_option("--seed", tr.seed)->capture_default_str();
    c_tr->add_option("--truth-out", tr.truth_out, "write the tampered block indices here");

    auto* c_suite = app.add_subcommand("suite", "list the built-in synthetic architectures");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "modelhash: error: " << e.what() << '\n';
        return kExitError;
    }

    try {
        if (*c_hash) {
            if (!hash.tamper_out.empty()) hash.tamper = true;
            return cmd_hash(hash);
        }
        if (*c_th) return cmd_tamper_hash(th_flags, th_in, th_out, th_variant);
        if (*c_loc) return cmd_locate(loc_flags, loc_ref, loc_test, loc_truth, loc_json);
        if (*c_reg) return cmd_register(reg_flags, reg_path, reg_in, reg_id, reg_notes, reg_tamper);
        if (*c_q) return cmd_query(q_flags, q_path, q_in, q_top, q_json);
        if (*c_d) return cmd_distance(d_flags, d_a, d_b, d_json);
        if (*c_v) return cmd_verify(v_flags, v_in, v_ref, v_json);
        if (*c_an) return cmd_analyze(an_flags, an_in, an_json);
        if (*c_sim) return cmd_simulate(sim_manifest, sim_out);
        if (*c_ly) return cmd_lyapunov(ly_flags, ly_x0, ly_q0, ly_warmup, ly_horizon, ly_json);
        if (*c_gen) return cmd_generate(gen_arch, gen_out, gen_seed);
        if (*c_tr) return cmd_transform(tr);
        if (*c_suite) {
            for (const auto& s : sim::default_suite()) {
                std::cout << s.name << '\t' << s.parameter_count() << " parameters\tB=" << s.tamper_blocks << '\n';
            }
            return kExitOk;
        }
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::cerr << "modelhash: error: " << msg << '\n';
        return kExitError;
    }
    return kExitError;
}
