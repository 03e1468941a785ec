#include "modelhash/similarity.hpp"

#include "json_io.hpp"
#include "modelhash/error.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace modelhash {

namespace {

class FileLock {
public:
    explicit FileLock(const std::filesystem::path& path, int operation) {
        fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
        if (fd_ < 0) throw Error("cannot open registry '" + path.string() + "'");
        if (::flock(fd_, operation) != 0) {
            ::close(fd_);
            throw Error("cannot lock registry '" + path.string() + "'");
        }
    }
    ~FileLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_ = -1;
};

detail::ordered_json record_to_json(const RegistryRecord& r) {
    detail::ordered_json j;
    j["model_id"] = r.model_id;
    j["piracy_hash"] = detail::to_json(r.piracy_hash);
    j["tamper_hash"] = r.tamper_hash ? detail::to_json(*r.tamper_hash) : detail::ordered_json(nullptr);
    j["created_at"] = r.created_at;
    j["notes"] = r.notes;
    return j;
}

RegistryRecord record_from_json(const detail::ordered_json& j) {
    try {
        RegistryRecord r;
        r.model_id = j.at("model_id").get<std::string>();
        r.piracy_hash = detail::piracy_from_json(j.at("piracy_hash"));
        if (auto it = j.find("tamper_hash"); it != j.end() && !it->is_null()) {
            r.tamper_hash = detail::tamper_from_json(*it);
        }
        r.created_at = j.value("created_at", std::string{});
        r.notes = j.value("notes", std::string{});
        if (r.model_id.empty()) throw FormatError("empty model_id");
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed registry record: ") + e.what());
    }
}

RegistryContents read_unlocked(const std::filesystem::path& registry) {
    RegistryContents out;
    std::ifstream in(registry);
    if (!in) return out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.records.push_back(record_from_json(detail::parse_json_text(line, "registry record")));
        } catch (const Error& e) {
            out.errors.push_back({number, e.what()});
        }
    }
    return out;
}

} // namespace

double hamming(const BitVector& a, const BitVector& b) {
    if (a.size() != b.size()) {
        throw Error("hash length mismatch (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    }
    if (a.empty()) throw Error("hamming distance of empty vectors");
    std::size_t diff = 0;
    const auto x = a.bits();
    const auto y = b.bits();
    for (std::size_t i = 0; i < x.size(); ++i) diff += x[i] != y[i];
    return static_cast<double>(diff) / static_cast<double>(x.size());
}

std::string_view verdict_name(Verdict v) {
    return v == Verdict::Similar ? "SIMILAR" : "DISTINCT";
}

MatchResult weighted_distance(const PiracyHash& a, const PiracyHash& b, const DistanceWeights& w) {
    w.validate();
    if (a.config_digest != b.config_digest || a.N != b.N || a.b != b.b || a.K != b.K) {
        throw ConfigMismatch();
    }
    MatchResult r;
    r.model_id = b.model_id;
    r.d_hos = hamming(a.hos_bits, b.hos_bits);
    r.d_struct = hamming(a.struct_bits, b.struct_bits);
    r.distance = w.k1 * r.d_hos + w.k2 * r.d_struct;
    r.verdict = r.distance < w.tau ? Verdict::Similar : Verdict::Distinct;
    return r;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void register_record(const RegistryRecord& record, const std::filesystem::path& registry) {
    if (record.model_id.empty()) throw Error("model_id must not be empty");
    FileLock lock(registry, LOCK_EX);

    const auto existing = read_unlocked(registry);
    for (const auto& r : existing.records) {
        if (r.model_id == record.model_id) {
            throw Error("duplicate model_id '" + record.model_id + "'");
        }
    }
    RegistryRecord stamped = record;
    if (stamped.created_at.empty()) stamped.created_at = utc_timestamp();

    std::ofstream out(registry, std::ios::app);
    if (!out) throw Error("cannot append to registry '" + registry.string() + "'");
    out << record_to_json(stamped).dump() << '\n';
    if (!out) throw Error("failed writing registry '" + registry.string() + "'");
}

RegistryContents read_registry(const std::filesystem::path& registry) {
    if (!std::filesystem::exists(registry)) return {};
    FileLock lock(registry, LOCK_SH);
    return read_unlocked(registry);
}

QueryResult query(const PiracyHash& h, const std::filesystem::path& registry, const DistanceWeights& w) {
    auto contents = read_registry(registry);
    QueryResult result;
    result.errors = std::move(contents.errors);
    for (const auto& r : contents.records) {
        if (r.piracy_hash.config_digest != h.config_digest) {
            ++result.skipped_incompatible;
            continue;
        }
        auto m = weighted_distance(h, r.piracy_hash, w);
        m.model_id = r.model_id;
        result.matches.push_back(std::move(m));
    }
    std::sort(result.matches.begin(), result.matches.end(), [](const MatchResult& a, const MatchResult& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.model_id < b.model_id;
    });
    return result;
}

namespace detail {

ordered_json parse_json_text(std::string_view text, std::string_view what) {
    try {
        return ordered_json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string(what) + " is not valid JSON: " + e.what());
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

} // namespace detail

} // namespace modelhash
