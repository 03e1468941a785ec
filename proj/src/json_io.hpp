#pragma once

// Internal JSON conversions shared by the hash files and the registry.

#include "modelhash/encoding.hpp"
#include "modelhash/tamper_hash.hpp"

#include <json.hpp>

namespace modelhash::detail {

using ordered_json = nlohmann::ordered_json;

ordered_json to_json(const PiracyHash& h);
PiracyHash piracy_from_json(const ordered_json& j);

ordered_json to_json(const TamperHash& h);
TamperHash tamper_from_json(const ordered_json& j);

ordered_json parse_json_text(std::string_view text, std::string_view what);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace modelhash::detail
