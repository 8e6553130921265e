#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace afbench {

// ordered_json keeps key insertion order, which makes serialized records
// byte-stable across runs.
using json = nlohmann::ordered_json;

std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& doc);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// Fetch a required field, throwing ConfigError with a locator otherwise.
const json& require_field(const json& obj, const std::string& key, const std::string& where);

}  // namespace afbench
