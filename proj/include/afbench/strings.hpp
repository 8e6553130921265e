#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace afbench {

std::string to_lower_ascii(std::string_view s);

// Collapses runs of whitespace to single spaces and trims both ends.
std::string collapse_whitespace(std::string_view s);

// Canonical term form used throughout: lowercase, underscores as spaces,
// single-space separated, KB URI prefixes stripped. "/c/en/music_store/n"
// and "Music  Store" both normalize to "music store".
std::string normalize_term(std::string_view raw);

// "/r/AtLocation" -> "AtLocation"; plain names pass through.
std::string normalize_relation(std::string_view raw);

// Language tag of a concept URI ("/c/en/dog" -> "en"), empty if not a URI.
std::string uri_language(std::string_view uri);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool replace_first(std::string& s, std::string_view needle, std::string_view repl);
bool contains(std::string_view haystack, std::string_view needle);
size_t count_occurrences(std::string_view haystack, std::string_view needle);

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64_mix(std::uint64_t h, std::uint64_t v);
std::string hex64(std::uint64_t v);

// FNV-1a of a file's raw bytes; used for cache keys and manifest checksums.
std::uint64_t file_checksum(const std::filesystem::path& path);

// Answer-choice letters: 0 -> "A", 25 -> "Z".
std::string choice_letter(int index);

}  // namespace afbench
