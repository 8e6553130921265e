#include "afbench/strings.hpp"

#include <cctype>
#include <fstream>

#include "afbench/errors.hpp"

namespace afbench {

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = true;  // leading whitespace dropped
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!in_space) out.push_back(' ');
            in_space = true;
        } else {
            out.push_back(c);
            in_space = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

std::string normalize_term(std::string_view raw) {
    std::string_view s = raw;
    if (s.rfind("/c/", 0) == 0) {
        // URI path: /c/<lang>/<term>[/...]; keep only the term segment.
        auto parts = split(s, '/');
        s = parts.size() >= 4 ? std::string_view{} : s;
        if (parts.size() >= 4) {
            std::string term = parts[3];
            for (char& c : term) {
                if (c == '_') c = ' ';
            }
            return collapse_whitespace(to_lower_ascii(term));
        }
        return "";
    }
    std::string term(s);
    for (char& c : term) {
        if (c == '_') c = ' ';
    }
    return collapse_whitespace(to_lower_ascii(term));
}

std::string normalize_relation(std::string_view raw) {
    if (raw.rfind("/r/", 0) == 0) {
        auto parts = split(raw, '/');
        return parts.size() >= 3 ? parts[2] : "";
    }
    return std::string(raw);
}

std::string uri_language(std::string_view uri) {
    if (uri.rfind("/c/", 0) != 0) return "";
    auto parts = split(uri, '/');
    return parts.size() >= 3 ? parts[2] : "";
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    size_t begin = 0;
    while (true) {
        size_t pos = s.find(sep, begin);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(begin));
            break;
        }
        out.emplace_back(s.substr(begin, pos - begin));
        begin = pos + 1;
    }
    return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

bool replace_first(std::string& s, std::string_view needle, std::string_view repl) {
    size_t pos = s.find(needle);
    if (pos == std::string::npos) return false;
    s.replace(pos, needle.size(), repl);
    return true;
}

bool contains(std::string_view haystack, std::string_view needle) {
    return haystack.find(needle) != std::string_view::npos;
}

size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return 0;
    size_t count = 0, pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string_view::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t fnv1a64_mix(std::uint64_t h, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (i * 8)) & 0xFF;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string(), "cannot open for checksum");
    std::uint64_t h = 1469598103934665603ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
        if (got < static_cast<std::streamsize>(sizeof(buf))) break;
    }
    return h;
}

std::string choice_letter(int index) {
    if (index < 0 || index >= 26) throw StructuralError("choice index out of letter range");
    return std::string(1, static_cast<char>('A' + index));
}

}  // namespace afbench
