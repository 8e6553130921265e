#include "afbench/kb_store.hpp"

#include <algorithm>
#include <fstream>

#include "afbench/errors.hpp"
#include "afbench/strings.hpp"

namespace afbench {

namespace {

std::string membership_key(const std::string& start, const std::string& end) {
    std::string key;
    key.reserve(start.size() + end.size() + 1);
    key += start;
    key += '\x1f';
    key += end;
    return key;
}

// One parsed dump line, before dedup.
struct ParsedLine {
    bool keep = false;      // passed filters
    bool malformed = false;
    std::string reason;
    Assertion assertion;
};

ParsedLine parse_conceptnet_line(const std::string& line, const IngestOptions& options) {
    ParsedLine out;
    auto fields = split(line, '\t');
    if (fields.size() < 5) {
        out.malformed = true;
        out.reason = "expected 5 tab-separated fields, got " + std::to_string(fields.size());
        return out;
    }
    const std::string& rel_uri = fields[1];
    const std::string& start_uri = fields[2];
    const std::string& end_uri = fields[3];
    std::string relation = normalize_relation(rel_uri);
    if (relation.empty()) {
        out.malformed = true;
        out.reason = "bad relation URI '" + rel_uri + "'";
        return out;
    }
    if (!options.language.empty() &&
        (uri_language(start_uri) != options.language || uri_language(end_uri) != options.language)) {
        return out;  // filtered, not an error
    }
    if (!options.relations.empty() &&
        !std::binary_search(options.relations.begin(), options.relations.end(), relation)) {
        return out;
    }
    std::string start = normalize_term(start_uri);
    std::string end = normalize_term(end_uri);
    if (start.empty() || end.empty()) {
        out.malformed = true;
        out.reason = "empty term after normalization";
        return out;
    }
    double weight = 1.0;
    const std::string& meta = fields[4];
    if (!meta.empty()) {
        auto parsed = nlohmann::json::parse(meta, nullptr, false);
        if (parsed.is_discarded()) {
            out.malformed = true;
            out.reason = "metadata is not valid JSON";
            return out;
        }
        if (parsed.contains("weight") && parsed["weight"].is_number()) {
            weight = parsed["weight"].get<double>();
        }
    }
    if (weight < 0) {
        out.malformed = true;
        out.reason = "negative weight";
        return out;
    }
    out.keep = true;
    out.assertion = Assertion{relation, start, end, weight};
    return out;
}

ParsedLine parse_tsv_line(const std::string& line, const IngestOptions& options) {
    ParsedLine out;
    auto fields = split(line, '\t');
    if (fields.size() != 3 && fields.size() != 4) {
        out.malformed = true;
        out.reason = "expected 3 or 4 tab-separated fields, got " + std::to_string(fields.size());
        return out;
    }
    std::string relation = normalize_relation(fields[0]);
    std::string start = normalize_term(fields[1]);
    std::string end = normalize_term(fields[2]);
    if (relation.empty() || start.empty() || end.empty()) {
        out.malformed = true;
        out.reason = "empty relation or term";
        return out;
    }
    if (!options.relations.empty() &&
        !std::binary_search(options.relations.begin(), options.relations.end(), relation)) {
        return out;
    }
    double weight = 1.0;
    if (fields.size() == 4) {
        try {
            size_t used = 0;
            weight = std::stod(fields[3], &used);
            if (used != fields[3].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            out.malformed = true;
            out.reason = "bad weight '" + fields[3] + "'";
            return out;
        }
        if (weight < 0) {
            out.malformed = true;
            out.reason = "negative weight";
            return out;
        }
    }
    out.keep = true;
    out.assertion = Assertion{relation, start, end, weight};
    return out;
}

}  // namespace

Slot slot_from_string(const std::string& s) {
    if (s == "start") return Slot::Start;
    if (s == "end") return Slot::End;
    throw ConfigError("bad slot '" + s + "' (expected start|end)");
}

std::string to_string(Slot s) {
    return s == Slot::Start ? "start" : "end";
}

DumpFormat dump_format_from_string(const std::string& s) {
    if (s == "conceptnet") return DumpFormat::ConceptNetCsv;
    if (s == "tsv") return DumpFormat::Tsv;
    throw ConfigError("bad kb format '" + s + "' (expected conceptnet|tsv)");
}

json IngestReport::to_json() const {
    json issues = json::array();
    for (const auto& issue : malformed) {
        issues.push_back({{"line", issue.line_no}, {"reason", issue.reason}});
    }
    return json{{"lines_read", lines_read}, {"kept", kept},           {"filtered", filtered},
                {"duplicates", duplicates}, {"malformed", issues.size()}, {"malformed_lines", issues}};
}

AssertionStore AssertionStore::ingest(std::istream& in, DumpFormat format, const IngestOptions& options,
                                      IngestReport* report) {
    IngestOptions opts = options;
    std::sort(opts.relations.begin(), opts.relations.end());
    IngestReport local;
    IngestReport& rep = report ? *report : local;
    rep = IngestReport{};

    AssertionStore store;
    // (relation, start, end) -> index into that relation's assertion list.
    std::map<std::string, std::unordered_map<std::string, size_t>> seen;

    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (format == DumpFormat::Tsv && line[0] == '#') continue;
        ++rep.lines_read;

        ParsedLine parsed = format == DumpFormat::ConceptNetCsv ? parse_conceptnet_line(line, opts)
                                                                : parse_tsv_line(line, opts);
        if (parsed.malformed) {
            if (opts.strict) {
                throw ConfigError("line " + std::to_string(line_no) + ": " + parsed.reason);
            }
            rep.malformed.push_back({line_no, parsed.reason});
            continue;
        }
        if (!parsed.keep) {
            ++rep.filtered;
            continue;
        }
        Assertion& a = parsed.assertion;
        auto& rel = store.relations_[a.relation];
        auto& rel_seen = seen[a.relation];
        std::string key = membership_key(a.start, a.end);
        auto it = rel_seen.find(key);
        if (it != rel_seen.end()) {
            ++rep.duplicates;
            // Duplicate triples keep the max weight.
            rel.assertions[it->second].weight = std::max(rel.assertions[it->second].weight, a.weight);
            continue;
        }
        rel_seen.emplace(std::move(key), rel.assertions.size());
        rel.assertions.push_back(std::move(a));
        ++rep.kept;
    }

    if (rep.kept == 0) {
        throw ConfigError("ingest produced an empty store (no assertion passed the filters)");
    }
    store.build_indexes();
    return store;
}

AssertionStore AssertionStore::ingest_file(const std::filesystem::path& path, DumpFormat format,
                                           const IngestOptions& options, IngestReport* report) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string(), "cannot open KB dump");
    return ingest(in, format, options, report);
}

void AssertionStore::build_indexes() {
    total_ = 0;
    relation_names_.clear();
    for (auto& [name, rel] : relations_) {
        relation_names_.push_back(name);
        std::sort(rel.assertions.begin(), rel.assertions.end(), [](const Assertion& a, const Assertion& b) {
            return a.start != b.start ? a.start < b.start : a.end < b.end;
        });
        rel.by_start.clear();
        rel.by_end.clear();
        rel.membership.clear();
        rel.starts.clear();
        rel.ends.clear();
        for (size_t i = 0; i < rel.assertions.size(); ++i) {
            const Assertion& a = rel.assertions[i];
            rel.by_start[a.start].push_back(i);
            rel.by_end[a.end].push_back(i);
            rel.membership.insert(membership_key(a.start, a.end));
            rel.starts.push_back(a.start);
            rel.ends.push_back(a.end);
        }
        auto dedup = [](std::vector<std::string>& v) {
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
        };
        dedup(rel.starts);
        dedup(rel.ends);
        total_ += rel.assertions.size();
    }
}

bool AssertionStore::contains(const std::string& relation, const std::string& start,
                              const std::string& end) const {
    auto it = relations_.find(relation);
    if (it == relations_.end()) return false;
    return it->second.membership.count(membership_key(start, end)) > 0;
}

bool AssertionStore::has_relation(const std::string& relation) const {
    return relations_.count(relation) > 0;
}

const std::vector<Assertion>& AssertionStore::assertions(const std::string& relation) const {
    auto it = relations_.find(relation);
    if (it == relations_.end()) throw StructuralError("unknown relation '" + relation + "'");
    return it->second.assertions;
}

const std::vector<std::string>& AssertionStore::term_pool(const std::string& relation, Slot slot) const {
    auto it = relations_.find(relation);
    if (it == relations_.end()) throw StructuralError("unknown relation '" + relation + "'");
    return slot == Slot::Start ? it->second.starts : it->second.ends;
}

std::vector<const Assertion*> AssertionStore::lookup(const std::string& relation, Slot slot,
                                                     const std::string& term) const {
    auto it = relations_.find(relation);
    if (it == relations_.end()) throw StructuralError("unknown relation '" + relation + "'");
    const auto& index = slot == Slot::Start ? it->second.by_start : it->second.by_end;
    std::vector<const Assertion*> out;
    auto found = index.find(term);
    if (found == index.end()) return out;
    out.reserve(found->second.size());
    for (size_t i : found->second) out.push_back(&it->second.assertions[i]);
    return out;
}

std::vector<std::string> AssertionStore::anti_factual_candidates(const std::string& relation,
                                                                 const std::string& seed,
                                                                 Slot seed_slot) const {
    auto it = relations_.find(relation);
    if (it == relations_.end()) throw StructuralError("unknown relation '" + relation + "'");
    const RelationData& rel = it->second;
    // The candidate occupies the slot opposite the seed. Any pooled term t
    // with relation(seed, t) absent qualifies: the assertion that put t in
    // the pool necessarily has a non-seed partner.
    const std::vector<std::string>& pool = seed_slot == Slot::Start ? rel.ends : rel.starts;
    std::vector<std::string> out;
    out.reserve(pool.size());
    for (const std::string& t : pool) {
        if (t == seed) continue;
        bool present = seed_slot == Slot::Start ? rel.membership.count(membership_key(seed, t)) > 0
                                                : rel.membership.count(membership_key(t, seed)) > 0;
        if (!present) out.push_back(t);
    }
    return out;  // pool is sorted, so candidates are sorted
}

double AssertionStore::slot_weight(const std::string& relation, Slot slot, const std::string& term) const {
    double sum = 0.0;
    for (const Assertion* a : lookup(relation, slot, term)) sum += a->weight;
    return sum;
}

std::vector<std::string> intersect_candidates(const std::vector<std::vector<std::string>>& sets) {
    if (sets.empty()) throw StructuralError("intersect_candidates: at least one set required");
    std::vector<std::string> acc = sets[0];
    for (size_t i = 1; i < sets.size(); ++i) {
        std::vector<std::string> next;
        std::set_intersection(acc.begin(), acc.end(), sets[i].begin(), sets[i].end(),
                              std::back_inserter(next));
        acc = std::move(next);
        if (acc.empty()) break;
    }
    return acc;
}

// Cache file layout (little-endian):
//   magic "AFKB", version byte, u64 dump checksum, u64 relation count,
//   then per relation: varstr name, u64 count, count * (varstr start,
//   varstr end, f64 weight). Strings are u32 length + bytes.
namespace {

constexpr char kMagic[4] = {'A', 'F', 'K', 'B'};
constexpr unsigned char kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (i * 8)) & 0xFF);
    out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (i * 8)) & 0xFF);
    out.write(b, 8);
}

void put_str(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

bool get_u32(std::istream& in, std::uint32_t& v) {
    char b[4];
    if (!in.read(b, 4)) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (i * 8);
    return true;
}

bool get_u64(std::istream& in, std::uint64_t& v) {
    char b[8];
    if (!in.read(b, 8)) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (i * 8);
    return true;
}

bool get_str(std::istream& in, std::string& s) {
    std::uint32_t len = 0;
    if (!get_u32(in, len)) return false;
    s.resize(len);
    return static_cast<bool>(in.read(s.data(), len));
}

}  // namespace

void AssertionStore::save_cache(const std::filesystem::path& path, std::uint64_t dump_checksum) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(path.string(), "cannot open cache for write");
        out.write(kMagic, 4);
        out.put(static_cast<char>(kVersion));
        put_u64(out, dump_checksum);
        put_u64(out, relations_.size());
        for (const auto& [name, rel] : relations_) {
            put_str(out, name);
            put_u64(out, rel.assertions.size());
            for (const Assertion& a : rel.assertions) {
                put_str(out, a.start);
                put_str(out, a.end);
                std::uint64_t bits;
                static_assert(sizeof(bits) == sizeof(a.weight));
                std::memcpy(&bits, &a.weight, sizeof(bits));
                put_u64(out, bits);
            }
        }
        if (!out) throw IoError(path.string(), "cache write failed");
    }
    std::filesystem::rename(tmp, path);
}

std::optional<AssertionStore> AssertionStore::load_cache(const std::filesystem::path& path,
                                                         std::uint64_t expected_checksum) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) return std::nullopt;
    int version = in.get();
    if (version != kVersion) return std::nullopt;
    std::uint64_t checksum = 0;
    if (!get_u64(in, checksum) || checksum != expected_checksum) return std::nullopt;

    AssertionStore store;
    std::uint64_t num_relations = 0;
    if (!get_u64(in, num_relations)) return std::nullopt;
    for (std::uint64_t r = 0; r < num_relations; ++r) {
        std::string name;
        std::uint64_t count = 0;
        if (!get_str(in, name) || !get_u64(in, count)) return std::nullopt;
        auto& rel = store.relations_[name];
        rel.assertions.reserve(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            Assertion a;
            a.relation = name;
            std::uint64_t bits = 0;
            if (!get_str(in, a.start) || !get_str(in, a.end) || !get_u64(in, bits)) return std::nullopt;
            std::memcpy(&a.weight, &bits, sizeof(bits));
            rel.assertions.push_back(std::move(a));
        }
    }
    store.build_indexes();
    return store;
}

}  // namespace afbench
