#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "afbench/jsonl.hpp"

namespace afbench {

enum class Slot { Start, End };

Slot slot_from_string(const std::string& s);
std::string to_string(Slot s);

struct Assertion {
    std::string relation;
    std::string start;  // normalized term
    std::string end;    // normalized term
    double weight = 1.0;
};

enum class DumpFormat { ConceptNetCsv, Tsv };

DumpFormat dump_format_from_string(const std::string& s);

struct IngestOptions {
    std::vector<std::string> relations;  // allowlist; usually the skill table's relations
    std::string language = "en";         // applied to ConceptNet dumps only
    bool strict = false;                 // abort on the first malformed line
};

struct IngestIssue {
    size_t line_no = 0;
    std::string reason;
};

struct IngestReport {
    size_t lines_read = 0;
    size_t kept = 0;
    size_t filtered = 0;    // off-language or relation not in allowlist
    size_t duplicates = 0;  // collapsed (relation, start, end) repeats
    std::vector<IngestIssue> malformed;
    json to_json() const;
};

// Immutable, doubly-indexed assertion store. Built once from a dump stream,
// then shared read-only across any number of threads.
class AssertionStore {
public:
    static AssertionStore ingest(std::istream& in, DumpFormat format, const IngestOptions& options,
                                 IngestReport* report = nullptr);
    static AssertionStore ingest_file(const std::filesystem::path& path, DumpFormat format,
                                      const IngestOptions& options, IngestReport* report = nullptr);

    bool contains(const std::string& relation, const std::string& start, const std::string& end) const;
    bool has_relation(const std::string& relation) const;

    const std::vector<std::string>& relations() const { return relation_names_; }
    const std::vector<Assertion>& assertions(const std::string& relation) const;
    size_t size() const { return total_; }

    // Sorted distinct terms occupying the given slot of the relation.
    const std::vector<std::string>& term_pool(const std::string& relation, Slot slot) const;

    // Assertions whose `slot` term equals `term` (index lookup).
    std::vector<const Assertion*> lookup(const std::string& relation, Slot slot, const std::string& term) const;

    // Anti-factual retrieval: with seed_slot == Start, every end term y such
    // that relation(x, y) holds for some x while relation(seed, y) does not;
    // symmetric for seed_slot == End. Sorted, never contains the seed.
    std::vector<std::string> anti_factual_candidates(const std::string& relation, const std::string& seed,
                                                     Slot seed_slot) const;

    // Total weight of assertions with `term` in `slot`; scoring hook.
    double slot_weight(const std::string& relation, Slot slot, const std::string& term) const;

    void save_cache(const std::filesystem::path& path, std::uint64_t dump_checksum) const;
    static std::optional<AssertionStore> load_cache(const std::filesystem::path& path,
                                                    std::uint64_t expected_checksum);

private:
    struct RelationData {
        std::vector<Assertion> assertions;  // sorted by (start, end)
        std::unordered_map<std::string, std::vector<size_t>> by_start;
        std::unordered_map<std::string, std::vector<size_t>> by_end;
        std::unordered_set<std::string> membership;  // start + '\x1f' + end
        std::vector<std::string> starts;             // sorted distinct
        std::vector<std::string> ends;               // sorted distinct
    };

    void build_indexes();

    std::map<std::string, RelationData> relations_;
    std::vector<std::string> relation_names_;
    size_t total_ = 0;
};

// Intersection of candidate sets (each sorted ascending). At least one set
// required; a single set is returned unchanged.
std::vector<std::string> intersect_candidates(const std::vector<std::vector<std::string>>& sets);

}  // namespace afbench
