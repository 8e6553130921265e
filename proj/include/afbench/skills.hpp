#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "afbench/jsonl.hpp"
#include "afbench/kb_store.hpp"

namespace afbench {

// A reasoning skill: a named relation pattern with natural-language surface
// forms. Surfaces carry the slots {X} and {Y} exactly once each; start_slot
// says which of the two holds the KB relation's start term, so a surface like
// "{Y} is a part of {X}" can put the start term second.
struct Skill {
    std::string name;
    std::string kb_relation;
    std::string surface_positive;
    std::string surface_negative;
    char start_slot = 'X';

    Slot slot_of(char slot_char) const { return slot_char == start_slot ? Slot::Start : Slot::End; }
};

class SkillTable {
public:
    static SkillTable load(const json& doc);
    static SkillTable load_file(const std::filesystem::path& path);

    bool has(const std::string& name) const { return index_.count(name) > 0; }
    const Skill& at(const std::string& name) const;
    const std::vector<Skill>& all() const { return skills_; }
    size_t size() const { return skills_.size(); }

    // Sorted unique KB relations; the default ingest allowlist.
    std::vector<std::string> kb_relations() const;

private:
    std::vector<Skill> skills_;
    std::unordered_map<std::string, size_t> index_;
};

// The four permutations of shared-variable placement between a row and a
// column template. Names follow the legend symbols >, ->, <-, <.
enum class PermCase { GT, Right, Left, LT };

const char* to_string(PermCase c);
PermCase perm_case_from_string(const std::string& s);
PermCase mirror(PermCase c);

// Permutation case implied by where the shared variable sits in each
// template (row slot, col slot).
PermCase perm_case_for(Slot row_shared, Slot col_shared);

// One reduction matrix entry. result_col_first records the orientation of
// the reduced template: false means (row free var, col free var), matching
// the legend formulas for cases >, ->, <; case <- and all mirrored entries
// may flip it.
struct ReductionRule {
    std::string row;
    std::string col;
    PermCase perm = PermCase::Right;
    std::string result;
    bool result_col_first = false;
};

struct ClosureViolation {
    std::string row;
    std::string col;
    PermCase perm = PermCase::Right;
    std::string result;
};

class ReductionTable {
public:
    // Loads matrix entries and materializes their row/col mirrors. In strict
    // mode, entries whose result is not a known skill are rejected.
    static ReductionTable load(const json& doc, const SkillTable& skills, bool strict = true);
    static ReductionTable load_file(const std::filesystem::path& path, const SkillTable& skills,
                                    bool strict = true);

    std::optional<ReductionRule> find(const std::string& row, const std::string& col, PermCase c) const;
    std::vector<ClosureViolation> check_closure(const SkillTable& skills) const;
    size_t size() const { return rules_.size(); }

private:
    void insert(const ReductionRule& rule);

    std::unordered_map<std::string, ReductionRule> rules_;  // key "row|col|case"
};

// A (possibly reduced) template over two distinct variables. start_var and
// end_var follow the skill's KB relation orientation.
struct VirtualTemplate {
    std::string skill;
    int start_var = 0;
    int end_var = 0;

    bool operator==(const VirtualTemplate&) const = default;
};

// Reduces two templates sharing exactly one variable; nullopt when the matrix
// has no entry for the pair. Zero or two shared variables is a structural
// error.
std::optional<VirtualTemplate> reduce_pair(const VirtualTemplate& a, const VirtualTemplate& b,
                                           const ReductionTable& rules);

// Left fold of reduce_pair over a template sequence anchored at the front.
// A length-1 sequence reduces to its own template.
std::optional<VirtualTemplate> reduce_path(std::span<const VirtualTemplate> templates,
                                           const ReductionTable& rules);

}  // namespace afbench
