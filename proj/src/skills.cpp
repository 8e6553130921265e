#include "afbench/skills.hpp"

#include <algorithm>

#include "afbench/errors.hpp"
#include "afbench/strings.hpp"

namespace afbench {

namespace {

void validate_surface(const std::string& surface, const std::string& where) {
    if (count_occurrences(surface, "{X}") != 1 || count_occurrences(surface, "{Y}") != 1) {
        throw ConfigError(where + ": surface must contain {X} and {Y} exactly once: '" + surface + "'");
    }
}

std::string rule_key(const std::string& row, const std::string& col, PermCase c) {
    return row + "|" + col + "|" + to_string(c);
}

}  // namespace

SkillTable SkillTable::load(const json& doc) {
    if (!doc.is_object()) throw ConfigError("skill table: document must be an object");
    if (!doc.contains("version")) throw ConfigError("skill table: missing version");
    const json& skills = require_field(doc, "skills", "skill table");
    if (!skills.is_array() || skills.empty()) {
        throw ConfigError("skill table: 'skills' must be a non-empty array");
    }
    SkillTable table;
    for (size_t i = 0; i < skills.size(); ++i) {
        const json& s = skills[i];
        std::string where = "skill table entry " + std::to_string(i);
        Skill skill;
        skill.name = require_field(s, "name", where).get<std::string>();
        where += " ('" + skill.name + "')";
        skill.kb_relation = require_field(s, "kb_relation", where).get<std::string>();
        skill.surface_positive = require_field(s, "surface_positive", where).get<std::string>();
        skill.surface_negative = require_field(s, "surface_negative", where).get<std::string>();
        std::string start_slot = s.value("start_slot", "X");
        if (start_slot != "X" && start_slot != "Y") {
            throw ConfigError(where + ": start_slot must be 'X' or 'Y'");
        }
        skill.start_slot = start_slot[0];
        if (skill.name.empty()) throw ConfigError(where + ": empty name");
        if (skill.kb_relation.empty() || normalize_relation(skill.kb_relation) != skill.kb_relation) {
            throw ConfigError(where + ": kb_relation must be a bare relation name, got '" +
                              skill.kb_relation + "'");
        }
        validate_surface(skill.surface_positive, where + " surface_positive");
        validate_surface(skill.surface_negative, where + " surface_negative");
        if (table.index_.count(skill.name)) {
            throw ConfigError(where + ": duplicate skill name");
        }
        table.index_.emplace(skill.name, table.skills_.size());
        table.skills_.push_back(std::move(skill));
    }
    return table;
}

SkillTable SkillTable::load_file(const std::filesystem::path& path) {
    return load(read_json_file(path));
}

const Skill& SkillTable::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw StructuralError("unknown skill '" + name + "'");
    return skills_[it->second];
}

std::vector<std::string> SkillTable::kb_relations() const {
    std::vector<std::string> out;
    for (const Skill& s : skills_) out.push_back(s.kb_relation);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

const char* to_string(PermCase c) {
    switch (c) {
        case PermCase::GT: return "gt";
        case PermCase::Right: return "right";
        case PermCase::Left: return "left";
        case PermCase::LT: return "lt";
    }
    return "?";
}

PermCase perm_case_from_string(const std::string& s) {
    if (s == "gt" || s == ">") return PermCase::GT;
    if (s == "right" || s == "->") return PermCase::Right;
    if (s == "left" || s == "<-") return PermCase::Left;
    if (s == "lt" || s == "<") return PermCase::LT;
    throw ConfigError("bad permutation case '" + s + "' (expected gt|right|left|lt)");
}

PermCase mirror(PermCase c) {
    switch (c) {
        case PermCase::GT: return PermCase::GT;
        case PermCase::Right: return PermCase::Left;
        case PermCase::Left: return PermCase::Right;
        case PermCase::LT: return PermCase::LT;
    }
    return c;
}

PermCase perm_case_for(Slot row_shared, Slot col_shared) {
    if (row_shared == Slot::End) {
        return col_shared == Slot::End ? PermCase::GT : PermCase::Right;
    }
    return col_shared == Slot::End ? PermCase::Left : PermCase::LT;
}

void ReductionTable::insert(const ReductionRule& rule) {
    std::string key = rule_key(rule.row, rule.col, rule.perm);
    auto it = rules_.find(key);
    if (it != rules_.end()) {
        const ReductionRule& prev = it->second;
        if (prev.result != rule.result || prev.result_col_first != rule.result_col_first) {
            throw ConfigError("reduction matrix: conflicting entries for (" + rule.row + ", " + rule.col +
                              ", " + to_string(rule.perm) + ")");
        }
        return;
    }
    rules_.emplace(std::move(key), rule);
}

ReductionTable ReductionTable::load(const json& doc, const SkillTable& skills, bool strict) {
    if (!doc.is_object()) throw ConfigError("reduction matrix: document must be an object");
    if (!doc.contains("version")) throw ConfigError("reduction matrix: missing version");
    const json& entries = require_field(doc, "entries", "reduction matrix");
    if (!entries.is_array()) throw ConfigError("reduction matrix: 'entries' must be an array");

    ReductionTable table;
    for (size_t i = 0; i < entries.size(); ++i) {
        const json& e = entries[i];
        std::string where = "reduction matrix entry " + std::to_string(i);
        ReductionRule rule;
        rule.row = require_field(e, "row", where).get<std::string>();
        rule.col = require_field(e, "col", where).get<std::string>();
        rule.perm = perm_case_from_string(require_field(e, "case", where).get<std::string>());
        rule.result = require_field(e, "result", where).get<std::string>();
        if (!skills.has(rule.row)) throw ConfigError(where + ": unknown row skill '" + rule.row + "'");
        if (!skills.has(rule.col)) throw ConfigError(where + ": unknown col skill '" + rule.col + "'");
        if (rule.result.empty()) throw ConfigError(where + ": empty result (omit the entry instead)");
        if (strict && !skills.has(rule.result)) {
            throw ConfigError(where + ": result '" + rule.result + "' is outside the skill set");
        }
        // Legend orientation: the result starts with the row's free variable
        // except in case <-, which yields reduction(z, x).
        rule.result_col_first = rule.perm == PermCase::Left;

        if (rule.row == rule.col && (rule.perm == PermCase::GT || rule.perm == PermCase::LT)) {
            // Such an entry mirrors onto itself with the opposite orientation,
            // so there is no consistent reading.
            throw ConfigError(where + ": diagonal '" + to_string(rule.perm) +
                              "' entries are orientation-ambiguous");
        }

        table.insert(rule);
        // Materialize the row/col mirror so lookups work in either order.
        ReductionRule mirrored;
        mirrored.row = rule.col;
        mirrored.col = rule.row;
        mirrored.perm = mirror(rule.perm);
        mirrored.result = rule.result;
        mirrored.result_col_first = !rule.result_col_first;
        table.insert(mirrored);
    }
    return table;
}

ReductionTable ReductionTable::load_file(const std::filesystem::path& path, const SkillTable& skills,
                                         bool strict) {
    return load(read_json_file(path), skills, strict);
}

std::optional<ReductionRule> ReductionTable::find(const std::string& row, const std::string& col,
                                                  PermCase c) const {
    auto it = rules_.find(rule_key(row, col, c));
    if (it == rules_.end()) return std::nullopt;
    return it->second;
}

std::vector<ClosureViolation> ReductionTable::check_closure(const SkillTable& skills) const {
    std::vector<ClosureViolation> out;
    for (const auto& [key, rule] : rules_) {
        if (!skills.has(rule.result)) {
            out.push_back({rule.row, rule.col, rule.perm, rule.result});
        }
    }
    std::sort(out.begin(), out.end(), [](const ClosureViolation& a, const ClosureViolation& b) {
        return std::tie(a.row, a.col, a.perm) < std::tie(b.row, b.col, b.perm);
    });
    return out;
}

std::optional<VirtualTemplate> reduce_pair(const VirtualTemplate& a, const VirtualTemplate& b,
                                           const ReductionTable& rules) {
    bool ss = a.start_var == b.start_var;
    bool se = a.start_var == b.end_var;
    bool es = a.end_var == b.start_var;
    bool ee = a.end_var == b.end_var;
    int shared = int(ss) + int(se) + int(es) + int(ee);
    if (shared != 1) {
        throw StructuralError("reduce_pair: templates must share exactly one variable, found " +
                              std::to_string(shared));
    }
    Slot row_shared = (ss || se) ? Slot::Start : Slot::End;
    Slot col_shared = (ss || es) ? Slot::Start : Slot::End;
    PermCase c = perm_case_for(row_shared, col_shared);
    auto rule = rules.find(a.skill, b.skill, c);
    if (!rule) return std::nullopt;

    int row_free = row_shared == Slot::Start ? a.end_var : a.start_var;
    int col_free = col_shared == Slot::Start ? b.end_var : b.start_var;
    VirtualTemplate out;
    out.skill = rule->result;
    out.start_var = rule->result_col_first ? col_free : row_free;
    out.end_var = rule->result_col_first ? row_free : col_free;
    return out;
}

std::optional<VirtualTemplate> reduce_path(std::span<const VirtualTemplate> templates,
                                           const ReductionTable& rules) {
    if (templates.empty()) throw StructuralError("reduce_path: empty sequence");
    VirtualTemplate acc = templates[0];
    for (size_t i = 1; i < templates.size(); ++i) {
        auto next = reduce_pair(acc, templates[i], rules);
        if (!next) return std::nullopt;
        acc = *next;
    }
    return acc;
}

}  // namespace afbench
