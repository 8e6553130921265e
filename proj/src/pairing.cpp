#include "afbench/pairing.hpp"

#include <algorithm>
#include <map>

#include "afbench/errors.hpp"
#include "afbench/rng.hpp"
#include "afbench/strings.hpp"

namespace afbench {

namespace {

void check_term_clean(const std::string& term, const std::string& where) {
    for (char c : "[]{}") {
        if (c && term.find(c) != std::string::npos) {
            throw ConfigError(where + ": term '" + term + "' may not contain brackets or braces");
        }
    }
}

}  // namespace

json QAInstance::to_json() const {
    json j{{"id", id},
           {"question", question},
           {"choices", choices},
           {"answer_index", default_answer_index}};
    if (source_concept) j["source_concept"] = *source_concept;
    if (source_relation) j["source_relation"] = *source_relation;
    return j;
}

std::vector<QAInstance> load_qa_instances(const std::filesystem::path& path) {
    std::vector<QAInstance> out;
    std::vector<json> records = read_jsonl(path);
    std::set<std::string> ids;
    for (size_t i = 0; i < records.size(); ++i) {
        const json& r = records[i];
        std::string where = path.string() + " record " + std::to_string(i + 1);
        QAInstance inst;
        inst.id = require_field(r, "id", where).get<std::string>();
        where += " ('" + inst.id + "')";
        if (!ids.insert(inst.id).second) throw ConfigError(where + ": duplicate id");
        inst.question = require_field(r, "question", where).get<std::string>();
        const json& choices = require_field(r, "choices", where);
        if (!choices.is_array() || choices.size() < 2) {
            throw ConfigError(where + ": need at least 2 choices");
        }
        for (const json& c : choices) {
            std::string term = normalize_term(c.get<std::string>());
            if (term.empty()) throw ConfigError(where + ": empty choice");
            check_term_clean(term, where);
            inst.choices.push_back(std::move(term));
        }
        std::set<std::string> distinct(inst.choices.begin(), inst.choices.end());
        if (distinct.size() != inst.choices.size()) {
            throw ConfigError(where + ": choices must be pairwise distinct");
        }
        inst.default_answer_index = require_field(r, "answer_index", where).get<int>();
        if (inst.default_answer_index < 0 ||
            inst.default_answer_index >= static_cast<int>(inst.choices.size())) {
            throw ConfigError(where + ": answer_index out of range");
        }
        if (r.contains("source_concept") && !r["source_concept"].is_null()) {
            inst.source_concept = normalize_term(r["source_concept"].get<std::string>());
        }
        if (r.contains("source_relation") && !r["source_relation"].is_null()) {
            inst.source_relation = r["source_relation"].get<std::string>();
        }
        out.push_back(std::move(inst));
    }
    return out;
}

std::optional<std::string> infer_source_relation(const QAInstance& instance, const AssertionStore& store) {
    if (!instance.source_concept) return std::nullopt;
    const std::string& source = *instance.source_concept;
    // relation -> number of assertions linking the source concept to a choice.
    std::map<std::string, size_t> votes;
    for (const std::string& relation : store.relations()) {
        size_t count = 0;
        for (const std::string& choice : instance.choices) {
            if (store.contains(relation, source, choice)) ++count;
            if (store.contains(relation, choice, source)) ++count;
        }
        if (count > 0) votes[relation] = count;
    }
    if (votes.empty()) return std::nullopt;
    // std::map iteration is name-ordered, so ties resolve lexicographically.
    std::string best;
    size_t best_count = 0;
    for (const auto& [relation, count] : votes) {
        if (count > best_count) {
            best = relation;
            best_count = count;
        }
    }
    return best;
}

std::vector<QAInstance> balance_by_relation(std::span<const QAInstance> instances, int quota,
                                            std::uint64_t seed, const std::set<std::string>& blocklist) {
    if (quota < 1) throw StructuralError("balance_by_relation: quota must be >= 1");
    std::map<std::string, std::vector<size_t>> by_relation;
    for (size_t i = 0; i < instances.size(); ++i) {
        if (!instances[i].source_relation) continue;
        by_relation[*instances[i].source_relation].push_back(i);
    }
    std::vector<size_t> picked;
    for (auto& [relation, indices] : by_relation) {
        size_t keep = std::min<size_t>(static_cast<size_t>(quota), indices.size());
        if (keep < indices.size()) {
            Rng rng = Rng::substream(seed, "balance/" + relation);
            for (size_t i = 0; i < keep; ++i) {
                size_t j = i + static_cast<size_t>(rng.uniform(indices.size() - i));
                std::swap(indices[i], indices[j]);
            }
        }
        picked.insert(picked.end(), indices.begin(), indices.begin() + static_cast<long>(keep));
    }
    std::sort(picked.begin(), picked.end());
    std::vector<QAInstance> out;
    for (size_t i : picked) {
        if (blocklist.count(instances[i].id)) continue;  // rejections applied after sampling
        out.push_back(instances[i]);
    }
    return out;
}

std::vector<PairingTemplate> load_pairing_templates(const std::filesystem::path& path,
                                                    const SkillTable& skills) {
    json doc = read_json_file(path);
    if (!doc.contains("version")) throw ConfigError(path.string() + ": missing version");
    const json& templates = require_field(doc, "templates", path.string());
    if (!templates.is_array()) throw ConfigError(path.string() + ": 'templates' must be an array");
    std::vector<PairingTemplate> out;
    std::set<std::string> ids;
    for (size_t i = 0; i < templates.size(); ++i) {
        const json& t = templates[i];
        std::string where = path.string() + " template " + std::to_string(i);
        PairingTemplate tmpl;
        tmpl.id = require_field(t, "id", where).get<std::string>();
        where += " ('" + tmpl.id + "')";
        if (!ids.insert(tmpl.id).second) throw ConfigError(where + ": duplicate template id");
        tmpl.qa_id = require_field(t, "qa_id", where).get<std::string>();
        tmpl.skill = require_field(t, "skill", where).get<std::string>();
        if (!skills.has(tmpl.skill)) throw ConfigError(where + ": unknown skill '" + tmpl.skill + "'");
        tmpl.pairing_term = normalize_term(require_field(t, "pairing_term", where).get<std::string>());
        if (tmpl.pairing_term.empty()) throw ConfigError(where + ": empty pairing term");
        check_term_clean(tmpl.pairing_term, where);
        tmpl.pairing_slot = slot_from_string(require_field(t, "pairing_slot", where).get<std::string>());
        tmpl.surface_positive = require_field(t, "surface_positive", where).get<std::string>();
        tmpl.surface_negative = require_field(t, "surface_negative", where).get<std::string>();
        for (const std::string* surface : {&tmpl.surface_positive, &tmpl.surface_negative}) {
            if (count_occurrences(*surface, "{A}") != 1) {
                throw ConfigError(where + ": surface must contain {A} exactly once: '" + *surface + "'");
            }
            if (!contains(*surface, "[" + tmpl.pairing_term + "]")) {
                throw ConfigError(where + ": surface must embed the bracketed pairing term: '" +
                                  *surface + "'");
            }
        }
        out.push_back(std::move(tmpl));
    }
    return out;
}

void validate_pairing_templates(std::span<const PairingTemplate> templates,
                                std::span<const QAInstance> instances) {
    std::set<std::string> known;
    for (const QAInstance& inst : instances) known.insert(inst.id);
    for (const PairingTemplate& t : templates) {
        if (!known.count(t.qa_id)) {
            throw ConfigError("pairing template '" + t.id + "' references unknown qa_id '" + t.qa_id + "'");
        }
    }
}

std::vector<TreeMatch> match_trees(std::span<const PairingTemplate> templates,
                                   std::span<const ReasoningTree> trees) {
    std::vector<TreeMatch> out;
    for (const PairingTemplate& tmpl : templates) {
        for (const ReasoningTree& tree : trees) {
            bool has_anchor = std::any_of(tree.edges.begin(), tree.edges.end(),
                                          [&](const TreeEdge& e) { return e.skill == tmpl.skill; });
            if (has_anchor) out.push_back({tmpl.id, tmpl.qa_id, tree.id});
        }
    }
    return out;
}

}  // namespace afbench
