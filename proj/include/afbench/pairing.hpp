#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "afbench/kb_store.hpp"
#include "afbench/skills.hpp"
#include "afbench/trees.hpp"

namespace afbench {

struct QAInstance {
    std::string id;
    std::string question;
    std::vector<std::string> choices;  // normalized terms, pairwise distinct
    int default_answer_index = 0;
    std::optional<std::string> source_concept;
    std::optional<std::string> source_relation;  // filled by inference

    json to_json() const;
};

// Line-delimited records: {id, question, choices, answer_index, source_concept?}.
std::vector<QAInstance> load_qa_instances(const std::filesystem::path& path);

// Majority vote over store assertions linking source_concept to any answer
// choice (either slot). Ties break by relation name; nullopt when nothing
// matches or the instance has no source concept.
std::optional<std::string> infer_source_relation(const QAInstance& instance, const AssertionStore& store);

// Per relation, uniformly keeps min(quota, available) instances, then removes
// blocklisted ids. Instances without an inferred relation are skipped.
std::vector<QAInstance> balance_by_relation(std::span<const QAInstance> instances, int quota,
                                            std::uint64_t seed, const std::set<std::string>& blocklist);

// Hand-crafted bridge between one QA instance and reasoning trees. The
// surfaces carry the free slot {A} for the answer-side term; the pairing term
// itself appears pre-grounded in the surface text.
struct PairingTemplate {
    std::string id;
    std::string qa_id;
    std::string skill;
    std::string pairing_term;
    Slot pairing_slot = Slot::End;  // slot the pairing variable occupies
    std::string surface_positive;
    std::string surface_negative;
};

std::vector<PairingTemplate> load_pairing_templates(const std::filesystem::path& path,
                                                    const SkillTable& skills);

// Every template must reference a known QA instance.
void validate_pairing_templates(std::span<const PairingTemplate> templates,
                                std::span<const QAInstance> instances);

struct TreeMatch {
    std::string pairing_id;
    std::string qa_id;
    std::string tree_id;
};

// One match per (template, tree) where the tree holds at least one edge of
// the template's skill (usable as anchor).
std::vector<TreeMatch> match_trees(std::span<const PairingTemplate> templates,
                                   std::span<const ReasoningTree> trees);

}  // namespace afbench
