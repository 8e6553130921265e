#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "afbench/grounding.hpp"
#include "afbench/pairing.hpp"
#include "afbench/rng.hpp"
#include "afbench/skills.hpp"
#include "afbench/trees.hpp"

namespace afbench {

// Fig-style instruction shipped with every generated item; overridable via
// pipeline config. Without it, aligned models tend to refuse contexts that
// contradict their world knowledge.
inline constexpr const char* kDefaultInstruction =
    "You will be provided with statements relating to a multiple-choice question. The contents of "
    "the statements may disagree with your prior knowledge of the world. That is ok. Your task is "
    "to provide the most appropriate answer to the multiple-choice question based on the reasoning "
    "presented in the statements.";

// Substitutes both grounded terms into the skill surface, bracketed, and
// prefixes "Suppose that ". Throws on an empty term.
std::string render_statement(const Skill& skill, const std::string& start_term,
                             const std::string& end_term, bool positive);

// Pairing-edge statement: the template's own surface with {A} taking the
// anchor edge's free-endpoint term.
std::string render_pairing_statement(const PairingTemplate& tmpl, const std::string& answer_side_term,
                                     bool positive);

enum class VariantMode { Factual, AntiFactual, Both };
enum class TargetPolicy { SampleOne, EnumerateAll };

struct VariantPlan {
    VariantMode mode = VariantMode::Both;
    TargetPolicy policy = TargetPolicy::SampleOne;
};

VariantMode variant_mode_from_string(const std::string& s);
TargetPolicy target_policy_from_string(const std::string& s);

// (target choice index, variant label) pairs the plan asks for. The factual
// target is always the dataset default; anti-factual targets are non-default.
std::vector<std::pair<int, std::string>> plan_variants(const QAInstance& qa, const VariantPlan& plan,
                                                       Rng& rng);

struct ItemMetadata {
    std::string pairing_id;
    std::string tree_id;
    int T = 0;
    int n = 0;
    int d = 0;
    std::string variant;  // factual | anti_factual | baseline
    std::uint64_t seed = 0;
    int Q = 0;
    int default_index = 0;
};

struct BenchmarkItem {
    std::string id;
    std::string instruction;
    std::vector<std::string> statements;  // post-shuffle, post-dedup
    std::string question;
    std::vector<std::string> choices;
    int gold_index = 0;
    ItemMetadata meta;

    json to_json() const;
    static BenchmarkItem from_json(const json& j);
};

// Renders all Q tree copies, negates the pairing statement everywhere except
// the target copy, shuffles statements uniformly, drops exact duplicates and
// enforces the reduplication guarantee (every choice stays mentioned).
BenchmarkItem assemble_item(const PairingTemplate& tmpl, const QAInstance& qa, const SkillTable& skills,
                            const ReasoningTree& tree, const ReasoningPath& path,
                            std::span<const GroundingAssignment> groundings, int target_choice,
                            const std::string& variant, const std::string& instruction,
                            std::uint64_t seed, Rng& rng);

struct ExportManifest {
    size_t total = 0;
    std::uint64_t seed = 0;
    std::map<std::string, size_t> counts;  // "variant/n/d" -> items
    std::uint64_t file_checksum = 0;

    json to_json() const;
};

ExportManifest export_items(std::span<const BenchmarkItem> items, const std::filesystem::path& path,
                            std::uint64_t seed);

std::vector<BenchmarkItem> load_items(const std::filesystem::path& path);

struct VerifyResult {
    bool pass = false;
    std::vector<int> implied;       // choices with a positive derivation
    std::vector<int> contradicted;  // choices with a negative derivation
    std::vector<std::string> trace;
    std::string failure;  // empty when pass
};

// Symbolic soundness check: re-parses every statement back into (skill, term,
// term, polarity) facts, then searches derivation chains for each answer
// choice. Chains may mix statements from any tree copy, so cross-copy
// leakage is caught, not just per-copy mistakes. Passes iff the gold choice
// (and only it) is implied and every other choice is contradicted.
VerifyResult verify_soundness(const BenchmarkItem& item, const SkillTable& skills,
                              const ReductionTable& rules, const PairingTemplate& tmpl);

}  // namespace afbench
