#include "afbench/assemble.hpp"

#include <algorithm>
#include <functional>
#include <regex>
#include <set>
#include <unordered_set>

#include "afbench/errors.hpp"
#include "afbench/strings.hpp"

namespace afbench {

namespace {

constexpr const char* kSupposePrefix = "Suppose that ";

std::string bracket(const std::string& term) {
    return "[" + term + "]";
}

std::string fill_surface(std::string surface, const Skill& skill, const std::string& start_term,
                         const std::string& end_term) {
    const std::string& x_term = skill.start_slot == 'X' ? start_term : end_term;
    const std::string& y_term = skill.start_slot == 'X' ? end_term : start_term;
    replace_first(surface, "{X}", bracket(x_term));
    replace_first(surface, "{Y}", bracket(y_term));
    return surface;
}

}  // namespace

std::string render_statement(const Skill& skill, const std::string& start_term,
                             const std::string& end_term, bool positive) {
    if (start_term.empty() || end_term.empty()) {
        throw StructuralError("render_statement: unassigned slot for skill '" + skill.name + "'");
    }
    const std::string& surface = positive ? skill.surface_positive : skill.surface_negative;
    return kSupposePrefix + fill_surface(surface, skill, start_term, end_term);
}

std::string render_pairing_statement(const PairingTemplate& tmpl, const std::string& answer_side_term,
                                     bool positive) {
    if (answer_side_term.empty()) {
        throw StructuralError("render_pairing_statement: unassigned answer-side term");
    }
    std::string surface = positive ? tmpl.surface_positive : tmpl.surface_negative;
    replace_first(surface, "{A}", bracket(answer_side_term));
    return kSupposePrefix + surface;
}

VariantMode variant_mode_from_string(const std::string& s) {
    if (s == "factual") return VariantMode::Factual;
    if (s == "anti_factual") return VariantMode::AntiFactual;
    if (s == "both") return VariantMode::Both;
    throw ConfigError("bad variant mode '" + s + "' (expected factual|anti_factual|both)");
}

TargetPolicy target_policy_from_string(const std::string& s) {
    if (s == "sample_one") return TargetPolicy::SampleOne;
    if (s == "enumerate_all") return TargetPolicy::EnumerateAll;
    throw ConfigError("bad target policy '" + s + "' (expected sample_one|enumerate_all)");
}

std::vector<std::pair<int, std::string>> plan_variants(const QAInstance& qa, const VariantPlan& plan,
                                                       Rng& rng) {
    int q = static_cast<int>(qa.choices.size());
    if (q < 2) throw StructuralError("plan_variants: need at least 2 choices");
    std::vector<std::pair<int, std::string>> out;
    if (plan.mode == VariantMode::Factual || plan.mode == VariantMode::Both) {
        out.push_back({qa.default_answer_index, "factual"});
    }
    if (plan.mode == VariantMode::AntiFactual || plan.mode == VariantMode::Both) {
        std::vector<int> targets;
        for (int i = 0; i < q; ++i) {
            if (i != qa.default_answer_index) targets.push_back(i);
        }
        if (plan.policy == TargetPolicy::SampleOne) {
            out.push_back({targets[rng.uniform(targets.size())], "anti_factual"});
        } else {
            for (int t : targets) out.push_back({t, "anti_factual"});
        }
    }
    return out;
}

json BenchmarkItem::to_json() const {
    return json{{"id", id},
                {"instruction", instruction},
                {"statements", statements},
                {"question", question},
                {"choices", choices},
                {"gold", choice_letter(gold_index)},
                {"metadata",
                 {{"pairing_id", meta.pairing_id},
                  {"tree_id", meta.tree_id},
                  {"T", meta.T},
                  {"n", meta.n},
                  {"d", meta.d},
                  {"variant", meta.variant},
                  {"seed", meta.seed},
                  {"Q", meta.Q},
                  {"default_index", meta.default_index}}},
                {"schema_version", 1}};
}

BenchmarkItem BenchmarkItem::from_json(const json& j) {
    BenchmarkItem item;
    item.id = j.at("id").get<std::string>();
    item.instruction = j.at("instruction").get<std::string>();
    item.statements = j.at("statements").get<std::vector<std::string>>();
    item.question = j.at("question").get<std::string>();
    item.choices = j.at("choices").get<std::vector<std::string>>();
    std::string gold = j.at("gold").get<std::string>();
    if (gold.size() != 1 || gold[0] < 'A' || gold[0] >= 'A' + 26) {
        throw ConfigError("item '" + item.id + "': bad gold letter '" + gold + "'");
    }
    item.gold_index = gold[0] - 'A';
    const json& m = j.at("metadata");
    item.meta.pairing_id = m.at("pairing_id").get<std::string>();
    item.meta.tree_id = m.at("tree_id").get<std::string>();
    item.meta.T = m.at("T").get<int>();
    item.meta.n = m.at("n").get<int>();
    item.meta.d = m.at("d").get<int>();
    item.meta.variant = m.at("variant").get<std::string>();
    item.meta.seed = m.at("seed").get<std::uint64_t>();
    item.meta.Q = m.at("Q").get<int>();
    item.meta.default_index = m.at("default_index").get<int>();
    if (item.gold_index < 0 || item.gold_index >= static_cast<int>(item.choices.size())) {
        throw ConfigError("item '" + item.id + "': gold letter out of range");
    }
    return item;
}

BenchmarkItem assemble_item(const PairingTemplate& tmpl, const QAInstance& qa, const SkillTable& skills,
                            const ReasoningTree& tree, const ReasoningPath& path,
                            std::span<const GroundingAssignment> groundings, int target_choice,
                            const std::string& variant, const std::string& instruction,
                            std::uint64_t seed, Rng& rng) {
    int q = static_cast<int>(qa.choices.size());
    if (static_cast<int>(groundings.size()) != q) {
        throw StructuralError("assemble_item: need one grounding per answer choice");
    }
    if (target_choice < 0 || target_choice >= q) {
        throw StructuralError("assemble_item: target choice out of range");
    }
    const TreeEdge& anchor = tree.edges[path.anchor_edge];
    int answer_side_var = anchor.start == path.pairing_var ? anchor.end : anchor.start;

    std::vector<std::string> statements;
    statements.reserve(static_cast<size_t>(q) * tree.edges.size());
    for (int copy = 0; copy < q; ++copy) {
        const GroundingAssignment& g = groundings[copy];
        auto term_of = [&](int var) -> const std::string& {
            auto it = g.terms.find(var);
            if (it == g.terms.end()) {
                throw StructuralError("assemble_item: missing grounding for variable " +
                                      std::to_string(var) + " in copy " + std::to_string(copy));
            }
            return it->second;
        };
        for (int e = 0; e < tree.size(); ++e) {
            const TreeEdge& edge = tree.edges[e];
            if (e == path.anchor_edge) {
                // Only the pairing statement carries the negation; interior
                // and distractor statements stay positive in every copy.
                statements.push_back(
                    render_pairing_statement(tmpl, term_of(answer_side_var), copy == target_choice));
            } else {
                statements.push_back(render_statement(skills.at(edge.skill), term_of(edge.start),
                                                      term_of(edge.end), true));
            }
        }
    }

    rng.shuffle(statements);

    std::vector<std::string> deduped;
    std::unordered_set<std::string> seen;
    for (std::string& s : statements) {
        if (seen.insert(s).second) deduped.push_back(std::move(s));
    }

    for (const std::string& choice : qa.choices) {
        std::string needle = bracket(choice);
        bool mentioned = std::any_of(deduped.begin(), deduped.end(),
                                     [&](const std::string& s) { return contains(s, needle); });
        if (!mentioned) {
            throw SoundnessError("assembly error: choice '" + choice +
                                 "' lost its last mention after dedup (item " + tmpl.id + "/" + tree.id +
                                 ")");
        }
    }

    BenchmarkItem item;
    item.instruction = instruction.empty() ? kDefaultInstruction : instruction;
    item.statements = std::move(deduped);
    item.question = qa.question;
    item.choices = qa.choices;
    item.gold_index = target_choice;
    item.meta.pairing_id = tmpl.id;
    item.meta.tree_id = tree.id;
    item.meta.T = tree.size();
    item.meta.n = path.n;
    item.meta.d = path.d;
    item.meta.variant = variant;
    item.meta.seed = seed;
    item.meta.Q = q;
    item.meta.default_index = qa.default_answer_index;
    std::string path_tag = hex64(fnv1a64(path.to_json().dump()));
    item.id = tmpl.id + "." + tree.id + "." + path_tag.substr(0, 8) + "." + variant + "." +
              choice_letter(target_choice);
    return item;
}

json ExportManifest::to_json() const {
    json counts_j = json::object();
    for (const auto& [key, value] : counts) counts_j[key] = value;
    return json{{"total", total},
                {"seed", seed},
                {"counts_by_variant_n_d", counts_j},
                {"file_checksum", hex64(file_checksum)}};
}

ExportManifest export_items(std::span<const BenchmarkItem> items, const std::filesystem::path& path,
                            std::uint64_t seed) {
    std::vector<json> records;
    records.reserve(items.size());
    ExportManifest manifest;
    manifest.seed = seed;
    for (const BenchmarkItem& item : items) {
        records.push_back(item.to_json());
        std::string key = item.meta.variant + "/" + std::to_string(item.meta.n) + "/" +
                          std::to_string(item.meta.d);
        ++manifest.counts[key];
    }
    write_jsonl(path, records);
    manifest.total = items.size();
    manifest.file_checksum = file_checksum(path);
    return manifest;
}

std::vector<BenchmarkItem> load_items(const std::filesystem::path& path) {
    std::vector<BenchmarkItem> out;
    for (const json& j : read_jsonl(path)) out.push_back(BenchmarkItem::from_json(j));
    return out;
}

// ---------------------------------------------------------------------------
// Soundness verification
// ---------------------------------------------------------------------------

namespace {

// A statement parsed back into relational form.
struct Fact {
    std::string skill;
    std::string start;
    std::string end;
    bool positive = true;
};

std::string escape_regex(const std::string& s) {
    static const std::string specials = R"(\.^$|()[]{}*+?)";
    std::string out;
    for (char c : s) {
        if (specials.find(c) != std::string::npos) out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

// Compiles a surface form into a regex whose capture groups hold bracketed
// slot terms, in slot order of appearance.
struct SurfacePattern {
    std::regex re;
    std::vector<char> slot_order;  // 'X','Y' or 'A'
};

SurfacePattern compile_surface(const std::string& surface, const std::vector<std::string>& slots) {
    SurfacePattern out;
    std::string pattern = "^";
    std::string rest = surface;
    while (!rest.empty()) {
        size_t best_pos = std::string::npos;
        std::string best_slot;
        for (const std::string& slot : slots) {
            size_t pos = rest.find(slot);
            if (pos != std::string::npos && (best_pos == std::string::npos || pos < best_pos)) {
                best_pos = pos;
                best_slot = slot;
            }
        }
        if (best_pos == std::string::npos) {
            pattern += escape_regex(rest);
            break;
        }
        pattern += escape_regex(rest.substr(0, best_pos));
        pattern += R"(\[([^\]]+)\])";
        out.slot_order.push_back(best_slot[1]);  // "{X}" -> 'X'
        rest = rest.substr(best_pos + best_slot.size());
    }
    pattern += "$";
    out.re = std::regex(pattern);
    return out;
}

struct StatementParser {
    struct SkillPatterns {
        const Skill* skill;
        SurfacePattern positive;
        SurfacePattern negative;
    };
    std::vector<SkillPatterns> skill_patterns;
    SurfacePattern pairing_positive;
    SurfacePattern pairing_negative;
    const PairingTemplate* tmpl;

    StatementParser(const SkillTable& skills, const PairingTemplate& pairing) : tmpl(&pairing) {
        for (const Skill& s : skills.all()) {
            skill_patterns.push_back({&s, compile_surface(s.surface_positive, {"{X}", "{Y}"}),
                                      compile_surface(s.surface_negative, {"{X}", "{Y}"})});
        }
        pairing_positive = compile_surface(pairing.surface_positive, {"{A}"});
        pairing_negative = compile_surface(pairing.surface_negative, {"{A}"});
    }

    // All relational readings of one statement (a pairing statement also
    // parses under its skill's surface; duplicates are fine, they collapse).
    std::vector<Fact> parse(const std::string& statement) const {
        std::vector<Fact> facts;
        std::string body = statement;
        if (body.rfind(kSupposePrefix, 0) != 0) return facts;
        body = body.substr(std::string(kSupposePrefix).size());

        auto try_skill = [&](const SkillPatterns& sp, bool positive) {
            const SurfacePattern& pat = positive ? sp.positive : sp.negative;
            std::smatch m;
            if (!std::regex_match(body, m, pat.re)) return;
            std::string x, y;
            for (size_t i = 0; i < pat.slot_order.size(); ++i) {
                (pat.slot_order[i] == 'X' ? x : y) = m[i + 1].str();
            }
            Fact f;
            f.skill = sp.skill->name;
            f.start = sp.skill->start_slot == 'X' ? x : y;
            f.end = sp.skill->start_slot == 'X' ? y : x;
            f.positive = positive;
            facts.push_back(std::move(f));
        };
        for (const SkillPatterns& sp : skill_patterns) {
            try_skill(sp, true);
            try_skill(sp, false);
        }
        auto try_pairing = [&](const SurfacePattern& pat, bool positive) {
            std::smatch m;
            if (!std::regex_match(body, m, pat.re)) return;
            std::string a = m[1].str();
            Fact f;
            f.skill = tmpl->skill;
            if (tmpl->pairing_slot == Slot::Start) {
                f.start = tmpl->pairing_term;
                f.end = a;
            } else {
                f.start = a;
                f.end = tmpl->pairing_term;
            }
            f.positive = positive;
            facts.push_back(std::move(f));
        };
        try_pairing(pairing_positive, true);
        try_pairing(pairing_negative, false);

        std::sort(facts.begin(), facts.end(), [](const Fact& a, const Fact& b) {
            return std::tie(a.skill, a.start, a.end, a.positive) <
                   std::tie(b.skill, b.start, b.end, b.positive);
        });
        facts.erase(std::unique(facts.begin(), facts.end(),
                                [](const Fact& a, const Fact& b) {
                                    return a.skill == b.skill && a.start == b.start && a.end == b.end &&
                                           a.positive == b.positive;
                                }),
                    facts.end());
        return facts;
    }
};

// Derivation search over parsed facts. Chains are simple paths in the fact
// graph running from the pairing term out to a choice term; the fold is
// anchored at the pairing-side fact, mirroring generation.
struct DerivationChecker {
    const ReductionTable& rules;
    const PairingTemplate& tmpl;
    std::vector<Fact> facts;
    std::map<std::string, std::vector<size_t>> by_term;  // term -> incident fact ids

    static constexpr size_t kMaxChain = 16;

    DerivationChecker(const ReductionTable& r, const PairingTemplate& t, std::vector<Fact> fs)
        : rules(r), tmpl(t), facts(std::move(fs)) {
        for (size_t i = 0; i < facts.size(); ++i) {
            by_term[facts[i].start].push_back(i);
            by_term[facts[i].end].push_back(i);
        }
    }

    // True iff the chain (ordered pairing-side first) folds to the pairing
    // skill with the pairing term and the choice in their declared slots.
    bool chain_derives(const std::vector<size_t>& chain, const std::string& choice) const {
        std::map<std::string, int> var_of;
        auto var_id = [&](const std::string& term) {
            auto [it, inserted] = var_of.emplace(term, static_cast<int>(var_of.size()));
            (void)inserted;
            return it->second;
        };
        std::vector<VirtualTemplate> seq;
        seq.reserve(chain.size());
        for (size_t idx : chain) {
            seq.push_back({facts[idx].skill, var_id(facts[idx].start), var_id(facts[idx].end)});
        }
        auto reduced = reduce_path(seq, rules);
        if (!reduced) return false;
        if (reduced->skill != tmpl.skill) return false;
        int p_var = var_id(tmpl.pairing_term);
        int a_var = var_id(choice);
        if (tmpl.pairing_slot == Slot::Start) {
            return reduced->start_var == p_var && reduced->end_var == a_var;
        }
        return reduced->start_var == a_var && reduced->end_var == p_var;
    }

    // Searches for a chain from the pairing term to `choice` whose first
    // (pairing-side) fact has polarity `anchor_positive` and whose remaining
    // facts are all positive.
    bool derivable(const std::string& choice, bool anchor_positive) const {
        if (choice == tmpl.pairing_term) return false;
        std::vector<size_t> chain;
        std::set<std::string> visited;
        bool found = false;

        std::function<void(const std::string&)> dfs = [&](const std::string& term) {
            if (found || chain.size() >= kMaxChain) return;
            auto it = by_term.find(term);
            if (it == by_term.end()) return;
            for (size_t idx : it->second) {
                if (found) return;
                const Fact& f = facts[idx];
                bool need_positive = !chain.empty();  // only the anchor may be negative
                if (need_positive ? !f.positive : f.positive != anchor_positive) continue;
                const std::string& other = f.start == term ? f.end : f.start;
                if (f.start != term && f.end != term) continue;
                if (visited.count(other) || other == term) continue;
                chain.push_back(idx);
                if (other == choice) {
                    if (chain_derives(chain, choice)) {
                        found = true;
                        chain.pop_back();
                        return;
                    }
                } else {
                    visited.insert(other);
                    dfs(other);
                    visited.erase(other);
                }
                chain.pop_back();
            }
        };
        visited.insert(tmpl.pairing_term);
        dfs(tmpl.pairing_term);
        return found;
    }
};

}  // namespace

VerifyResult verify_soundness(const BenchmarkItem& item, const SkillTable& skills,
                              const ReductionTable& rules, const PairingTemplate& tmpl) {
    VerifyResult result;
    if (item.meta.pairing_id != tmpl.id) {
        result.failure = "pairing template '" + tmpl.id + "' does not match item metadata '" +
                         item.meta.pairing_id + "'";
        return result;
    }

    StatementParser parser(skills, tmpl);
    std::vector<Fact> facts;
    for (size_t i = 0; i < item.statements.size(); ++i) {
        std::vector<Fact> parsed = parser.parse(item.statements[i]);
        if (parsed.empty()) {
            result.failure = "statement " + std::to_string(i) + " is unparseable: '" +
                             item.statements[i] + "'";
            return result;
        }
        facts.insert(facts.end(), parsed.begin(), parsed.end());
    }

    DerivationChecker checker(rules, tmpl, std::move(facts));
    for (int c = 0; c < static_cast<int>(item.choices.size()); ++c) {
        bool implied = checker.derivable(item.choices[c], /*anchor_positive=*/true);
        bool contradicted = checker.derivable(item.choices[c], /*anchor_positive=*/false);
        if (implied) result.implied.push_back(c);
        if (contradicted) result.contradicted.push_back(c);
        result.trace.push_back("choice " + choice_letter(c) + " ('" + item.choices[c] + "'): " +
                               (implied ? "implied" : "not implied") + ", " +
                               (contradicted ? "contradicted" : "not contradicted"));
    }

    bool exactly_one = result.implied.size() == 1;
    bool gold_implied = exactly_one && result.implied[0] == item.gold_index;
    bool gold_clean = std::find(result.contradicted.begin(), result.contradicted.end(),
                                item.gold_index) == result.contradicted.end();
    bool others_contradicted = true;
    for (int c = 0; c < static_cast<int>(item.choices.size()); ++c) {
        if (c == item.gold_index) continue;
        if (std::find(result.contradicted.begin(), result.contradicted.end(), c) ==
            result.contradicted.end()) {
            others_contradicted = false;
        }
    }
    result.pass = exactly_one && gold_implied && gold_clean && others_contradicted;
    if (!result.pass && result.failure.empty()) {
        if (!exactly_one) {
            result.failure = std::to_string(result.implied.size()) + " choices implied (want exactly 1)";
        } else if (!gold_implied) {
            result.failure = "implied choice is not the gold label";
        } else if (!gold_clean) {
            result.failure = "gold choice is also contradicted";
        } else {
            result.failure = "some non-gold choice is not contradicted";
        }
    }
    return result;
}

}  // namespace afbench
