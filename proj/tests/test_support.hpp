#pragma once

// Shared fixtures and brute-force oracles. Oracles deliberately avoid the
// library's enumeration/search code paths: they regenerate the full space by
// construction and only share the type definitions.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "afbench/assemble.hpp"
#include "afbench/grounding.hpp"
#include "afbench/kb_store.hpp"
#include "afbench/pairing.hpp"
#include "afbench/pipeline.hpp"
#include "afbench/skills.hpp"
#include "afbench/strings.hpp"
#include "afbench/trees.hpp"

namespace afbench::testing {

inline std::filesystem::path source_dir() {
    return std::filesystem::path(AFBENCH_SOURCE_DIR);
}

inline SkillTable default_skills() {
    return SkillTable::load_file(source_dir() / "configs" / "skills.json");
}

inline ReductionTable default_reductions(const SkillTable& skills) {
    return ReductionTable::load_file(source_dir() / "configs" / "reductions.json", skills);
}

inline AssertionStore store_from_tsv(const std::string& text, std::vector<std::string> relations = {},
                                     IngestReport* report = nullptr) {
    std::istringstream in(text);
    IngestOptions options;
    options.relations = std::move(relations);
    return AssertionStore::ingest(in, DumpFormat::Tsv, options, report);
}

inline std::filesystem::path fresh_tmp_dir(const std::string& name) {
    std::filesystem::path dir = std::filesystem::temp_directory_path() / ("afbench_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Small two-skill world used across tree/grounding tests.
inline json fixture_skills_json() {
    return json::parse(R"({
      "version": 1,
      "skills": [
        {"name": "near", "kb_relation": "Near", "surface_positive": "{X} does sit near {Y}",
         "surface_negative": "{X} does not sit near {Y}", "start_slot": "X"},
        {"name": "inside", "kb_relation": "Inside", "surface_positive": "{X} is found inside {Y}",
         "surface_negative": "{X} is not found inside {Y}", "start_slot": "X"}
      ]
    })");
}

// near(x,y) & near(y,z) => near(x,z); near(y,x) & inside(z,y) => near(z,x).
inline json fixture_reductions_json() {
    return json::parse(R"({
      "version": 1,
      "entries": [
        {"row": "near", "col": "near", "case": "right", "result": "near"},
        {"row": "near", "col": "inside", "case": "left", "result": "near"}
      ]
    })");
}

// Deterministic synthetic KB: dense random pairs over one shared term
// universe so that multi-constraint intersections stay satisfiable while
// plenty of pairs remain absent (the anti-factual pool).
inline std::string synthetic_kb_tsv(const std::vector<std::string>& relations, int num_terms,
                                    int per_relation, std::uint64_t seed) {
    std::string out;
    for (size_t r = 0; r < relations.size(); ++r) {
        Rng rng = Rng::substream(seed, "kb/" + relations[r]);
        std::set<std::pair<int, int>> seen;
        while (static_cast<int>(seen.size()) < per_relation) {
            int a = static_cast<int>(rng.uniform(num_terms));
            int b = static_cast<int>(rng.uniform(num_terms));
            if (a == b || !seen.insert({a, b}).second) continue;
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%s\titem%02d\titem%02d\t%.1f\n", relations[r].c_str(), a,
                          b, 1.0 + static_cast<double>(rng.uniform(40)) / 10.0);
            out += buf;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tree-enumeration oracle: every vertex-labeled tree via Prüfer decoding,
// every skill and orientation assignment, deduplicated by an independent
// canonical form (minimum sorted edge encoding over all vertex permutations).
// ---------------------------------------------------------------------------

inline std::vector<std::vector<std::pair<int, int>>> all_vertex_labeled_trees(int num_vars) {
    std::vector<std::vector<std::pair<int, int>>> out;
    if (num_vars == 1) return out;
    if (num_vars == 2) {
        out.push_back({{0, 1}});
        return out;
    }
    int seq_len = num_vars - 2;
    std::vector<int> seq(seq_len, 0);
    while (true) {
        // Prüfer decode.
        std::vector<int> degree(num_vars, 1);
        for (int v : seq) ++degree[v];
        std::set<int> leaves;
        for (int v = 0; v < num_vars; ++v) {
            if (degree[v] == 1) leaves.insert(v);
        }
        std::vector<std::pair<int, int>> edges;
        std::vector<int> work = seq;
        for (int v : work) {
            int leaf = *leaves.begin();
            leaves.erase(leaves.begin());
            edges.push_back({leaf, v});
            if (--degree[v] == 1) leaves.insert(v);
        }
        int a = *leaves.begin();
        int b = *std::next(leaves.begin());
        edges.push_back({a, b});
        out.push_back(std::move(edges));

        int i = seq_len - 1;
        while (i >= 0 && seq[i] == num_vars - 1) seq[i--] = 0;
        if (i < 0) break;
        ++seq[i];
    }
    return out;
}

// Canonical form independent of canonical_key_for: minimum over all vertex
// permutations of the sorted (skill, start, end) edge list.
inline std::string perm_min_encoding(const ReasoningTree& tree) {
    std::vector<int> perm(tree.num_vars);
    for (int i = 0; i < tree.num_vars; ++i) perm[i] = i;
    std::string best;
    do {
        std::vector<std::string> encoded;
        for (const TreeEdge& e : tree.edges) {
            encoded.push_back(e.skill + "," + std::to_string(perm[e.start]) + "," +
                              std::to_string(perm[e.end]));
        }
        std::sort(encoded.begin(), encoded.end());
        std::string key = afbench::join(encoded, ";");
        if (best.empty() || key < best) best = std::move(key);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// All distinct trees of the given size, as perm-min representative trees.
inline std::vector<ReasoningTree> brute_force_tree_shapes(const SkillTable& skills, int size) {
    std::vector<std::string> names;
    for (const Skill& s : skills.all()) names.push_back(s.name);
    int num_vars = size + 1;
    std::map<std::string, ReasoningTree> by_key;
    for (const auto& shape : all_vertex_labeled_trees(num_vars)) {
        size_t combos = 1;
        for (int e = 0; e < size; ++e) combos *= names.size() * 2;
        for (size_t mask = 0; mask < combos; ++mask) {
            size_t rest = mask;
            ReasoningTree tree;
            tree.num_vars = num_vars;
            for (const auto& [a, b] : shape) {
                size_t pick = rest % (names.size() * 2);
                rest /= names.size() * 2;
                const std::string& skill = names[pick / 2];
                bool flip = pick % 2 == 1;
                tree.edges.push_back({skill, flip ? b : a, flip ? a : b});
            }
            std::string key = perm_min_encoding(tree);
            if (!by_key.count(key)) by_key.emplace(std::move(key), std::move(tree));
        }
    }
    std::vector<ReasoningTree> out;
    for (auto& [key, tree] : by_key) {
        (void)key;
        finalize_tree(tree);
        out.push_back(std::move(tree));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Path oracle: all sequences of distinct edges that start at the anchor and
// chain outward away from the pairing variable, filtered by reduce_path.
// ---------------------------------------------------------------------------

struct OraclePath {
    std::vector<int> edge_ids;
    int answer_var = -1;
};

inline std::vector<OraclePath> brute_force_paths(const ReasoningTree& tree, int anchor, int pairing_var,
                                                 const ReductionTable& rules) {
    std::vector<OraclePath> result;
    const TreeEdge& a = tree.edges[anchor];
    int start_frontier = a.start == pairing_var ? a.end : a.start;

    std::vector<std::vector<int>> sequences;
    std::vector<int> current{anchor};
    std::function<void(int)> grow = [&](int frontier) {
        sequences.push_back(current);
        for (int e = 0; e < tree.size(); ++e) {
            if (std::find(current.begin(), current.end(), e) != current.end()) continue;
            const TreeEdge& edge = tree.edges[e];
            int next_frontier;
            if (edge.start == frontier) {
                next_frontier = edge.end;
            } else if (edge.end == frontier) {
                next_frontier = edge.start;
            } else {
                continue;
            }
            if (next_frontier == pairing_var) continue;
            current.push_back(e);
            grow(next_frontier);
            current.pop_back();
        }
    };
    grow(start_frontier);

    for (const std::vector<int>& seq : sequences) {
        std::vector<VirtualTemplate> templates;
        for (int e : seq) templates.push_back(edge_template(tree.edges[e]));
        if (!reduce_path(templates, rules)) continue;
        int frontier = start_frontier;
        for (size_t i = 1; i < seq.size(); ++i) {
            const TreeEdge& edge = tree.edges[seq[i]];
            frontier = edge.start == frontier ? edge.end : edge.start;
        }
        result.push_back({seq, frontier});
    }
    return result;
}

// ---------------------------------------------------------------------------
// Grounding oracle: exhaustive assignment enumeration under the documented
// ordering semantics (earlier-assigned variable seeds the query).
// ---------------------------------------------------------------------------

// The deterministic assignment order used by the search (most assigned
// neighbors first, variable id tie-break), which is term-independent.
inline std::vector<int> assignment_order(const ReasoningTree& tree, int pairing_var, int answer_var) {
    std::set<int> assigned{pairing_var, answer_var};
    std::vector<int> order;
    while (assigned.size() < static_cast<size_t>(tree.num_vars)) {
        int best = -1;
        size_t best_count = 0;
        for (int v = 0; v < tree.num_vars; ++v) {
            if (assigned.count(v)) continue;
            size_t count = 0;
            for (const TreeEdge& e : tree.edges) {
                if ((e.start == v && assigned.count(e.end)) || (e.end == v && assigned.count(e.start))) {
                    ++count;
                }
            }
            if (best == -1 || count > best_count) {
                best = v;
                best_count = count;
            }
        }
        order.push_back(best);
        assigned.insert(best);
    }
    return order;
}

inline std::vector<std::map<int, std::string>> brute_force_groundings(
    const ReasoningTree& tree, const ReasoningPath& path, const std::string& pairing_term,
    const std::string& answer_term, const AssertionStore& store, const SkillTable& skills,
    const std::set<std::string>& excluded) {
    std::vector<std::map<int, std::string>> result;
    if (pairing_term == answer_term) return result;

    std::set<std::string> universe_set;
    for (const std::string& rel : store.relations()) {
        for (Slot slot : {Slot::Start, Slot::End}) {
            for (const std::string& t : store.term_pool(rel, slot)) universe_set.insert(t);
        }
    }
    std::vector<std::string> universe(universe_set.begin(), universe_set.end());
    std::vector<int> order = assignment_order(tree, path.pairing_var, path.answer_var);

    std::map<int, std::string> assignment{{path.pairing_var, pairing_term},
                                          {path.answer_var, answer_term}};
    std::set<std::string> used{pairing_term, answer_term};
    used.insert(excluded.begin(), excluded.end());

    std::function<void(size_t)> recurse = [&](size_t depth) {
        if (depth == order.size()) {
            result.push_back(assignment);
            return;
        }
        int var = order[depth];
        for (const std::string& term : universe) {
            if (used.count(term)) continue;
            bool ok = true;
            for (const TreeEdge& e : tree.edges) {
                int other;
                Slot other_slot;
                if (e.start == var) {
                    other = e.end;
                    other_slot = Slot::End;
                } else if (e.end == var) {
                    other = e.start;
                    other_slot = Slot::Start;
                } else {
                    continue;
                }
                auto it = assignment.find(other);
                if (it == assignment.end()) continue;
                const std::string& relation = skills.at(e.skill).kb_relation;
                auto candidates = store.anti_factual_candidates(relation, it->second, other_slot);
                if (!std::binary_search(candidates.begin(), candidates.end(), term)) {
                    ok = false;
                    break;
                }
            }
            if (!ok) continue;
            assignment[var] = term;
            used.insert(term);
            recurse(depth + 1);
            assignment.erase(var);
            used.erase(term);
        }
    };
    recurse(0);
    return result;
}

}  // namespace afbench::testing
