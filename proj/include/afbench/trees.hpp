#pragma once

#include <string>
#include <vector>

#include "afbench/jsonl.hpp"
#include "afbench/rng.hpp"
#include "afbench/skills.hpp"

namespace afbench {

// One template instance inside a tree: a skill edge oriented from its KB
// relation start variable to its end variable.
struct TreeEdge {
    std::string skill;
    int start = 0;
    int end = 0;
};

// Connected acyclic reasoning graph; variables are 0..num_vars-1 and
// |edges| == num_vars - 1 always holds. Problem size T is the edge count.
struct ReasoningTree {
    int num_vars = 0;
    std::vector<TreeEdge> edges;
    std::string canonical_key;
    std::string id;

    int size() const { return static_cast<int>(edges.size()); }
    json to_json() const;
    static ReasoningTree from_json(const json& j);
};

// Isomorphism key: rooted AHU encodings labeled with (skill, orientation),
// minimized over all root choices. Variable ids do not appear in the key.
std::string canonical_key_for(const ReasoningTree& tree);

// Fills canonical_key and the derived stable id ("tN-<hash>").
void finalize_tree(ReasoningTree& tree);

bool tree_is_valid(const ReasoningTree& tree);  // connected, acyclic, vars compact

// All canonical-form-distinct trees with exactly `size` edges over the skill
// table, sorted by canonical key. No anchor constraint.
std::vector<ReasoningTree> enumerate_tree_shapes(const SkillTable& skills, int size);

// Shapes containing at least one anchor-skill edge usable as a pairing edge
// (verified via reduce_path on some anchored sequence).
std::vector<ReasoningTree> enumerate_trees(const SkillTable& skills, const ReductionTable& rules,
                                           int size, const std::string& anchor_skill);

// An anchored reasoning path: edge_ids[0] is the pairing edge, subsequent
// edges walk outward away from pairing_var; answer_var is the far endpoint.
// n is the hop count, d = T - n the distractor count.
struct ReasoningPath {
    int anchor_edge = -1;
    std::vector<int> edge_ids;
    int pairing_var = -1;
    int answer_var = -1;
    int n = 0;
    int d = 0;
    VirtualTemplate reduced;

    json to_json() const;
    static ReasoningPath from_json(const json& j);
};

VirtualTemplate edge_template(const TreeEdge& e);

// Every anchored sequence (intermediate lengths included) whose left fold
// under reduce_path succeeds. pairing_var must be an endpoint of the anchor
// edge; paths extend only away from it.
std::vector<ReasoningPath> find_reasoning_paths(const ReasoningTree& tree, int anchor_edge,
                                                int pairing_var, const ReductionTable& rules);

// One pairing's candidate (tree, path) pool entry.
struct PathPoolEntry {
    std::string pairing_id;
    std::string qa_id;
    std::string tree_id;
    ReasoningPath path;

    json to_json() const;
    static PathPoolEntry from_json(const json& j);
};

// Uniformly samples up to per_shape entries for each (n, d) combination
// present in the pool (which must belong to a single pairing). Every present
// shape stays covered; order of the result follows the input pool.
std::vector<PathPoolEntry> subsample_by_shape(const std::vector<PathPoolEntry>& pool, size_t per_shape,
                                              Rng& rng);

}  // namespace afbench
