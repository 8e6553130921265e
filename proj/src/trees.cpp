#include "afbench/trees.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <unordered_set>

#include "afbench/errors.hpp"
#include "afbench/strings.hpp"

namespace afbench {

json ReasoningTree::to_json() const {
    json edges_j = json::array();
    for (const TreeEdge& e : edges) {
        edges_j.push_back({{"skill", e.skill}, {"start", e.start}, {"end", e.end}});
    }
    return json{{"v", 1},           {"id", id},         {"T", size()},
                {"num_vars", num_vars}, {"canonical", canonical_key}, {"edges", edges_j}};
}

ReasoningTree ReasoningTree::from_json(const json& j) {
    ReasoningTree t;
    t.num_vars = require_field(j, "num_vars", "tree record").get<int>();
    for (const json& e : require_field(j, "edges", "tree record")) {
        t.edges.push_back({e.at("skill").get<std::string>(), e.at("start").get<int>(),
                           e.at("end").get<int>()});
    }
    t.canonical_key = j.value("canonical", "");
    t.id = j.value("id", "");
    if (t.canonical_key.empty() || t.id.empty()) finalize_tree(t);
    return t;
}

namespace {

std::vector<std::vector<std::pair<int, int>>> adjacency(const ReasoningTree& tree) {
    std::vector<std::vector<std::pair<int, int>>> adj(tree.num_vars);  // (edge id, other var)
    for (int i = 0; i < tree.size(); ++i) {
        const TreeEdge& e = tree.edges[i];
        adj[e.start].push_back({i, e.end});
        adj[e.end].push_back({i, e.start});
    }
    return adj;
}

}  // namespace

std::string canonical_key_for(const ReasoningTree& tree) {
    if (tree.num_vars == 0) return "()";
    auto adj = adjacency(tree);

    std::function<std::string(int, int)> rooted = [&](int u, int arrival_edge) {
        std::vector<std::string> parts;
        for (auto [eid, w] : adj[u]) {
            if (eid == arrival_edge) continue;
            const TreeEdge& e = tree.edges[eid];
            std::string label = e.skill;
            label += e.start == u ? '>' : '<';
            parts.push_back(label + rooted(w, eid));
        }
        std::sort(parts.begin(), parts.end());
        std::string out = "(";
        for (const std::string& p : parts) out += p;
        out += ")";
        return out;
    };

    std::string best;
    for (int r = 0; r < tree.num_vars; ++r) {
        std::string key = rooted(r, -1);
        if (best.empty() || key < best) best = std::move(key);
    }
    return best;
}

void finalize_tree(ReasoningTree& tree) {
    tree.canonical_key = canonical_key_for(tree);
    tree.id = "t" + std::to_string(tree.size()) + "-" + hex64(fnv1a64(tree.canonical_key));
}

bool tree_is_valid(const ReasoningTree& tree) {
    if (tree.num_vars <= 0) return false;
    if (static_cast<int>(tree.edges.size()) != tree.num_vars - 1) return false;
    for (const TreeEdge& e : tree.edges) {
        if (e.start < 0 || e.start >= tree.num_vars || e.end < 0 || e.end >= tree.num_vars) return false;
        if (e.start == e.end) return false;
    }
    // |E| = |V| - 1 plus connectivity implies acyclicity.
    auto adj = adjacency(tree);
    std::vector<bool> seen(tree.num_vars, false);
    std::vector<int> stack{0};
    seen[0] = true;
    int visited = 1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (auto [eid, w] : adj[u]) {
            (void)eid;
            if (!seen[w]) {
                seen[w] = true;
                ++visited;
                stack.push_back(w);
            }
        }
    }
    return visited == tree.num_vars;
}

std::vector<ReasoningTree> enumerate_tree_shapes(const SkillTable& skills, int size) {
    if (size < 1) throw StructuralError("enumerate_tree_shapes: size must be >= 1");

    std::vector<ReasoningTree> level;
    std::unordered_set<std::string> seen;
    for (const Skill& s : skills.all()) {
        ReasoningTree t;
        t.num_vars = 2;
        t.edges.push_back({s.name, 0, 1});
        t.canonical_key = canonical_key_for(t);
        if (seen.insert(t.canonical_key).second) level.push_back(std::move(t));
    }

    for (int depth = 2; depth <= size; ++depth) {
        std::vector<ReasoningTree> next;
        std::unordered_set<std::string> next_seen;
        for (const ReasoningTree& base : level) {
            for (int u = 0; u < base.num_vars; ++u) {
                for (const Skill& s : skills.all()) {
                    for (int dir = 0; dir < 2; ++dir) {
                        ReasoningTree t = base;
                        int w = t.num_vars++;
                        t.edges.push_back(dir == 0 ? TreeEdge{s.name, u, w} : TreeEdge{s.name, w, u});
                        t.canonical_key = canonical_key_for(t);
                        if (next_seen.insert(t.canonical_key).second) next.push_back(std::move(t));
                    }
                }
            }
        }
        level = std::move(next);
    }

    std::sort(level.begin(), level.end(), [](const ReasoningTree& a, const ReasoningTree& b) {
        return a.canonical_key < b.canonical_key;
    });
    for (ReasoningTree& t : level) finalize_tree(t);
    return level;
}

std::vector<ReasoningTree> enumerate_trees(const SkillTable& skills, const ReductionTable& rules,
                                           int size, const std::string& anchor_skill) {
    if (size < 1) throw StructuralError("enumerate_trees: size must be >= 1");
    if (!skills.has(anchor_skill)) throw StructuralError("enumerate_trees: unknown anchor skill '" +
                                                         anchor_skill + "'");
    std::vector<ReasoningTree> out;
    for (ReasoningTree& t : enumerate_tree_shapes(skills, size)) {
        bool anchored = false;
        for (int e = 0; e < t.size() && !anchored; ++e) {
            if (t.edges[e].skill != anchor_skill) continue;
            // A valid anchored path must exist from some pairing-variable choice.
            for (int pv : {t.edges[e].start, t.edges[e].end}) {
                if (!find_reasoning_paths(t, e, pv, rules).empty()) {
                    anchored = true;
                    break;
                }
            }
        }
        if (anchored) out.push_back(std::move(t));
    }
    return out;
}

json ReasoningPath::to_json() const {
    return json{{"anchor_edge", anchor_edge},
                {"edge_ids", edge_ids},
                {"pairing_var", pairing_var},
                {"answer_var", answer_var},
                {"n", n},
                {"d", d},
                {"reduced",
                 {{"skill", reduced.skill}, {"start_var", reduced.start_var}, {"end_var", reduced.end_var}}}};
}

ReasoningPath ReasoningPath::from_json(const json& j) {
    ReasoningPath p;
    p.anchor_edge = j.at("anchor_edge").get<int>();
    p.edge_ids = j.at("edge_ids").get<std::vector<int>>();
    p.pairing_var = j.at("pairing_var").get<int>();
    p.answer_var = j.at("answer_var").get<int>();
    p.n = j.at("n").get<int>();
    p.d = j.at("d").get<int>();
    const json& r = j.at("reduced");
    p.reduced = {r.at("skill").get<std::string>(), r.at("start_var").get<int>(),
                 r.at("end_var").get<int>()};
    return p;
}

VirtualTemplate edge_template(const TreeEdge& e) {
    return VirtualTemplate{e.skill, e.start, e.end};
}

std::vector<ReasoningPath> find_reasoning_paths(const ReasoningTree& tree, int anchor_edge,
                                                int pairing_var, const ReductionTable& rules) {
    if (anchor_edge < 0 || anchor_edge >= tree.size()) {
        throw StructuralError("find_reasoning_paths: anchor edge out of range");
    }
    const TreeEdge& anchor = tree.edges[anchor_edge];
    if (pairing_var != anchor.start && pairing_var != anchor.end) {
        throw StructuralError("find_reasoning_paths: pairing_var is not an anchor endpoint");
    }
    int T = tree.size();
    auto adj = adjacency(tree);

    std::vector<ReasoningPath> out;
    auto emit = [&](const std::vector<int>& edge_ids, int answer, const VirtualTemplate& reduced) {
        ReasoningPath p;
        p.anchor_edge = anchor_edge;
        p.edge_ids = edge_ids;
        p.pairing_var = pairing_var;
        p.answer_var = answer;
        p.n = static_cast<int>(edge_ids.size());
        p.d = T - p.n;
        p.reduced = reduced;
        out.push_back(std::move(p));
    };

    VirtualTemplate acc0 = edge_template(anchor);
    int first_away = anchor.start == pairing_var ? anchor.end : anchor.start;
    std::vector<int> edge_ids{anchor_edge};
    emit(edge_ids, first_away, acc0);

    // Walk outward away from the pairing variable; in a tree this never
    // revisits a vertex, and a failing fold prefix can never recover.
    std::function<void(int, int, const VirtualTemplate&)> extend =
        [&](int frontier, int arrival_edge, const VirtualTemplate& acc) {
            std::vector<std::pair<int, int>> nexts = adj[frontier];
            std::sort(nexts.begin(), nexts.end());
            for (auto [eid, w] : nexts) {
                if (eid == arrival_edge) continue;
                auto folded = reduce_pair(acc, edge_template(tree.edges[eid]), rules);
                if (!folded) continue;
                edge_ids.push_back(eid);
                emit(edge_ids, w, *folded);
                extend(w, eid, *folded);
                edge_ids.pop_back();
            }
        };
    extend(first_away, anchor_edge, acc0);
    return out;
}

json PathPoolEntry::to_json() const {
    return json{{"v", 1},
                {"pairing_id", pairing_id},
                {"qa_id", qa_id},
                {"tree_id", tree_id},
                {"path", path.to_json()}};
}

PathPoolEntry PathPoolEntry::from_json(const json& j) {
    PathPoolEntry e;
    e.pairing_id = j.at("pairing_id").get<std::string>();
    e.qa_id = j.at("qa_id").get<std::string>();
    e.tree_id = j.at("tree_id").get<std::string>();
    e.path = ReasoningPath::from_json(j.at("path"));
    return e;
}

std::vector<PathPoolEntry> subsample_by_shape(const std::vector<PathPoolEntry>& pool, size_t per_shape,
                                              Rng& rng) {
    if (per_shape == 0) throw StructuralError("subsample_by_shape: per_shape must be >= 1");
    std::map<std::pair<int, int>, std::vector<size_t>> by_shape;
    for (size_t i = 0; i < pool.size(); ++i) {
        by_shape[{pool[i].path.n, pool[i].path.d}].push_back(i);
    }
    std::vector<size_t> picked;
    for (auto& [shape, indices] : by_shape) {
        (void)shape;
        if (indices.size() <= per_shape) {
            picked.insert(picked.end(), indices.begin(), indices.end());
            continue;
        }
        // Partial Fisher-Yates: uniform sample without replacement.
        for (size_t i = 0; i < per_shape; ++i) {
            size_t j = i + static_cast<size_t>(rng.uniform(indices.size() - i));
            std::swap(indices[i], indices[j]);
        }
        picked.insert(picked.end(), indices.begin(), indices.begin() + static_cast<long>(per_shape));
    }
    std::sort(picked.begin(), picked.end());
    std::vector<PathPoolEntry> out;
    out.reserve(picked.size());
    for (size_t i : picked) out.push_back(pool[i]);
    return out;
}

}  // namespace afbench
