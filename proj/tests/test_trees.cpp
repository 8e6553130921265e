#include "doctest.h"

#include <set>

#include "afbench/errors.hpp"
#include "afbench/rng.hpp"
#include "afbench/trees.hpp"
#include "test_support.hpp"

using namespace afbench;
namespace tt = afbench::testing;

TEST_SUITE_BEGIN("trees");

namespace {

json single_skill_json() {
    return json::parse(R"({"version":1,"skills":[
        {"name":"spatial","kb_relation":"AtLocation","surface_positive":"{X} does appear near {Y}",
         "surface_negative":"{X} does not appear near {Y}"}]})");
}

ReasoningTree permuted_copy(const ReasoningTree& tree, const std::vector<int>& perm) {
    ReasoningTree out;
    out.num_vars = tree.num_vars;
    for (const TreeEdge& e : tree.edges) {
        out.edges.push_back({e.skill, perm[e.start], perm[e.end]});
    }
    return out;
}

}  // namespace

TEST_CASE("single-edge, single-skill enumeration yields exactly one tree") {
    SkillTable skills = SkillTable::load(single_skill_json());
    json rules_doc = json::parse(R"({"version":1,"entries":[]})");
    ReductionTable rules = ReductionTable::load(rules_doc, skills);
    auto trees = enumerate_trees(skills, rules, 1, "spatial");
    REQUIRE(trees.size() == 1);
    CHECK(trees[0].size() == 1);
    CHECK(trees[0].num_vars == 2);
}

TEST_CASE("enumeration rejects bad arguments") {
    SkillTable skills = SkillTable::load(single_skill_json());
    ReductionTable rules = ReductionTable::load(json::parse(R"({"version":1,"entries":[]})"), skills);
    CHECK_THROWS_AS(enumerate_trees(skills, rules, 0, "spatial"), StructuralError);
    CHECK_THROWS_AS(enumerate_trees(skills, rules, 1, "ghost"), StructuralError);
}

TEST_CASE("enumeration equals brute force on fixtures (T <= 3)") {
    struct Fixture {
        std::string name;
        SkillTable skills;
    };
    std::vector<Fixture> fixtures;
    fixtures.push_back({"single", SkillTable::load(single_skill_json())});
    fixtures.push_back({"two_skill", SkillTable::load(tt::fixture_skills_json())});
    fixtures.push_back({"full_default", tt::default_skills()});

    for (const Fixture& fixture : fixtures) {
        CAPTURE(fixture.name);
        for (int size = 1; size <= 3; ++size) {
            auto fast = enumerate_tree_shapes(fixture.skills, size);
            auto oracle = tt::brute_force_tree_shapes(fixture.skills, size);
            REQUIRE(fast.size() == oracle.size());
            std::set<std::string> fast_keys, oracle_keys;
            for (const ReasoningTree& t : fast) fast_keys.insert(t.canonical_key);
            for (const ReasoningTree& t : oracle) oracle_keys.insert(t.canonical_key);
            CHECK(fast_keys == oracle_keys);
        }
    }
}

TEST_CASE("anchored enumeration equals brute force with the anchor filter") {
    SkillTable skills = SkillTable::load(tt::fixture_skills_json());
    ReductionTable rules = ReductionTable::load(tt::fixture_reductions_json(), skills);
    for (int size = 1; size <= 3; ++size) {
        auto fast = enumerate_trees(skills, rules, size, "near");
        auto oracle = tt::brute_force_tree_shapes(skills, size);
        std::set<std::string> oracle_keys;
        for (const ReasoningTree& t : oracle) {
            bool has_anchor = std::any_of(t.edges.begin(), t.edges.end(),
                                          [](const TreeEdge& e) { return e.skill == "near"; });
            if (has_anchor) oracle_keys.insert(t.canonical_key);
        }
        std::set<std::string> fast_keys;
        for (const ReasoningTree& t : fast) fast_keys.insert(t.canonical_key);
        CHECK(fast_keys == oracle_keys);
    }
}

TEST_CASE("every enumerated tree is connected and acyclic") {
    SkillTable skills = tt::default_skills();
    size_t checked = 0;
    for (int size = 1; size <= 4; ++size) {
        for (const ReasoningTree& t : enumerate_tree_shapes(skills, size)) {
            REQUIRE(tree_is_valid(t));
            ++checked;
        }
    }
    // Sizes 1-4 of the default table produce well over 10,000 shapes.
    CHECK(checked >= 10000);
}

TEST_CASE("canonical key is invariant under variable permutation") {
    SkillTable skills = tt::default_skills();
    Rng rng(42);
    auto shapes = enumerate_tree_shapes(skills, 3);
    for (int trial = 0; trial < 400; ++trial) {
        const ReasoningTree& tree = shapes[rng.uniform(shapes.size())];
        std::vector<int> perm(tree.num_vars);
        for (int i = 0; i < tree.num_vars; ++i) perm[i] = i;
        rng.shuffle(perm);
        ReasoningTree shuffled = permuted_copy(tree, perm);
        CHECK(canonical_key_for(shuffled) == tree.canonical_key);
    }
}

TEST_CASE("find_reasoning_paths") {
    SkillTable skills = tt::default_skills();
    ReductionTable rules = tt::default_reductions(skills);

    SUBCASE("single-edge tree yields the n=1 path") {
        ReasoningTree tree;
        tree.num_vars = 2;
        tree.edges.push_back({"spatial", 0, 1});
        finalize_tree(tree);
        auto paths = find_reasoning_paths(tree, 0, 1, rules);
        REQUIRE(paths.size() == 1);
        CHECK(paths[0].n == 1);
        CHECK(paths[0].d == 0);
        CHECK(paths[0].pairing_var == 1);
        CHECK(paths[0].answer_var == 0);
    }

    SUBCASE("two-edge chain: interior part_of then spatial anchor") {
        // answer -part_of-> v1 -spatial-> planet, anchored at the spatial edge.
        ReasoningTree tree;
        tree.num_vars = 3;
        tree.edges.push_back({"spatial", 1, 2});   // v1 near planet
        tree.edges.push_back({"part_of", 0, 1});   // answer is part of v1
        finalize_tree(tree);
        auto paths = find_reasoning_paths(tree, 0, 2, rules);
        REQUIRE(paths.size() == 2);  // n=1 and n=2
        CHECK(paths[0].n == 1);
        CHECK(paths[1].n == 2);
        CHECK(paths[1].d == 0);
        CHECK(paths[1].answer_var == 0);
        CHECK(paths[1].reduced.skill == "spatial");
        CHECK(paths[1].reduced.start_var == 0);
        CHECK(paths[1].reduced.end_var == 2);
    }

    SUBCASE("anchor must belong to the tree and pairing var to the anchor") {
        ReasoningTree tree;
        tree.num_vars = 2;
        tree.edges.push_back({"spatial", 0, 1});
        finalize_tree(tree);
        CHECK_THROWS_AS(find_reasoning_paths(tree, 5, 0, rules), StructuralError);
        CHECK_THROWS_AS(find_reasoning_paths(tree, 0, 9, rules), StructuralError);
    }
}

TEST_CASE("path enumeration equals brute force on random 5-edge trees") {
    SkillTable skills = tt::default_skills();
    ReductionTable rules = tt::default_reductions(skills);
    std::vector<std::string> names;
    for (const Skill& s : skills.all()) names.push_back(s.name);

    Rng rng(7);
    for (int trial = 0; trial < 60; ++trial) {
        // Random tree built by random attachment.
        ReasoningTree tree;
        tree.num_vars = 6;
        for (int v = 1; v < 6; ++v) {
            int u = static_cast<int>(rng.uniform(v));
            bool flip = rng.uniform(2) == 1;
            tree.edges.push_back({names[rng.uniform(names.size())], flip ? v : u, flip ? u : v});
        }
        finalize_tree(tree);
        int anchor = static_cast<int>(rng.uniform(tree.edges.size()));
        int pairing_var = rng.uniform(2) == 0 ? tree.edges[anchor].start : tree.edges[anchor].end;

        auto fast = find_reasoning_paths(tree, anchor, pairing_var, rules);
        auto oracle = tt::brute_force_paths(tree, anchor, pairing_var, rules);

        std::set<std::pair<std::vector<int>, int>> fast_set, oracle_set;
        for (const ReasoningPath& p : fast) fast_set.insert({p.edge_ids, p.answer_var});
        for (const tt::OraclePath& p : oracle) oracle_set.insert({p.edge_ids, p.answer_var});
        CHECK(fast_set == oracle_set);

        for (const ReasoningPath& p : fast) {
            CHECK(p.n + p.d == tree.size());
            CHECK(p.n == static_cast<int>(p.edge_ids.size()));
            CHECK(p.pairing_var == pairing_var);
        }
    }
}

TEST_CASE("hop coverage grows with tree size on the default configuration") {
    SkillTable skills = tt::default_skills();
    ReductionTable rules = tt::default_reductions(skills);
    std::set<int> previous_hops;
    for (int size = 1; size <= 3; ++size) {
        std::set<int> hops;
        for (const ReasoningTree& tree : enumerate_trees(skills, rules, size, "spatial")) {
            for (int e = 0; e < tree.size(); ++e) {
                if (tree.edges[e].skill != "spatial") continue;
                for (int pv : {tree.edges[e].start, tree.edges[e].end}) {
                    for (const ReasoningPath& p : find_reasoning_paths(tree, e, pv, rules)) {
                        hops.insert(p.n);
                    }
                }
            }
        }
        CHECK(std::includes(hops.begin(), hops.end(), previous_hops.begin(), previous_hops.end()));
        CHECK(hops.count(size) == 1);  // the full-length chain is reachable
        previous_hops = hops;
    }
}

TEST_CASE("subsample_by_shape") {
    auto make_entry = [](int n, int d, const std::string& tree_id) {
        PathPoolEntry e;
        e.pairing_id = "p0";
        e.qa_id = "q0";
        e.tree_id = tree_id;
        e.path.n = n;
        e.path.d = d;
        return e;
    };

    SUBCASE("one selection per present shape") {
        std::vector<PathPoolEntry> pool{make_entry(1, 0, "t1"), make_entry(2, 0, "t2"),
                                        make_entry(2, 1, "t3"), make_entry(2, 1, "t4")};
        Rng rng = Rng::substream(5, "subsample/p0");
        auto picked = subsample_by_shape(pool, 1, rng);
        REQUIRE(picked.size() == 3);
        std::set<std::pair<int, int>> shapes;
        for (const auto& e : picked) shapes.insert({e.path.n, e.path.d});
        CHECK(shapes == std::set<std::pair<int, int>>{{1, 0}, {2, 0}, {2, 1}});
    }

    SUBCASE("same seed twice picks identically") {
        std::vector<PathPoolEntry> pool;
        for (int i = 0; i < 50; ++i) pool.push_back(make_entry(1 + i % 3, i % 2, "t" + std::to_string(i)));
        Rng rng_a = Rng::substream(99, "subsample/p0");
        Rng rng_b = Rng::substream(99, "subsample/p0");
        auto a = subsample_by_shape(pool, 2, rng_a);
        auto b = subsample_by_shape(pool, 2, rng_b);
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].tree_id == b[i].tree_id);
    }

    SUBCASE("per-shape cap is respected with full coverage") {
        std::vector<PathPoolEntry> pool;
        for (int i = 0; i < 30; ++i) pool.push_back(make_entry(2, 1, "t" + std::to_string(i)));
        pool.push_back(make_entry(1, 0, "solo"));
        Rng rng = Rng::substream(7, "subsample/p0");
        auto picked = subsample_by_shape(pool, 4, rng);
        size_t big = 0, small = 0;
        for (const auto& e : picked) (e.path.n == 2 ? big : small) += 1;
        CHECK(big == 4);
        CHECK(small == 1);
    }
}

TEST_CASE("tree records round-trip through json") {
    SkillTable skills = tt::default_skills();
    auto shapes = enumerate_tree_shapes(skills, 2);
    for (const ReasoningTree& tree : shapes) {
        ReasoningTree back = ReasoningTree::from_json(tree.to_json());
        CHECK(back.id == tree.id);
        CHECK(back.canonical_key == tree.canonical_key);
        CHECK(back.num_vars == tree.num_vars);
        REQUIRE(back.edges.size() == tree.edges.size());
    }
}

TEST_SUITE_END();
