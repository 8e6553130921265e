#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "afbench/kb_store.hpp"
#include "afbench/pairing.hpp"
#include "afbench/rng.hpp"
#include "afbench/skills.hpp"
#include "afbench/trees.hpp"

namespace afbench {

// One anti-factual constraint on a candidate variable: the adjacent assigned
// term acts as the seed of the query.
struct ConstraintEdge {
    int edge_id = -1;
    std::string relation;
    std::string seed_term;
    Slot seed_slot = Slot::Start;  // slot the assigned neighbor occupies
};

// Scores candidates before beam pruning. Scores must be finite; the default
// uniform-random metric ignores content entirely so that beam_k = 1 matches
// plain uniform sampling.
class RelevanceMetric {
public:
    virtual ~RelevanceMetric() = default;
    virtual std::string name() const = 0;
    virtual double score(const std::string& candidate, std::span<const ConstraintEdge> constraints,
                         const AssertionStore& store, Rng& rng) const = 0;
};

class UniformRandomMetric final : public RelevanceMetric {
public:
    std::string name() const override { return "uniform_random"; }
    double score(const std::string&, std::span<const ConstraintEdge>, const AssertionStore&,
                 Rng& rng) const override;
};

// Prefers candidates backed by heavier KB assertions.
class KbWeightMetric final : public RelevanceMetric {
public:
    std::string name() const override { return "kb_weight"; }
    double score(const std::string& candidate, std::span<const ConstraintEdge> constraints,
                 const AssertionStore& store, Rng& rng) const override;
};

std::unique_ptr<RelevanceMetric> make_metric(const std::string& name);

enum class Provenance { Seed, Retrieved };

struct GroundingAssignment {
    std::map<int, std::string> terms;  // variable -> term
    std::map<int, Provenance> provenance;
    std::string rng_key;
    std::uint64_t rng_draws = 0;

    json to_json() const;
    static GroundingAssignment from_json(const json& j);
};

inline constexpr const char* kEmptyIntersection = "EMPTY_INTERSECTION";
inline constexpr const char* kExhaustedBacktrack = "EXHAUSTED_BACKTRACK";
inline constexpr const char* kSeedCollision = "SEED_COLLISION";

struct GroundingFailure {
    std::string code;
    int variable = -1;
    std::vector<int> constraint_edges;
    std::string detail;
};

struct GroundingOutcome {
    std::optional<GroundingAssignment> assignment;
    std::optional<GroundingFailure> failure;
    bool ok() const { return assignment.has_value(); }
};

// Grounds every non-seed variable of the tree anti-factually. The pairing
// variable takes pairing_term and the path's answer variable takes
// answer_term; search grows outward from those seeds, intersecting per-edge
// anti-factual candidate sets, pruning to the metric's top beam_k, sampling
// one, and backtracking through unsatisfiable choices. Terms in
// excluded_terms (plus everything already assigned) are never reused.
GroundingOutcome ground_tree(const ReasoningTree& tree, const ReasoningPath& path,
                             const std::string& pairing_term, const std::string& answer_term,
                             const AssertionStore& store, const SkillTable& skills, int beam_k,
                             const RelevanceMetric& metric, Rng& rng,
                             const std::set<std::string>& excluded_terms = {});

// One selected (pairing template, tree, path) job.
struct GroundJob {
    std::string pairing_id;
    std::string qa_id;
    std::string tree_id;
    ReasoningPath path;
};

struct GroundedTriple {
    std::string pairing_id;
    std::string qa_id;
    std::string tree_id;
    ReasoningPath path;
    std::vector<GroundingAssignment> per_choice;  // one per answer choice

    json to_json() const;
    static GroundedTriple from_json(const json& j);
};

struct GroundFailureRecord {
    std::string pairing_id;
    std::string tree_id;
    int choice_index = -1;
    GroundingFailure failure;

    json to_json() const;
};

struct GroundCorpus {
    std::vector<GroundedTriple> triples;
    std::vector<GroundFailureRecord> failures;
};

// Grounds each job once per answer choice (the reduplicated trees). Retrieved
// terms stay distinct across the whole item: choices, the pairing term and
// every copy's retrievals share one exclusion set, which is what guarantees
// the exactly-one-implied property downstream. A triple is dropped whole if
// any of its choices fails; failures are reported, never thrown. Jobs run in
// parallel across triples.
GroundCorpus ground_all(std::span<const GroundJob> jobs,
                        const std::map<std::string, ReasoningTree>& trees_by_id,
                        const std::map<std::string, PairingTemplate>& templates_by_id,
                        const std::map<std::string, QAInstance>& qa_by_id, const AssertionStore& store,
                        const SkillTable& skills, int beam_k, const RelevanceMetric& metric,
                        std::uint64_t seed, int jobs_parallel = 1);

}  // namespace afbench
