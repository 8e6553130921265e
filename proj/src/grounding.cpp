#include "afbench/grounding.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "afbench/errors.hpp"
#include "afbench/strings.hpp"

namespace afbench {

double UniformRandomMetric::score(const std::string&, std::span<const ConstraintEdge>,
                                  const AssertionStore&, Rng& rng) const {
    return rng.next_double();
}

double KbWeightMetric::score(const std::string& candidate, std::span<const ConstraintEdge> constraints,
                             const AssertionStore& store, Rng&) const {
    double sum = 0.0;
    for (const ConstraintEdge& c : constraints) {
        Slot candidate_slot = c.seed_slot == Slot::Start ? Slot::End : Slot::Start;
        sum += store.slot_weight(c.relation, candidate_slot, candidate);
    }
    return sum;
}

std::unique_ptr<RelevanceMetric> make_metric(const std::string& name) {
    if (name == "uniform_random") return std::make_unique<UniformRandomMetric>();
    if (name == "kb_weight") return std::make_unique<KbWeightMetric>();
    throw ConfigError("unknown relevance metric '" + name + "'");
}

json GroundingAssignment::to_json() const {
    json terms_j = json::object();
    json prov_j = json::object();
    for (const auto& [var, term] : terms) {
        terms_j[std::to_string(var)] = term;
        prov_j[std::to_string(var)] = provenance.at(var) == Provenance::Seed ? "seed" : "retrieved";
    }
    return json{{"terms", terms_j}, {"provenance", prov_j}, {"rng_key", rng_key}, {"rng_draws", rng_draws}};
}

GroundingAssignment GroundingAssignment::from_json(const json& j) {
    GroundingAssignment a;
    for (const auto& [key, value] : j.at("terms").items()) {
        a.terms[std::stoi(key)] = value.get<std::string>();
    }
    for (const auto& [key, value] : j.at("provenance").items()) {
        a.provenance[std::stoi(key)] =
            value.get<std::string>() == "seed" ? Provenance::Seed : Provenance::Retrieved;
    }
    a.rng_key = j.value("rng_key", "");
    a.rng_draws = j.value("rng_draws", std::uint64_t{0});
    return a;
}

namespace {

struct Searcher {
    const ReasoningTree& tree;
    const AssertionStore& store;
    const SkillTable& skills;
    int beam_k;
    const RelevanceMetric& metric;
    Rng& rng;

    std::map<int, std::string> assigned;
    std::set<std::string> used;
    GroundingFailure last_failure;
    bool backtracked = false;

    std::vector<ConstraintEdge> constraints_for(int var) const {
        std::vector<ConstraintEdge> out;
        for (int e = 0; e < tree.size(); ++e) {
            const TreeEdge& edge = tree.edges[e];
            int other;
            Slot other_slot;
            if (edge.start == var) {
                other = edge.end;
                other_slot = Slot::End;
            } else if (edge.end == var) {
                other = edge.start;
                other_slot = Slot::Start;
            } else {
                continue;
            }
            auto it = assigned.find(other);
            if (it == assigned.end()) continue;
            out.push_back({e, skills.at(edge.skill).kb_relation, it->second, other_slot});
        }
        return out;
    }

    // Most assigned neighbors first, variable id breaking ties.
    int pick_variable() const {
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
        return best;
    }

    std::vector<std::string> candidates_for(int var, const std::vector<ConstraintEdge>& constraints) {
        std::vector<std::vector<std::string>> sets;
        sets.reserve(constraints.size());
        for (const ConstraintEdge& c : constraints) {
            sets.push_back(store.anti_factual_candidates(c.relation, c.seed_term, c.seed_slot));
        }
        std::vector<std::string> pool = intersect_candidates(sets);
        std::vector<std::string> out;
        out.reserve(pool.size());
        for (std::string& t : pool) {
            if (!used.count(t)) out.push_back(std::move(t));
        }
        return out;
    }

    bool solve() {
        if (assigned.size() == static_cast<size_t>(tree.num_vars)) return true;
        int var = pick_variable();
        std::vector<ConstraintEdge> constraints = constraints_for(var);
        std::vector<std::string> pool = candidates_for(var, constraints);
        if (pool.empty()) {
            last_failure.code = kEmptyIntersection;
            last_failure.variable = var;
            last_failure.constraint_edges.clear();
            for (const ConstraintEdge& c : constraints) last_failure.constraint_edges.push_back(c.edge_id);
            last_failure.detail = "no candidate satisfies all adjacent constraints for variable " +
                                  std::to_string(var);
            return false;
        }
        // Rank, keep the top beam_k, then sample the first candidate to try;
        // the rest of the beam remains available to backtracking.
        std::vector<std::pair<double, std::string>> ranked;
        ranked.reserve(pool.size());
        for (const std::string& t : pool) {
            ranked.push_back({metric.score(t, constraints, store, rng), t});
        }
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        size_t beam = std::min<size_t>(static_cast<size_t>(beam_k), ranked.size());
        std::vector<std::string> order;
        order.reserve(beam);
        size_t sampled = static_cast<size_t>(rng.uniform(beam));
        order.push_back(ranked[sampled].second);
        for (size_t i = 0; i < beam; ++i) {
            if (i != sampled) order.push_back(ranked[i].second);
        }
        for (const std::string& term : order) {
            assigned[var] = term;
            used.insert(term);
            if (solve()) return true;
            assigned.erase(var);
            used.erase(term);
            backtracked = true;
        }
        return false;
    }
};

}  // namespace

GroundingOutcome ground_tree(const ReasoningTree& tree, const ReasoningPath& path,
                             const std::string& pairing_term, const std::string& answer_term,
                             const AssertionStore& store, const SkillTable& skills, int beam_k,
                             const RelevanceMetric& metric, Rng& rng,
                             const std::set<std::string>& excluded_terms) {
    if (beam_k < 1) throw StructuralError("ground_tree: beam_k must be >= 1");
    if (pairing_term.empty() || answer_term.empty()) {
        throw StructuralError("ground_tree: empty seed term");
    }
    if (path.pairing_var < 0 || path.pairing_var >= tree.num_vars || path.answer_var < 0 ||
        path.answer_var >= tree.num_vars || path.pairing_var == path.answer_var) {
        throw StructuralError("ground_tree: path seed variables do not fit the tree");
    }

    GroundingOutcome out;
    if (pairing_term == answer_term) {
        out.failure = GroundingFailure{kSeedCollision, path.answer_var, {},
                                       "answer choice equals the pairing term '" + pairing_term + "'"};
        return out;
    }

    std::uint64_t draws_before = rng.draws();
    Searcher searcher{tree, store, skills, beam_k, metric, rng, {}, excluded_terms, {}};
    searcher.assigned[path.pairing_var] = pairing_term;
    searcher.assigned[path.answer_var] = answer_term;
    searcher.used.insert(pairing_term);
    searcher.used.insert(answer_term);

    if (!searcher.solve()) {
        // The deepest empty candidate set carries the diagnostics; the code
        // distinguishes an immediate dead end from an exhausted search.
        GroundingFailure failure = searcher.last_failure;
        if (failure.code.empty() || searcher.backtracked) failure.code = kExhaustedBacktrack;
        out.failure = std::move(failure);
        return out;
    }

    GroundingAssignment assignment;
    assignment.terms = std::move(searcher.assigned);
    for (const auto& [var, term] : assignment.terms) {
        (void)term;
        assignment.provenance[var] =
            (var == path.pairing_var || var == path.answer_var) ? Provenance::Seed : Provenance::Retrieved;
    }
    assignment.rng_draws = rng.draws() - draws_before;
    out.assignment = std::move(assignment);
    return out;
}

json GroundedTriple::to_json() const {
    json choices = json::array();
    for (const GroundingAssignment& a : per_choice) choices.push_back(a.to_json());
    return json{{"v", 1},
                {"pairing_id", pairing_id},
                {"qa_id", qa_id},
                {"tree_id", tree_id},
                {"path", path.to_json()},
                {"per_choice", choices}};
}

GroundedTriple GroundedTriple::from_json(const json& j) {
    GroundedTriple t;
    t.pairing_id = j.at("pairing_id").get<std::string>();
    t.qa_id = j.at("qa_id").get<std::string>();
    t.tree_id = j.at("tree_id").get<std::string>();
    t.path = ReasoningPath::from_json(j.at("path"));
    for (const json& a : j.at("per_choice")) t.per_choice.push_back(GroundingAssignment::from_json(a));
    return t;
}

json GroundFailureRecord::to_json() const {
    return json{{"v", 1},
                {"pairing_id", pairing_id},
                {"tree_id", tree_id},
                {"choice_index", choice_index},
                {"code", failure.code},
                {"variable", failure.variable},
                {"constraint_edges", failure.constraint_edges},
                {"detail", failure.detail}};
}

GroundCorpus ground_all(std::span<const GroundJob> jobs,
                        const std::map<std::string, ReasoningTree>& trees_by_id,
                        const std::map<std::string, PairingTemplate>& templates_by_id,
                        const std::map<std::string, QAInstance>& qa_by_id, const AssertionStore& store,
                        const SkillTable& skills, int beam_k, const RelevanceMetric& metric,
                        std::uint64_t seed, int jobs_parallel) {
    struct SlotResult {
        std::optional<GroundedTriple> triple;
        std::vector<GroundFailureRecord> failures;
    };
    std::vector<SlotResult> results(jobs.size());

    auto run_one = [&](size_t idx) {
        const GroundJob& job = jobs[idx];
        const ReasoningTree& tree = trees_by_id.at(job.tree_id);
        const PairingTemplate& tmpl = templates_by_id.at(job.pairing_id);
        const QAInstance& qa = qa_by_id.at(job.qa_id);

        GroundedTriple triple{job.pairing_id, job.qa_id, job.tree_id, job.path, {}};
        // Item-wide exclusion set: every copy's retrievals must avoid the
        // pairing term, all answer choices, and terms used by earlier copies.
        std::set<std::string> used{tmpl.pairing_term};
        used.insert(qa.choices.begin(), qa.choices.end());

        bool all_ok = true;
        for (size_t c = 0; c < qa.choices.size(); ++c) {
            std::string key = "ground/" + job.pairing_id + "/" + job.tree_id + "/" +
                              hex64(fnv1a64(job.path.to_json().dump())) + "/" + std::to_string(c);
            Rng rng = Rng::substream(seed, key);
            GroundingOutcome outcome = ground_tree(tree, job.path, tmpl.pairing_term, qa.choices[c],
                                                   store, skills, beam_k, metric, rng, used);
            if (!outcome.ok()) {
                results[idx].failures.push_back(
                    {job.pairing_id, job.tree_id, static_cast<int>(c), *outcome.failure});
                all_ok = false;
                break;  // an item needs all Q duplicates
            }
            outcome.assignment->rng_key = key;
            for (const auto& [var, prov] : outcome.assignment->provenance) {
                if (prov == Provenance::Retrieved) used.insert(outcome.assignment->terms.at(var));
            }
            triple.per_choice.push_back(std::move(*outcome.assignment));
        }
        if (all_ok) results[idx].triple = std::move(triple);
    };

    int workers = std::max(1, jobs_parallel);
    if (workers == 1 || jobs.size() <= 1) {
        for (size_t i = 0; i < jobs.size(); ++i) run_one(i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                while (true) {
                    size_t i = next.fetch_add(1);
                    if (i >= jobs.size()) return;
                    run_one(i);
                }
            });
        }
        for (std::thread& t : pool) t.join();
    }

    GroundCorpus corpus;
    for (SlotResult& r : results) {
        if (r.triple) corpus.triples.push_back(std::move(*r.triple));
        for (GroundFailureRecord& f : r.failures) corpus.failures.push_back(std::move(f));
    }
    return corpus;
}

}  // namespace afbench
