#include "afbench/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <thread>

#include "afbench/errors.hpp"
#include "afbench/rng.hpp"
#include "afbench/strings.hpp"

namespace afbench {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::string path_tag(const ReasoningPath& path) {
    return hex64(fnv1a64(path.to_json().dump())).substr(0, 12);
}

}  // namespace

PipelineConfig PipelineConfig::from_file(const std::filesystem::path& path) {
    json doc = read_json_file(path);
    return from_json(doc, path.has_parent_path() ? path.parent_path() : ".");
}

PipelineConfig PipelineConfig::from_json(const json& doc, const std::filesystem::path& base_dir) {
    if (!doc.contains("version")) throw ConfigError("pipeline config: missing version");
    PipelineConfig cfg;
    cfg.seed = doc.value("seed", std::uint64_t{1});

    const json& paths = require_field(doc, "paths", "pipeline config");
    cfg.kb_dump = resolve(base_dir, require_field(paths, "kb_dump", "paths").get<std::string>());
    cfg.kb_format = dump_format_from_string(paths.value("kb_format", "tsv"));
    cfg.qa = resolve(base_dir, require_field(paths, "qa", "paths").get<std::string>());
    cfg.pairings = resolve(base_dir, require_field(paths, "pairings", "paths").get<std::string>());
    cfg.skills = resolve(base_dir, require_field(paths, "skills", "paths").get<std::string>());
    cfg.reductions = resolve(base_dir, require_field(paths, "reductions", "paths").get<std::string>());
    cfg.out_dir = resolve(base_dir, require_field(paths, "out_dir", "paths").get<std::string>());

    if (doc.contains("sizes")) {
        cfg.size_min = doc["sizes"].value("min", 1);
        cfg.size_max = doc["sizes"].value("max", 5);
    }
    if (cfg.size_min < 1 || cfg.size_max < cfg.size_min || cfg.size_max > kMaxTreeSize) {
        throw ConfigError("pipeline config: bad tree size range [" + std::to_string(cfg.size_min) +
                          ", " + std::to_string(cfg.size_max) + "]");
    }
    cfg.beam_k = doc.value("beam_k", 1);
    if (cfg.beam_k < 1) throw ConfigError("pipeline config: beam_k must be >= 1");
    cfg.metric = doc.value("metric", "uniform_random");
    if (doc.contains("variants")) {
        cfg.plan.mode = variant_mode_from_string(doc["variants"].value("mode", "both"));
        cfg.plan.policy = target_policy_from_string(doc["variants"].value("targets", "sample_one"));
    }
    cfg.quota = doc.value("quota", 13);
    if (cfg.quota < 1) throw ConfigError("pipeline config: quota must be >= 1");
    if (doc.contains("blocklist")) cfg.blocklist = doc["blocklist"].get<std::vector<std::string>>();
    if (doc.contains("subsample")) {
        cfg.subsample.enabled = doc["subsample"].value("enabled", true);
        cfg.subsample.per_shape = doc["subsample"].value("per_shape", size_t{1});
        if (cfg.subsample.per_shape < 1) {
            throw ConfigError("pipeline config: subsample.per_shape must be >= 1");
        }
    }
    cfg.include_baseline = doc.value("include_baseline", false);
    cfg.jobs = doc.value("jobs", 1);
    if (cfg.jobs < 0) throw ConfigError("pipeline config: jobs must be >= 0");
    if (cfg.jobs == 0) cfg.jobs = static_cast<int>(std::thread::hardware_concurrency());
    cfg.strict = doc.value("strict", false);
    if (doc.contains("instruction") && !doc["instruction"].is_null()) {
        cfg.instruction = doc["instruction"].get<std::string>();
    }
    cfg.language = doc.value("language", "en");
    if (doc.contains("model")) {
        const json& m = doc["model"];
        cfg.model.mock = m.value("mock", "");
        cfg.model.endpoint = m.value("endpoint", "");
        cfg.model.model = m.value("model", "");
        cfg.model.concurrency = m.value("concurrency", 4);
    }
    return cfg;
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {}

const std::vector<std::string>& Pipeline::stage_names() {
    static const std::vector<std::string> names{"ingest",  "trees",    "pair",     "subsample",
                                                "ground",  "assemble", "evaluate", "report"};
    return names;
}

void Pipeline::require_stage_output(const std::filesystem::path& path,
                                    const std::string& producing_stage, const std::string& stage) const {
    if (!std::filesystem::exists(path)) {
        throw StageError("stage '" + stage + "' requires output of stage '" + producing_stage +
                         "' (missing " + path.string() + "); run that stage first");
    }
}

AssertionStore Pipeline::load_store() const {
    std::uint64_t checksum = file_checksum(config_.kb_dump);
    auto store = AssertionStore::load_cache(store_path(), checksum);
    if (!store) {
        throw StageError("store cache " + store_path().string() +
                         " is missing or stale for the configured dump; rerun the ingest stage");
    }
    return std::move(*store);
}

SkillTable Pipeline::load_skills() const {
    return SkillTable::load_file(config_.skills);
}

ReductionTable Pipeline::load_reductions(const SkillTable& skills) const {
    return ReductionTable::load_file(config_.reductions, skills, /*strict=*/true);
}

std::vector<PairingTemplate> Pipeline::load_templates(const SkillTable& skills) const {
    return load_pairing_templates(config_.pairings, skills);
}

std::vector<QAInstance> Pipeline::load_balanced_qa() const {
    std::vector<QAInstance> out;
    for (const json& j : read_jsonl(balanced_qa_path())) {
        QAInstance inst;
        inst.id = j.at("id").get<std::string>();
        inst.question = j.at("question").get<std::string>();
        inst.choices = j.at("choices").get<std::vector<std::string>>();
        inst.default_answer_index = j.at("answer_index").get<int>();
        if (j.contains("source_concept") && !j["source_concept"].is_null()) {
            inst.source_concept = j["source_concept"].get<std::string>();
        }
        if (j.contains("source_relation") && !j["source_relation"].is_null()) {
            inst.source_relation = j["source_relation"].get<std::string>();
        }
        out.push_back(std::move(inst));
    }
    return out;
}

std::map<std::string, ReasoningTree> Pipeline::load_trees_by_id() const {
    std::map<std::string, ReasoningTree> out;
    for (const json& j : read_jsonl(trees_path())) {
        ReasoningTree t = ReasoningTree::from_json(j);
        out[t.id] = std::move(t);
    }
    return out;
}

json Pipeline::run_stage(const std::string& name) {
    auto t0 = std::chrono::steady_clock::now();
    json body;
    if (name == "ingest") {
        body = stage_ingest();
    } else if (name == "trees") {
        body = stage_trees();
    } else if (name == "pair") {
        body = stage_pair();
    } else if (name == "subsample") {
        body = stage_subsample();
    } else if (name == "ground") {
        body = stage_ground();
    } else if (name == "assemble") {
        body = stage_assemble();
    } else if (name == "evaluate") {
        body = stage_evaluate();
    } else if (name == "report") {
        body = stage_report();
    } else {
        throw ConfigError("unknown stage '" + name + "'");
    }
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    json manifest{{"stage", name}, {"version", 1}, {"seed", config_.seed}};
    json inputs = json::object();
    for (const std::string& p : body.value("inputs", std::vector<std::string>{})) {
        if (std::filesystem::exists(p)) inputs[p] = hex64(file_checksum(p));
    }
    json outputs = json::object();
    for (const std::string& p : body.value("outputs", std::vector<std::string>{})) {
        outputs[p] = hex64(file_checksum(p));
    }
    manifest["inputs"] = inputs;
    manifest["outputs"] = outputs;
    manifest["counts"] = body.value("counts", json::object());
    manifest["duration_ms"] = ms;
    write_json_file(config_.out_dir / ("manifest_" + name + ".json"), manifest);
    return manifest;
}

json Pipeline::run_all() {
    json aggregate = json::object();
    for (const std::string& stage : {"ingest", "trees", "pair", "subsample", "ground", "assemble"}) {
        aggregate[stage] = run_stage(stage);
    }
    if (config_.model.configured()) {
        aggregate["evaluate"] = run_stage("evaluate");
        aggregate["report"] = run_stage("report");
    }
    write_json_file(config_.out_dir / "manifest_pipeline.json", aggregate);
    return aggregate;
}

json Pipeline::stage_ingest() {
    if (!std::filesystem::exists(config_.kb_dump)) {
        throw ConfigError("KB dump not found: " + config_.kb_dump.string());
    }
    SkillTable skills = load_skills();
    IngestOptions options;
    options.relations = skills.kb_relations();
    options.language = config_.language;
    options.strict = config_.strict;
    IngestReport report;
    AssertionStore store = AssertionStore::ingest_file(config_.kb_dump, config_.kb_format, options,
                                                       &report);
    std::uint64_t checksum = file_checksum(config_.kb_dump);
    store.save_cache(store_path(), checksum);
    write_json_file(config_.out_dir / "ingest_report.json", report.to_json());

    json counts{{"assertions", store.size()},
                {"relations", store.relations().size()},
                {"lines_read", report.lines_read},
                {"kept", report.kept},
                {"filtered", report.filtered},
                {"duplicates", report.duplicates},
                {"malformed", report.malformed.size()}};
    return json{{"counts", counts},
                {"inputs", std::vector<std::string>{config_.kb_dump.string()}},
                {"outputs", std::vector<std::string>{store_path().string(),
                                                     (config_.out_dir / "ingest_report.json").string()}}};
}

json Pipeline::stage_trees() {
    SkillTable skills = load_skills();
    ReductionTable rules = load_reductions(skills);
    std::vector<PairingTemplate> templates = load_templates(skills);
    if (templates.empty()) throw ConfigError("no pairing templates configured");

    std::set<std::string> anchor_skills;
    for (const PairingTemplate& t : templates) anchor_skills.insert(t.skill);

    std::vector<json> records;
    std::map<std::string, size_t> count_by_skill_size;  // "skill/T"
    size_t total = 0;
    for (int size = config_.size_min; size <= config_.size_max; ++size) {
        std::vector<ReasoningTree> shapes = enumerate_tree_shapes(skills, size);
        for (ReasoningTree& tree : shapes) {
            bool relevant = std::any_of(tree.edges.begin(), tree.edges.end(), [&](const TreeEdge& e) {
                return anchor_skills.count(e.skill) > 0;
            });
            if (!relevant) continue;
            records.push_back(tree.to_json());
            ++total;
            for (const std::string& skill : anchor_skills) {
                bool has = std::any_of(tree.edges.begin(), tree.edges.end(),
                                       [&](const TreeEdge& e) { return e.skill == skill; });
                if (has) ++count_by_skill_size[skill + "/" + std::to_string(size)];
            }
        }
    }
    write_jsonl(trees_path(), records);

    json per_pairing = json::object();
    for (const PairingTemplate& t : templates) {
        for (int size = config_.size_min; size <= config_.size_max; ++size) {
            std::string key = t.skill + "/" + std::to_string(size);
            per_pairing[t.id + "/" + std::to_string(size)] =
                count_by_skill_size.count(key) ? count_by_skill_size.at(key) : 0;
        }
    }
    json counts{{"trees", total}, {"by_pairing_size", per_pairing}};
    return json{{"counts", counts},
                {"inputs", std::vector<std::string>{config_.skills.string(), config_.reductions.string(),
                                                    config_.pairings.string()}},
                {"outputs", std::vector<std::string>{trees_path().string()}}};
}

json Pipeline::stage_pair() {
    require_stage_output(store_path(), "ingest", "pair");
    require_stage_output(trees_path(), "trees", "pair");
    AssertionStore store = load_store();
    SkillTable skills = load_skills();
    ReductionTable rules = load_reductions(skills);
    std::vector<PairingTemplate> templates = load_templates(skills);

    // Relation inference and balancing.
    std::vector<QAInstance> instances = load_qa_instances(config_.qa);
    size_t uninferred = 0;
    for (QAInstance& inst : instances) {
        if (!inst.source_relation) inst.source_relation = infer_source_relation(inst, store);
        if (!inst.source_relation) ++uninferred;  // excluded from balancing below
    }
    std::set<std::string> blocklist(config_.blocklist.begin(), config_.blocklist.end());
    std::vector<QAInstance> balanced =
        balance_by_relation(instances, config_.quota, config_.seed, blocklist);
    std::vector<json> balanced_records;
    for (const QAInstance& inst : balanced) balanced_records.push_back(inst.to_json());
    write_jsonl(balanced_qa_path(), balanced_records);

    std::set<std::string> balanced_ids;
    for (const QAInstance& inst : balanced) balanced_ids.insert(inst.id);
    std::vector<PairingTemplate> active;
    for (const PairingTemplate& t : templates) {
        if (balanced_ids.count(t.qa_id)) active.push_back(t);
    }
    validate_pairing_templates(active, balanced);

    // Anchored path pools are shared by every pairing with the same
    // (skill, pairing slot), so they are computed once per combination.
    std::set<std::pair<std::string, Slot>> combos;
    for (const PairingTemplate& t : active) combos.insert({t.skill, t.pairing_slot});

    std::vector<ReasoningTree> trees;
    for (const json& j : read_jsonl(trees_path())) trees.push_back(ReasoningTree::from_json(j));

    std::vector<json> pool_records;
    std::map<std::string, size_t> paths_by_combo;
    for (const auto& [skill, slot] : combos) {
        for (const ReasoningTree& tree : trees) {
            for (int e = 0; e < tree.size(); ++e) {
                if (tree.edges[e].skill != skill) continue;
                int pairing_var = slot == Slot::Start ? tree.edges[e].start : tree.edges[e].end;
                std::vector<ReasoningPath> paths = find_reasoning_paths(tree, e, pairing_var, rules);
                if (paths.empty()) continue;
                json paths_j = json::array();
                for (const ReasoningPath& p : paths) paths_j.push_back(p.to_json());
                pool_records.push_back(json{{"v", 1},
                                            {"skill", skill},
                                            {"slot", to_string(slot)},
                                            {"tree_id", tree.id},
                                            {"anchor_edge", e},
                                            {"paths", paths_j}});
                paths_by_combo[skill + "/" + to_string(slot)] += paths.size();
            }
        }
    }
    write_jsonl(pool_path(), pool_records);

    // Matched-tree counts per pairing (the replication statistic).
    json matches = json::object();
    for (const PairingTemplate& t : active) {
        size_t count = 0;
        for (const ReasoningTree& tree : trees) {
            if (std::any_of(tree.edges.begin(), tree.edges.end(),
                            [&](const TreeEdge& e) { return e.skill == t.skill; })) {
                ++count;
            }
        }
        matches[t.id] = count;
    }

    json relation_histogram = json::object();
    for (const QAInstance& inst : instances) {
        if (inst.source_relation) {
            std::string rel = *inst.source_relation;
            relation_histogram[rel] = relation_histogram.value(rel, 0) + 1;
        }
    }

    json counts{{"instances", instances.size()},
                {"instances_without_relation", uninferred},
                {"balanced", balanced.size()},
                {"templates", templates.size()},
                {"templates_active", active.size()},
                {"pool_records", pool_records.size()},
                {"relation_histogram", relation_histogram},
                {"matched_trees_by_pairing", matches}};
    json paths_counts = json::object();
    for (const auto& [combo, count] : paths_by_combo) paths_counts[combo] = count;
    counts["paths_by_combo"] = paths_counts;
    return json{{"counts", counts},
                {"inputs", std::vector<std::string>{config_.qa.string(), config_.pairings.string(),
                                                    trees_path().string(), store_path().string()}},
                {"outputs", std::vector<std::string>{balanced_qa_path().string(), pool_path().string()}}};
}

json Pipeline::stage_subsample() {
    require_stage_output(pool_path(), "pair", "subsample");
    require_stage_output(balanced_qa_path(), "pair", "subsample");
    SkillTable skills = load_skills();
    std::vector<PairingTemplate> templates = load_templates(skills);
    std::vector<QAInstance> balanced = load_balanced_qa();
    std::set<std::string> balanced_ids;
    for (const QAInstance& inst : balanced) balanced_ids.insert(inst.id);

    // combo -> expanded (tree, path) candidates in file order.
    std::map<std::string, std::vector<std::pair<std::string, ReasoningPath>>> pool;
    for (const json& j : read_jsonl(pool_path())) {
        std::string combo = j.at("skill").get<std::string>() + "/" + j.at("slot").get<std::string>();
        std::string tree_id = j.at("tree_id").get<std::string>();
        for (const json& pj : j.at("paths")) {
            pool[combo].push_back({tree_id, ReasoningPath::from_json(pj)});
        }
    }

    std::vector<json> selected_records;
    json shape_coverage = json::object();
    size_t selected_total = 0;
    for (const PairingTemplate& tmpl : templates) {
        if (!balanced_ids.count(tmpl.qa_id)) continue;
        std::string combo = tmpl.skill + "/" + to_string(tmpl.pairing_slot);
        auto it = pool.find(combo);
        if (it == pool.end()) continue;
        std::vector<PathPoolEntry> entries;
        entries.reserve(it->second.size());
        for (const auto& [tree_id, path] : it->second) {
            entries.push_back({tmpl.id, tmpl.qa_id, tree_id, path});
        }
        std::vector<PathPoolEntry> picked;
        if (config_.subsample.enabled) {
            Rng rng = Rng::substream(config_.seed, "subsample/" + tmpl.id);
            picked = subsample_by_shape(entries, config_.subsample.per_shape, rng);
        } else {
            picked = std::move(entries);
        }
        std::set<std::pair<int, int>> shapes;
        for (const PathPoolEntry& e : picked) {
            selected_records.push_back(e.to_json());
            shapes.insert({e.path.n, e.path.d});
        }
        selected_total += picked.size();
        json shape_list = json::array();
        for (auto [n, d] : shapes) shape_list.push_back(std::to_string(n) + "," + std::to_string(d));
        shape_coverage[tmpl.id] = shape_list;
    }
    write_jsonl(selected_path(), selected_records);

    json counts{{"selected", selected_total}, {"shapes_by_pairing", shape_coverage}};
    return json{{"counts", counts},
                {"inputs", std::vector<std::string>{pool_path().string(), balanced_qa_path().string()}},
                {"outputs", std::vector<std::string>{selected_path().string()}}};
}

json Pipeline::stage_ground() {
    require_stage_output(selected_path(), "subsample", "ground");
    require_stage_output(store_path(), "ingest", "ground");
    require_stage_output(trees_path(), "trees", "ground");
    require_stage_output(balanced_qa_path(), "pair", "ground");

    AssertionStore store = load_store();
    SkillTable skills = load_skills();
    std::vector<PairingTemplate> templates = load_templates(skills);
    std::map<std::string, PairingTemplate> templates_by_id;
    for (const PairingTemplate& t : templates) templates_by_id[t.id] = t;
    std::map<std::string, QAInstance> qa_by_id;
    for (const QAInstance& inst : load_balanced_qa()) qa_by_id[inst.id] = inst;
    std::map<std::string, ReasoningTree> trees = load_trees_by_id();

    std::vector<GroundJob> jobs;
    for (const json& j : read_jsonl(selected_path())) {
        PathPoolEntry entry = PathPoolEntry::from_json(j);
        jobs.push_back({entry.pairing_id, entry.qa_id, entry.tree_id, entry.path});
    }

    auto metric = make_metric(config_.metric);
    GroundCorpus corpus = ground_all(jobs, trees, templates_by_id, qa_by_id, store, skills,
                                     config_.beam_k, *metric, config_.seed, config_.jobs);

    std::vector<json> grounded_records;
    for (const GroundedTriple& t : corpus.triples) grounded_records.push_back(t.to_json());
    write_jsonl(grounded_path(), grounded_records);
    std::vector<json> failure_records;
    std::map<std::string, size_t> failures_by_code;
    for (const GroundFailureRecord& f : corpus.failures) {
        failure_records.push_back(f.to_json());
        ++failures_by_code[f.failure.code];
    }
    write_jsonl(ground_failures_path(), failure_records);

    json failure_counts = json::object();
    for (const auto& [code, count] : failures_by_code) failure_counts[code] = count;
    json counts{{"jobs", jobs.size()},
                {"grounded", corpus.triples.size()},
                {"failed", corpus.failures.size()},
                {"failures_by_code", failure_counts}};
    return json{{"counts", counts},
                {"inputs", std::vector<std::string>{selected_path().string(), store_path().string(),
                                                    trees_path().string(), balanced_qa_path().string()}},
                {"outputs", std::vector<std::string>{grounded_path().string(),
                                                     ground_failures_path().string()}}};
}

json Pipeline::stage_assemble() {
    require_stage_output(grounded_path(), "ground", "assemble");
    require_stage_output(balanced_qa_path(), "pair", "assemble");
    require_stage_output(trees_path(), "trees", "assemble");

    SkillTable skills = load_skills();
    ReductionTable rules = load_reductions(skills);
    std::vector<PairingTemplate> templates = load_templates(skills);
    std::map<std::string, PairingTemplate> templates_by_id;
    for (const PairingTemplate& t : templates) templates_by_id[t.id] = t;
    std::vector<QAInstance> balanced = load_balanced_qa();
    std::map<std::string, QAInstance> qa_by_id;
    for (const QAInstance& inst : balanced) qa_by_id[inst.id] = inst;
    std::map<std::string, ReasoningTree> trees = load_trees_by_id();

    std::vector<BenchmarkItem> items;
    std::vector<std::string> verify_failures;
    for (const json& j : read_jsonl(grounded_path())) {
        GroundedTriple triple = GroundedTriple::from_json(j);
        const PairingTemplate& tmpl = templates_by_id.at(triple.pairing_id);
        const QAInstance& qa = qa_by_id.at(triple.qa_id);
        const ReasoningTree& tree = trees.at(triple.tree_id);
        std::string tag = path_tag(triple.path);

        Rng plan_rng = Rng::substream(config_.seed,
                                      "plan/" + triple.pairing_id + "/" + triple.tree_id + "/" + tag);
        for (const auto& [target, variant] : plan_variants(qa, config_.plan, plan_rng)) {
            Rng item_rng = Rng::substream(config_.seed, "item/" + triple.pairing_id + "/" +
                                                            triple.tree_id + "/" + tag + "/" + variant +
                                                            "/" + std::to_string(target));
            BenchmarkItem item =
                assemble_item(tmpl, qa, skills, tree, triple.path, triple.per_choice, target, variant,
                              config_.instruction, config_.seed, item_rng);
            // Hard gate: every emitted item must carry exactly one implied
            // choice.
            VerifyResult verdict = verify_soundness(item, skills, rules, tmpl);
            if (!verdict.pass) {
                verify_failures.push_back(item.id + ": " + verdict.failure);
                continue;
            }
            items.push_back(std::move(item));
        }
    }
    if (!verify_failures.empty()) {
        std::string msg = "soundness gate failed for " + std::to_string(verify_failures.size()) +
                          " item(s); first: " + verify_failures.front();
        throw SoundnessError(msg);
    }

    if (config_.include_baseline) {
        for (const QAInstance& qa : balanced) {
            BenchmarkItem item;
            item.id = "baseline." + qa.id;
            item.instruction = "";
            item.question = qa.question;
            item.choices = qa.choices;
            item.gold_index = qa.default_answer_index;
            item.meta = {"qa:" + qa.id,      "none", 0, 0, 0, "baseline", config_.seed,
                         static_cast<int>(qa.choices.size()), qa.default_answer_index};
            items.push_back(std::move(item));
        }
    }

    ExportManifest manifest = export_items(items, items_path(), config_.seed);
    write_json_file(config_.out_dir / "items_manifest.json", manifest.to_json());

    json counts{{"items", manifest.total}, {"counts_by_variant_n_d", manifest.to_json()["counts_by_variant_n_d"]}};
    return json{{"counts", counts},
                {"inputs", std::vector<std::string>{grounded_path().string(),
                                                    balanced_qa_path().string(), trees_path().string()}},
                {"outputs", std::vector<std::string>{items_path().string(),
                                                     (config_.out_dir / "items_manifest.json").string()}}};
}

json Pipeline::stage_evaluate() {
    require_stage_output(items_path(), "assemble", "evaluate");
    if (!config_.model.configured()) {
        throw ConfigError("evaluate stage needs a model: set config.model.mock or endpoint/model");
    }
    SkillTable skills = load_skills();
    ReductionTable rules = load_reductions(skills);
    std::vector<PairingTemplate> templates = load_templates(skills);
    std::vector<BenchmarkItem> items = load_items(items_path());

    std::unique_ptr<ModelClient> client;
    if (!config_.model.mock.empty()) {
        client = make_mock_model(config_.model.mock, config_.seed, skills, rules, templates);
    } else {
        HttpClientConfig http;
        http.endpoint = config_.model.endpoint;
        http.model = config_.model.model;
        client = std::make_unique<HttpModelClient>(http);
    }
    std::vector<EvalRecord> records = run_eval(items, *client, config_.model.concurrency);
    std::vector<json> record_json;
    size_t correct = 0, abstain = 0;
    for (const EvalRecord& r : records) {
        record_json.push_back(r.to_json());
        correct += r.correct ? 1 : 0;
        abstain += r.extracted == kAbstain ? 1 : 0;
    }
    write_jsonl(records_path(), record_json);

    json counts{{"records", records.size()},
                {"model", client->model_id()},
                {"correct", correct},
                {"abstain", abstain}};
    return json{{"counts", counts},
                {"inputs", std::vector<std::string>{items_path().string()}},
                {"outputs", std::vector<std::string>{records_path().string()}}};
}

json Pipeline::stage_report() {
    require_stage_output(records_path(), "evaluate", "report");
    require_stage_output(items_path(), "assemble", "report");
    std::vector<BenchmarkItem> items = load_items(items_path());
    std::vector<EvalRecord> records;
    for (const json& j : read_jsonl(records_path())) records.push_back(EvalRecord::from_json(j));

    std::vector<StratumStats> stats = stratify(records, items);
    // Conservation: the (variant x n x d) strata plus the baseline must
    // account for every record.
    size_t nd_total = 0;
    for (const StratumStats& s : stats) {
        if (s.kind == "by_nd" || (s.kind == "overall" && s.variant == "baseline")) {
            nd_total += s.num_items;
        }
    }
    if (nd_total != records.size()) {
        throw StageError("stratification conservation violated: " + std::to_string(nd_total) + " vs " +
                         std::to_string(records.size()));
    }
    emit_report(stats, report_dir());

    json counts{{"strata", stats.size()}, {"records", records.size()}};
    return json{{"counts", counts},
                {"inputs", std::vector<std::string>{records_path().string(), items_path().string()}},
                {"outputs", std::vector<std::string>{(report_dir() / "strata.tsv").string(),
                                                     (report_dir() / "plotdata.tsv").string()}}};
}

std::pair<size_t, size_t> verify_items_file(const std::filesystem::path& items_path,
                                            const SkillTable& skills, const ReductionTable& rules,
                                            std::span<const PairingTemplate> templates,
                                            std::vector<std::string>* failures) {
    std::map<std::string, const PairingTemplate*> by_id;
    for (const PairingTemplate& t : templates) by_id[t.id] = &t;
    size_t pass = 0, fail = 0;
    for (const BenchmarkItem& item : load_items(items_path)) {
        if (item.meta.variant == "baseline") continue;
        auto it = by_id.find(item.meta.pairing_id);
        if (it == by_id.end()) {
            ++fail;
            if (failures) failures->push_back(item.id + ": unknown pairing template");
            continue;
        }
        VerifyResult result = verify_soundness(item, skills, rules, *it->second);
        if (result.pass) {
            ++pass;
        } else {
            ++fail;
            if (failures) failures->push_back(item.id + ": " + result.failure);
        }
    }
    return {pass, fail};
}

}  // namespace afbench
