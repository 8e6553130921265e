#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "afbench/assemble.hpp"
#include "afbench/eval.hpp"
#include "afbench/grounding.hpp"
#include "afbench/jsonl.hpp"
#include "afbench/kb_store.hpp"
#include "afbench/pairing.hpp"
#include "afbench/skills.hpp"
#include "afbench/trees.hpp"

namespace afbench {

struct SubsampleConfig {
    bool enabled = true;
    size_t per_shape = 1;  // trees kept per (pairing, n, d)
};

struct ModelTarget {
    std::string mock;      // oracle | parrot | random; empty for HTTP
    std::string endpoint;  // http://host:port/path
    std::string model;
    int concurrency = 4;

    bool configured() const { return !mock.empty() || !endpoint.empty(); }
};

struct PipelineConfig {
    std::uint64_t seed = 1;

    std::filesystem::path kb_dump;
    DumpFormat kb_format = DumpFormat::Tsv;
    std::filesystem::path qa;
    std::filesystem::path pairings;
    std::filesystem::path skills;
    std::filesystem::path reductions;
    std::filesystem::path out_dir;

    int size_min = 1;
    int size_max = 5;
    int beam_k = 1;
    std::string metric = "uniform_random";
    VariantPlan plan;
    int quota = 13;
    std::vector<std::string> blocklist;
    SubsampleConfig subsample;
    bool include_baseline = false;
    int jobs = 1;
    bool strict = false;
    std::string instruction;  // empty -> default instruction
    std::string language = "en";
    ModelTarget model;

    // Relative paths in the document resolve against the config file's
    // directory.
    static PipelineConfig from_file(const std::filesystem::path& path);
    static PipelineConfig from_json(const json& doc, const std::filesystem::path& base_dir);
};

inline constexpr int kMaxTreeSize = 8;

// Runs the generation/evaluation stages over persisted intermediates. Every
// stage writes its outputs plus manifest_<stage>.json (input checksums, seed,
// counts, duration); rerunning a stage with identical inputs reproduces its
// outputs byte for byte.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig config);

    static const std::vector<std::string>& stage_names();

    json run_stage(const std::string& name);
    json run_all();

    const PipelineConfig& config() const { return config_; }

    std::filesystem::path store_path() const { return config_.out_dir / "store.bin"; }
    std::filesystem::path trees_path() const { return config_.out_dir / "trees.jsonl"; }
    std::filesystem::path balanced_qa_path() const { return config_.out_dir / "balanced_qa.jsonl"; }
    std::filesystem::path pool_path() const { return config_.out_dir / "pool.jsonl"; }
    std::filesystem::path selected_path() const { return config_.out_dir / "selected.jsonl"; }
    std::filesystem::path grounded_path() const { return config_.out_dir / "grounded.jsonl"; }
    std::filesystem::path ground_failures_path() const {
        return config_.out_dir / "ground_failures.jsonl";
    }
    std::filesystem::path items_path() const { return config_.out_dir / "items.jsonl"; }
    std::filesystem::path report_dir() const { return config_.out_dir / "report"; }
    std::filesystem::path records_path() const { return config_.out_dir / "eval_records.jsonl"; }

private:
    json stage_ingest();
    json stage_trees();
    json stage_pair();
    json stage_subsample();
    json stage_ground();
    json stage_assemble();
    json stage_evaluate();
    json stage_report();

    AssertionStore load_store() const;
    SkillTable load_skills() const;
    ReductionTable load_reductions(const SkillTable& skills) const;
    std::vector<PairingTemplate> load_templates(const SkillTable& skills) const;
    std::vector<QAInstance> load_balanced_qa() const;
    std::map<std::string, ReasoningTree> load_trees_by_id() const;

    void require_stage_output(const std::filesystem::path& path, const std::string& producing_stage,
                              const std::string& stage) const;

    PipelineConfig config_;
};

// Verifies every non-baseline item in the file; returns (pass, fail) counts
// and appends one line per failing item to `failures`.
std::pair<size_t, size_t> verify_items_file(const std::filesystem::path& items_path,
                                            const SkillTable& skills, const ReductionTable& rules,
                                            std::span<const PairingTemplate> templates,
                                            std::vector<std::string>* failures = nullptr);

}  // namespace afbench
