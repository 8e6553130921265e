// afbench: builds anti-factual multi-hop MCQ benchmarks from a relational KB
// and evaluates models on them. Stages persist intermediates under the
// configured output directory so each step can be rerun in isolation.
//
// Exit codes: 0 success, 1 configuration error, 2 stage failure,
// 3 soundness-gate failure.

#include <cstdio>
#include <filesystem>
#include <string>

#include "CLI11.hpp"

#include "afbench/errors.hpp"
#include "afbench/pipeline.hpp"

namespace {

struct CommonFlags {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int jobs = -1;
    bool strict = false;
};

afbench::PipelineConfig load_config(const CommonFlags& flags) {
    afbench::PipelineConfig cfg = afbench::PipelineConfig::from_file(flags.config);
    if (!flags.out.empty()) cfg.out_dir = flags.out;
    if (flags.seed_set) cfg.seed = flags.seed;
    if (flags.jobs >= 0) cfg.jobs = flags.jobs == 0 ? 1 : flags.jobs;
    if (flags.strict) cfg.strict = true;
    return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config, "pipeline config file")->required();
    cmd->add_option("--out", flags.out, "override output directory");
    cmd->add_option("--seed", flags.seed, "override global seed")
        ->each([&flags](const std::string&) { flags.seed_set = true; });
    cmd->add_option("--jobs", flags.jobs, "worker threads (0 = single)");
    cmd->add_flag("--strict", flags.strict, "strict ingest/config validation");
}

int run_verify(const afbench::PipelineConfig& cfg, const std::string& items_override, bool verbose) {
    namespace ab = afbench;
    ab::SkillTable skills = ab::SkillTable::load_file(cfg.skills);
    ab::ReductionTable rules = ab::ReductionTable::load_file(cfg.reductions, skills);
    std::vector<ab::PairingTemplate> templates = ab::load_pairing_templates(cfg.pairings, skills);
    std::filesystem::path items =
        items_override.empty() ? cfg.out_dir / "items.jsonl" : std::filesystem::path(items_override);

    std::vector<std::string> failures;
    auto [pass, fail] = ab::verify_items_file(items, skills, rules, templates, &failures);
    for (const std::string& f : failures) std::fprintf(stderr, "FAIL %s\n", f.c_str());
    if (verbose || fail > 0) {
        std::fprintf(stderr, "verified %zu items: %zu pass, %zu fail\n", pass + fail, pass, fail);
    }
    std::printf("%s: %zu/%zu items sound\n", fail == 0 ? "PASS" : "FAIL", pass, pass + fail);
    return fail == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"anti-factual benchmark generator and evaluation harness"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string stage_for;

    // One subcommand per pipeline stage, plus run-all and verify.
    std::vector<std::pair<CLI::App*, std::string>> stage_cmds;
    for (const std::string& stage : afbench::Pipeline::stage_names()) {
        CLI::App* cmd = app.add_subcommand(stage, "run the " + stage + " stage");
        add_common(cmd, flags);
        stage_cmds.push_back({cmd, stage});
    }
    CLI::App* run_all_cmd = app.add_subcommand("run-all", "run every generation stage in order");
    add_common(run_all_cmd, flags);

    CLI::App* verify_cmd = app.add_subcommand("verify", "re-check item soundness");
    add_common(verify_cmd, flags);
    std::string verify_items;
    bool verify_verbose = false;
    verify_cmd->add_option("--items", verify_items, "items file (default <out>/items.jsonl)");
    verify_cmd->add_flag("--verbose", verify_verbose, "print the summary even when clean");

    // Evaluate-stage model flags (also honored by run-all).
    std::string mock, endpoint, model;
    int concurrency = -1;
    for (CLI::App* cmd : {stage_cmds[6].first, run_all_cmd}) {  // "evaluate"
        cmd->add_option("--mock", mock, "mock model: oracle|parrot|random");
        cmd->add_option("--endpoint", endpoint, "chat-completion endpoint (http://host:port/path)");
        cmd->add_option("--model", model, "model name for the endpoint");
        cmd->add_option("--concurrency", concurrency, "max in-flight requests");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        afbench::PipelineConfig cfg = load_config(flags);
        if (!mock.empty()) {
            cfg.model.mock = mock;
            cfg.model.endpoint.clear();
        }
        if (!endpoint.empty()) {
            cfg.model.endpoint = endpoint;
            cfg.model.mock.clear();
        }
        if (!model.empty()) cfg.model.model = model;
        if (concurrency > 0) cfg.model.concurrency = concurrency;

        if (verify_cmd->parsed()) {
            return run_verify(cfg, verify_items, verify_verbose);
        }

        afbench::Pipeline pipeline(cfg);
        if (run_all_cmd->parsed()) {
            afbench::json manifest = pipeline.run_all();
            std::printf("run-all complete; outputs under %s\n", cfg.out_dir.string().c_str());
            return 0;
        }
        for (const auto& [cmd, stage] : stage_cmds) {
            if (cmd->parsed()) {
                afbench::json manifest = pipeline.run_stage(stage);
                std::printf("stage %s complete: %s\n", stage.c_str(),
                            manifest["counts"].dump().c_str());
                return 0;
            }
        }
        std::fprintf(stderr, "no subcommand selected\n");
        return 1;
    } catch (const afbench::SoundnessError& e) {
        std::fprintf(stderr, "soundness-gate failure: %s\n", e.what());
        return 3;
    } catch (const afbench::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
