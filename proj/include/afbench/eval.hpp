#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "afbench/assemble.hpp"

namespace afbench {

inline constexpr int kAbstain = -1;

// Answer extraction cascade (documented order, deterministic):
//   1. isolated answer-letter tokens ("C", "C:", "(c)"); exactly one distinct
//      letter wins, two or more abstain. Bare lowercase letters only count
//      when decorated, so the article "a" never reads as choice A.
//   2. unique case-insensitive whole-word occurrence of a choice text.
//   3. ABSTAIN.
int extract_answer(const std::string& response, std::span<const std::string> choices);

// Prompt layout: Instruction, Statements, Question, Answer choices. Empty
// sections are omitted (baseline items have no statements).
std::string render_prompt(const BenchmarkItem& item);

struct EvalRecord {
    std::string item_id;
    std::string model_id;
    std::string raw;
    int extracted = kAbstain;
    bool correct = false;
    double latency_ms = 0.0;
    std::string note;

    json to_json() const;
    static EvalRecord from_json(const json& j);
};

class ModelClient {
public:
    virtual ~ModelClient() = default;
    virtual std::string model_id() const = 0;
    // May throw; run_eval records a throwing item as ABSTAIN. ConfigError is
    // treated as fatal (endpoint/auth misconfiguration) and aborts the batch.
    virtual std::string respond(const BenchmarkItem& item) = 0;
};

struct HttpClientConfig {
    std::string endpoint;  // http://host:port/path
    std::string model;
    int timeout_s = 60;
    int max_retries = 2;
    int retry_backoff_ms = 250;
    std::string api_key_env = "AFBENCH_API_KEY";
};

// Chat-completion style client: POSTs {model, messages:[{role:"user",...}],
// temperature:0} and reads choices[0].message.content (or choices[0].text).
class HttpModelClient final : public ModelClient {
public:
    explicit HttpModelClient(HttpClientConfig config);
    std::string model_id() const override { return config_.model; }
    std::string respond(const BenchmarkItem& item) override;

private:
    HttpClientConfig config_;
    std::string host_;
    int port_ = 80;
    std::string path_;
    std::string api_key_;
};

// Answers by rerunning the soundness derivation; on a sound corpus this
// reproduces the gold label exactly.
class FaithfulOracle final : public ModelClient {
public:
    FaithfulOracle(SkillTable skills, ReductionTable rules,
                   std::map<std::string, PairingTemplate> templates);
    std::string model_id() const override { return "mock:oracle"; }
    std::string respond(const BenchmarkItem& item) override;

private:
    SkillTable skills_;
    ReductionTable rules_;
    std::map<std::string, PairingTemplate> templates_;
};

// Always answers the dataset's default choice, ignoring the statements: the
// idealized parametric-shortcut model.
class ParametricParrot final : public ModelClient {
public:
    std::string model_id() const override { return "mock:parrot"; }
    std::string respond(const BenchmarkItem& item) override;
};

class UniformRandomModel final : public ModelClient {
public:
    explicit UniformRandomModel(std::uint64_t seed) : seed_(seed) {}
    std::string model_id() const override { return "mock:random"; }
    std::string respond(const BenchmarkItem& item) override;

private:
    std::uint64_t seed_;
};

// One record per item, in item order, with at most `concurrency` requests in
// flight. Per-item failures become ABSTAIN records; only configuration
// errors abort.
std::vector<EvalRecord> run_eval(std::span<const BenchmarkItem> items, ModelClient& client,
                                 int concurrency = 1);

double wald_se(double p, size_t n);

struct StratumStats {
    std::string kind;     // overall | by_n | by_d | by_nd
    std::string variant;  // factual | anti_factual | baseline
    int n = -1;           // -1 when marginalized
    int d = -1;
    double accuracy = 0.0;  // mean of per-pairing accuracies
    double se = 0.0;        // Wald SE over the pairing count
    size_t num_pairings = 0;
    size_t num_items = 0;
    double item_accuracy = 0.0;  // raw per-item mean, for comparison
    double item_se = 0.0;
    double abstain_rate = 0.0;
};

// Accuracy is aggregated per pairing first; the Wald SE runs over the number
// of pairings. ABSTAIN scores as incorrect. Baseline items (variant
// "baseline") appear in the overall stratum only.
std::vector<StratumStats> stratify(std::span<const EvalRecord> records,
                                   std::span<const BenchmarkItem> items);

// strata.tsv (all strata) and plotdata.tsv (panel, series, x, y, se).
void emit_report(std::span<const StratumStats> stats, const std::filesystem::path& dir);

std::vector<StratumStats> parse_strata_tsv(const std::filesystem::path& path);

std::unique_ptr<ModelClient> make_mock_model(const std::string& name, std::uint64_t seed,
                                             const SkillTable& skills, const ReductionTable& rules,
                                             std::span<const PairingTemplate> templates);

}  // namespace afbench
