#include "afbench/eval.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "httplib.h"

#include "afbench/errors.hpp"
#include "afbench/rng.hpp"
#include "afbench/strings.hpp"

namespace afbench {

namespace {

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// Whole-word, case-insensitive containment.
bool contains_word(const std::string& haystack_lower, const std::string& needle_lower) {
    size_t pos = 0;
    while ((pos = haystack_lower.find(needle_lower, pos)) != std::string::npos) {
        bool left_ok = pos == 0 || !is_word_char(haystack_lower[pos - 1]);
        size_t after = pos + needle_lower.size();
        bool right_ok = after >= haystack_lower.size() || !is_word_char(haystack_lower[after]);
        if (left_ok && right_ok) return true;
        pos += 1;
    }
    return false;
}

std::string fmt_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) return "0";
    return std::string(buf, ptr);
}

}  // namespace

int extract_answer(const std::string& response, std::span<const std::string> choices) {
    int q = static_cast<int>(choices.size());

    // Rule 1: isolated letter tokens.
    std::set<int> letters;
    std::vector<std::string> tokens = split(collapse_whitespace(response), ' ');
    bool single_token = tokens.size() == 1 && !tokens[0].empty();
    for (const std::string& raw : tokens) {
        std::string tok = raw;
        bool decorated = false;
        auto strip = [&](std::string_view chars, bool front) {
            while (!tok.empty()) {
                char c = front ? tok.front() : tok.back();
                if (chars.find(c) == std::string_view::npos) break;
                decorated = true;
                if (front) {
                    tok.erase(tok.begin());
                } else {
                    tok.pop_back();
                }
            }
        };
        strip("([{\"'*", true);
        strip(")]}:.,;!?\"'*", false);
        if (tok.size() != 1) continue;
        char c = tok[0];
        int index = -1;
        if (c >= 'A' && c <= 'Z') {
            index = c - 'A';
        } else if (c >= 'a' && c <= 'z' && (decorated || single_token)) {
            // Bare lowercase letters are too easy to confuse with prose
            // (the article "a"); only decorated ones count.
            index = c - 'a';
        }
        if (index >= 0 && index < q) letters.insert(index);
    }
    if (letters.size() == 1) return *letters.begin();
    if (letters.size() > 1) return kAbstain;

    // Rule 2: unique choice-text occurrence.
    std::string lower = to_lower_ascii(response);
    std::vector<int> hits;
    for (int i = 0; i < q; ++i) {
        if (contains_word(lower, to_lower_ascii(choices[i]))) hits.push_back(i);
    }
    if (hits.size() == 1) return hits[0];
    return kAbstain;
}

std::string render_prompt(const BenchmarkItem& item) {
    std::string out;
    if (!item.instruction.empty()) {
        out += "Instruction:\n" + item.instruction + "\n\n";
    }
    if (!item.statements.empty()) {
        out += "Statements:\n";
        for (const std::string& s : item.statements) out += s + "\n";
        out += "\n";
    }
    out += "Question:\n" + item.question + "\n\nAnswer choices:\n";
    for (size_t i = 0; i < item.choices.size(); ++i) {
        out += choice_letter(static_cast<int>(i)) + ": " + item.choices[i] + "\n";
    }
    return out;
}

json EvalRecord::to_json() const {
    return json{{"v", 1},
                {"item_id", item_id},
                {"model_id", model_id},
                {"raw", raw},
                {"extracted", extracted == kAbstain ? json("ABSTAIN") : json(choice_letter(extracted))},
                {"correct", correct},
                {"latency_ms", latency_ms},
                {"note", note}};
}

EvalRecord EvalRecord::from_json(const json& j) {
    EvalRecord r;
    r.item_id = j.at("item_id").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.raw = j.at("raw").get<std::string>();
    const json& ext = j.at("extracted");
    if (ext.is_string() && ext.get<std::string>() != "ABSTAIN") {
        r.extracted = ext.get<std::string>()[0] - 'A';
    } else {
        r.extracted = kAbstain;
    }
    r.correct = j.at("correct").get<bool>();
    r.latency_ms = j.value("latency_ms", 0.0);
    r.note = j.value("note", "");
    return r;
}

HttpModelClient::HttpModelClient(HttpClientConfig config) : config_(std::move(config)) {
    const std::string& url = config_.endpoint;
    std::string rest;
    if (url.rfind("http://", 0) == 0) {
        rest = url.substr(7);
    } else {
        throw ConfigError("endpoint must start with http:// (got '" + url + "')");
    }
    size_t slash = rest.find('/');
    std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
    path_ = slash == std::string::npos ? "/v1/chat/completions" : rest.substr(slash);
    size_t colon = hostport.find(':');
    if (colon == std::string::npos) {
        host_ = hostport;
        port_ = 80;
    } else {
        host_ = hostport.substr(0, colon);
        port_ = std::atoi(hostport.c_str() + colon + 1);
    }
    if (host_.empty() || port_ <= 0) throw ConfigError("bad endpoint '" + url + "'");
    if (config_.model.empty()) throw ConfigError("model name must not be empty");
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

std::string HttpModelClient::respond(const BenchmarkItem& item) {
    json body{{"model", config_.model},
              {"messages", json::array({json{{"role", "user"}, {"content", render_prompt(item)}}})},
              {"temperature", 0}};
    std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(config_.retry_backoff_ms * (1 << (attempt - 1))));
        }
        httplib::Client cli(host_, port_);
        cli.set_connection_timeout(config_.timeout_s, 0);
        cli.set_read_timeout(config_.timeout_s, 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto res = cli.Post(path_, headers, payload, "application/json");
        if (!res) {
            last_error = "transport error (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status == 401 || res->status == 403) {
            throw ConfigError("endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
        }
        if (res->status >= 500 || res->status == 429) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw StageError("endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body);
        }
        json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded()) throw StageError("endpoint returned invalid JSON");
        if (reply.contains("choices") && !reply["choices"].empty()) {
            const json& first = reply["choices"][0];
            if (first.contains("message") && first["message"].contains("content")) {
                return first["message"]["content"].get<std::string>();
            }
            if (first.contains("text")) return first["text"].get<std::string>();
        }
        throw StageError("endpoint reply carries no completion text");
    }
    throw StageError("request failed after retries: " + last_error);
}

FaithfulOracle::FaithfulOracle(SkillTable skills, ReductionTable rules,
                               std::map<std::string, PairingTemplate> templates)
    : skills_(std::move(skills)), rules_(std::move(rules)), templates_(std::move(templates)) {}

std::string FaithfulOracle::respond(const BenchmarkItem& item) {
    auto it = templates_.find(item.meta.pairing_id);
    if (it == templates_.end() || item.statements.empty()) return "";
    VerifyResult result = verify_soundness(item, skills_, rules_, it->second);
    if (result.implied.size() == 1) return choice_letter(result.implied[0]);
    return "";
}

std::string ParametricParrot::respond(const BenchmarkItem& item) {
    return choice_letter(item.meta.default_index);
}

std::string UniformRandomModel::respond(const BenchmarkItem& item) {
    Rng rng = Rng::substream(seed_, "mock/" + item.id);
    return choice_letter(static_cast<int>(rng.uniform(item.choices.size())));
}

std::vector<EvalRecord> run_eval(std::span<const BenchmarkItem> items, ModelClient& client,
                                 int concurrency) {
    std::vector<EvalRecord> records(items.size());
    std::atomic<size_t> next{0};
    std::atomic<bool> fatal{false};
    std::string fatal_message;
    std::mutex fatal_mutex;
    bool is_http = dynamic_cast<HttpModelClient*>(&client) != nullptr;

    auto run_one = [&](size_t i) {
        const BenchmarkItem& item = items[i];
        EvalRecord rec;
        rec.item_id = item.id;
        rec.model_id = client.model_id();
        auto t0 = std::chrono::steady_clock::now();
        try {
            rec.raw = client.respond(item);
        } catch (const ConfigError&) {
            throw;  // fatal: endpoint/auth misconfiguration
        } catch (const std::exception& e) {
            rec.extracted = kAbstain;
            rec.note = std::string("request failed: ") + e.what();
            records[i] = std::move(rec);
            return;
        }
        if (is_http) {
            rec.latency_ms = std::chrono::duration<double, std::milli>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
        }
        rec.extracted = extract_answer(rec.raw, item.choices);
        rec.correct = rec.extracted == item.gold_index;
        records[i] = std::move(rec);
    };

    int workers = std::max(1, concurrency);
    if (workers == 1 || items.size() <= 1) {
        for (size_t i = 0; i < items.size(); ++i) run_one(i);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                while (!fatal.load()) {
                    size_t i = next.fetch_add(1);
                    if (i >= items.size()) return;
                    try {
                        run_one(i);
                    } catch (const std::exception& e) {
                        std::lock_guard<std::mutex> lock(fatal_mutex);
                        fatal = true;
                        if (fatal_message.empty()) fatal_message = e.what();
                        return;
                    }
                }
            });
        }
        for (std::thread& t : pool) t.join();
        if (fatal) throw ConfigError(fatal_message);
    }
    return records;
}

double wald_se(double p, size_t n) {
    if (n == 0) throw StructuralError("wald_se: n must be positive");
    return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

namespace {

struct StratumKey {
    std::string kind;
    std::string variant;
    int n = -1;
    int d = -1;
    bool operator<(const StratumKey& o) const {
        return std::tie(kind, variant, n, d) < std::tie(o.kind, o.variant, o.n, o.d);
    }
};

struct Accumulator {
    std::map<std::string, std::pair<size_t, size_t>> per_pairing;  // pairing -> (correct, total)
    size_t correct = 0;
    size_t total = 0;
    size_t abstain = 0;
};

}  // namespace

std::vector<StratumStats> stratify(std::span<const EvalRecord> records,
                                   std::span<const BenchmarkItem> items) {
    std::map<std::string, const BenchmarkItem*> by_id;
    for (const BenchmarkItem& item : items) by_id[item.id] = &item;

    std::map<StratumKey, Accumulator> acc;
    for (const EvalRecord& rec : records) {
        auto it = by_id.find(rec.item_id);
        if (it == by_id.end()) {
            throw StructuralError("stratify: record for unknown item '" + rec.item_id + "'");
        }
        const BenchmarkItem& item = *it->second;
        const std::string& v = item.meta.variant;
        std::vector<StratumKey> keys;
        keys.push_back({"overall", v, -1, -1});
        if (v != "baseline") {
            keys.push_back({"by_n", v, item.meta.n, -1});
            keys.push_back({"by_d", v, -1, item.meta.d});
            keys.push_back({"by_nd", v, item.meta.n, item.meta.d});
        }
        for (const StratumKey& key : keys) {
            Accumulator& a = acc[key];
            auto& pairing = a.per_pairing[item.meta.pairing_id];
            pairing.first += rec.correct ? 1 : 0;
            pairing.second += 1;
            a.correct += rec.correct ? 1 : 0;
            a.total += 1;
            a.abstain += rec.extracted == kAbstain ? 1 : 0;
        }
    }

    std::vector<StratumStats> out;
    for (const auto& [key, a] : acc) {
        StratumStats s;
        s.kind = key.kind;
        s.variant = key.variant;
        s.n = key.n;
        s.d = key.d;
        double sum = 0.0;
        for (const auto& [pairing, counts] : a.per_pairing) {
            (void)pairing;
            sum += static_cast<double>(counts.first) / static_cast<double>(counts.second);
        }
        s.num_pairings = a.per_pairing.size();
        s.num_items = a.total;
        s.accuracy = sum / static_cast<double>(s.num_pairings);
        s.se = wald_se(s.accuracy, s.num_pairings);
        s.item_accuracy = static_cast<double>(a.correct) / static_cast<double>(a.total);
        s.item_se = wald_se(s.item_accuracy, a.total);
        s.abstain_rate = static_cast<double>(a.abstain) / static_cast<double>(a.total);
        out.push_back(std::move(s));
    }
    return out;  // map iteration is already (kind, variant, n, d) sorted
}

void emit_report(std::span<const StratumStats> stats, const std::filesystem::path& dir) {
    if (stats.empty()) throw StructuralError("emit_report: no strata to report");
    std::filesystem::create_directories(dir);

    std::string table =
        "kind\tvariant\tn\td\taccuracy\twald_se\tnum_pairings\tnum_items\titem_accuracy\titem_se\t"
        "abstain_rate\n";
    for (const StratumStats& s : stats) {
        table += s.kind + "\t" + s.variant + "\t" + std::to_string(s.n) + "\t" + std::to_string(s.d) +
                 "\t" + fmt_double(s.accuracy) + "\t" + fmt_double(s.se) + "\t" +
                 std::to_string(s.num_pairings) + "\t" + std::to_string(s.num_items) + "\t" +
                 fmt_double(s.item_accuracy) + "\t" + fmt_double(s.item_se) + "\t" +
                 fmt_double(s.abstain_rate) + "\n";
    }
    write_text_file(dir / "strata.tsv", table);

    // Plot-ready series for the three panels: accuracy vs hops, accuracy vs
    // distractors, and the hop x distractor interaction.
    std::string plot = "panel\tseries\tx\ty\tse\n";
    for (const StratumStats& s : stats) {
        if (s.kind == "by_n") {
            plot += "hops\t" + s.variant + "\t" + std::to_string(s.n) + "\t" + fmt_double(s.accuracy) +
                    "\t" + fmt_double(s.se) + "\n";
        }
    }
    for (const StratumStats& s : stats) {
        if (s.kind == "by_d") {
            plot += "distractors\t" + s.variant + "\t" + std::to_string(s.d) + "\t" +
                    fmt_double(s.accuracy) + "\t" + fmt_double(s.se) + "\n";
        }
    }
    for (const StratumStats& s : stats) {
        if (s.kind == "by_nd") {
            plot += "interaction\t" + s.variant + "/d=" + std::to_string(s.d) + "\t" +
                    std::to_string(s.n) + "\t" + fmt_double(s.accuracy) + "\t" + fmt_double(s.se) + "\n";
        }
    }
    write_text_file(dir / "plotdata.tsv", plot);
}

std::vector<StratumStats> parse_strata_tsv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string(), "cannot open");
    std::vector<StratumStats> out;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        if (fields.size() != 11) throw ConfigError(path.string() + ": bad strata row '" + line + "'");
        StratumStats s;
        s.kind = fields[0];
        s.variant = fields[1];
        s.n = std::stoi(fields[2]);
        s.d = std::stoi(fields[3]);
        s.accuracy = std::stod(fields[4]);
        s.se = std::stod(fields[5]);
        s.num_pairings = std::stoull(fields[6]);
        s.num_items = std::stoull(fields[7]);
        s.item_accuracy = std::stod(fields[8]);
        s.item_se = std::stod(fields[9]);
        s.abstain_rate = std::stod(fields[10]);
        out.push_back(std::move(s));
    }
    return out;
}

std::unique_ptr<ModelClient> make_mock_model(const std::string& name, std::uint64_t seed,
                                             const SkillTable& skills, const ReductionTable& rules,
                                             std::span<const PairingTemplate> templates) {
    if (name == "oracle") {
        std::map<std::string, PairingTemplate> by_id;
        for (const PairingTemplate& t : templates) by_id[t.id] = t;
        return std::make_unique<FaithfulOracle>(skills, rules, std::move(by_id));
    }
    if (name == "parrot") return std::make_unique<ParametricParrot>();
    if (name == "random") return std::make_unique<UniformRandomModel>(seed);
    throw ConfigError("unknown mock model '" + name + "' (expected oracle|parrot|random)");
}

}  // namespace afbench
