#include "doctest.h"

#include <sstream>

#include "afbench/errors.hpp"
#include "afbench/kb_store.hpp"
#include "afbench/rng.hpp"
#include "afbench/strings.hpp"
#include "test_support.hpp"

using namespace afbench;
namespace tt = afbench::testing;

TEST_SUITE_BEGIN("kb");

namespace {

// 20-assertion synthetic store reused by the brute-force comparisons.
const char* kSmallWorld = R"(Near	lamp	desk
Near	lamp	shelf
Near	mug	desk
Near	mug	sink
Near	plant	shelf
Near	plant	window
Near	rug	floor
Near	chair	desk
Near	chair	rug
Near	book	shelf
Inside	page	book
Inside	book	shelf
Inside	mug	cupboard
Inside	spoon	mug
Inside	plant	pot
Inside	pot	shelf
Inside	lamp	office
Inside	desk	office
Inside	chair	office
Inside	rug	office
)";

}  // namespace

TEST_CASE("conceptnet lines normalize terms and parse weights") {
    std::string line =
        "/a/[x]\t/r/AtLocation\t/c/en/instrument\t/c/en/music_store\t{\"weight\": 2.0}\n";
    std::istringstream in(line);
    IngestOptions options;
    AssertionStore store = AssertionStore::ingest(in, DumpFormat::ConceptNetCsv, options);
    CHECK(store.size() == 1);
    CHECK(store.contains("AtLocation", "instrument", "music store"));
    CHECK(store.assertions("AtLocation")[0].weight == doctest::Approx(2.0));
}

TEST_CASE("empty stream is an error") {
    std::istringstream in("");
    IngestOptions options;
    CHECK_THROWS_AS(AssertionStore::ingest(in, DumpFormat::Tsv, options), ConfigError);
}

TEST_CASE("duplicates collapse and off-language lines are filtered") {
    // 10 data lines: 2 duplicates and 1 off-language leave 7 assertions.
    std::string dump;
    dump += "/a/1\t/r/IsA\t/c/en/whale\t/c/en/mammal\t{\"weight\": 1.0}\n";
    dump += "/a/2\t/r/IsA\t/c/en/whale\t/c/en/mammal\t{\"weight\": 3.5}\n";  // dup, higher weight
    dump += "/a/3\t/r/IsA\t/c/en/trout\t/c/en/fish\t{}\n";
    dump += "/a/4\t/r/IsA\t/c/fr/baleine\t/c/fr/mammifere\t{}\n";  // off-language
    dump += "/a/5\t/r/AtLocation\t/c/en/Lamp\t/c/en/desk\t{}\n";
    dump += "/a/6\t/r/AtLocation\t/c/en/lamp\t/c/en/desk\t{}\n";  // dup after normalization
    dump += "/a/7\t/r/AtLocation\t/c/en/mug\t/c/en/kitchen_sink\t{}\n";
    dump += "/a/8\t/r/Causes\t/c/en/rain\t/c/en/wet_grass\t{}\n";
    dump += "/a/9\t/r/Causes\t/c/en/fire\t/c/en/smoke\t{}\n";
    dump += "/a/10\t/r/UsedFor\t/c/en/pen\t/c/en/writing\t{}\n";
    std::istringstream in(dump);
    IngestOptions options;
    IngestReport report;
    AssertionStore store = AssertionStore::ingest(in, DumpFormat::ConceptNetCsv, options, &report);
    CHECK(store.size() == 7);
    CHECK(report.duplicates == 2);
    CHECK(report.filtered == 1);
    CHECK(report.malformed.empty());
    // Max weight kept on the duplicate.
    CHECK(store.lookup("IsA", Slot::Start, "whale")[0]->weight == doctest::Approx(3.5));
    CHECK(store.contains("AtLocation", "mug", "kitchen sink"));
}

TEST_CASE("relation allowlist filters everything else") {
    IngestReport report;
    AssertionStore store = tt::store_from_tsv("Near\ta\tb\nOther\tc\td\n", {"Near"}, &report);
    CHECK(store.size() == 1);
    CHECK(report.filtered == 1);
}

TEST_CASE("malformed lines are reported and skipped, strict mode aborts") {
    std::string dump = "Near\ta\tb\nbroken line without tabs\nNear\tc\td\n";
    {
        std::istringstream in(dump);
        IngestOptions options;
        IngestReport report;
        AssertionStore store = AssertionStore::ingest(in, DumpFormat::Tsv, options, &report);
        CHECK(store.size() == 2);
        REQUIRE(report.malformed.size() == 1);
        CHECK(report.malformed[0].line_no == 2);
    }
    {
        std::istringstream in(dump);
        IngestOptions options;
        options.strict = true;
        CHECK_THROWS_AS(AssertionStore::ingest(in, DumpFormat::Tsv, options), ConfigError);
    }
}

TEST_CASE("tsv comments and optional weights") {
    AssertionStore store = tt::store_from_tsv("# comment\nNear\ta\tb\t2.25\n");
    CHECK(store.size() == 1);
    CHECK(store.assertions("Near")[0].weight == doctest::Approx(2.25));
}

TEST_CASE("anti-factual candidates") {
    SUBCASE("absent pairs qualify") {
        AssertionStore store = tt::store_from_tsv("IsA\twhale\tmammal\nIsA\tfish\ttrout_kind\n");
        auto candidates = store.anti_factual_candidates("IsA", "fish", Slot::Start);
        // mammal is attested for whale but not for fish.
        CHECK(std::find(candidates.begin(), candidates.end(), "mammal") != candidates.end());
        CHECK(std::find(candidates.begin(), candidates.end(), "trout kind") == candidates.end());
    }
    SUBCASE("full factual coverage leaves nothing") {
        AssertionStore store = tt::store_from_tsv("IsA\tfish\ta\nIsA\tfish\tb\nIsA\tother\ta\n");
        CHECK(store.anti_factual_candidates("IsA", "fish", Slot::Start).empty());
    }
    SUBCASE("unknown relation is an error") {
        AssertionStore store = tt::store_from_tsv("IsA\ta\tb\n");
        CHECK_THROWS_AS(store.anti_factual_candidates("Ghost", "a", Slot::Start), StructuralError);
    }
    SUBCASE("seed term itself is excluded") {
        AssertionStore store = tt::store_from_tsv("Near\ta\tb\nNear\tb\tc\n");
        auto candidates = store.anti_factual_candidates("Near", "b", Slot::Start);
        CHECK(std::find(candidates.begin(), candidates.end(), "b") == candidates.end());
    }
}

TEST_CASE("anti-factual candidates equal a brute-force scan") {
    AssertionStore store = tt::store_from_tsv(kSmallWorld);
    for (const std::string& relation : store.relations()) {
        std::set<std::string> terms;
        for (const Assertion& a : store.assertions(relation)) {
            terms.insert(a.start);
            terms.insert(a.end);
        }
        terms.insert("outsider");
        for (const std::string& seed : terms) {
            for (Slot slot : {Slot::Start, Slot::End}) {
                // Brute force: scan every assertion, apply the two conditions.
                std::set<std::string> expected;
                for (const Assertion& a : store.assertions(relation)) {
                    if (slot == Slot::Start) {
                        if (a.start != seed && a.end != seed &&
                            !store.contains(relation, seed, a.end)) {
                            expected.insert(a.end);
                        }
                    } else {
                        if (a.end != seed && a.start != seed &&
                            !store.contains(relation, a.start, seed)) {
                            expected.insert(a.start);
                        }
                    }
                }
                auto got = store.anti_factual_candidates(relation, seed, slot);
                CHECK(std::vector<std::string>(expected.begin(), expected.end()) == got);
            }
        }
    }
}

TEST_CASE("anti-factual purity: returned candidates never co-occur with the seed") {
    AssertionStore store = tt::store_from_tsv(kSmallWorld);
    for (const std::string& relation : store.relations()) {
        for (const std::string& seed : store.term_pool(relation, Slot::Start)) {
            for (const std::string& y : store.anti_factual_candidates(relation, seed, Slot::Start)) {
                CHECK_FALSE(store.contains(relation, seed, y));
            }
        }
    }
}

TEST_CASE("intersect_candidates") {
    CHECK(intersect_candidates({{"a", "b", "c"}}) == std::vector<std::string>{"a", "b", "c"});
    CHECK(intersect_candidates({{"a", "b"}, {"b", "c"}}) == std::vector<std::string>{"b"});
    CHECK(intersect_candidates({{"a"}, {"b"}}).empty());
    CHECK_THROWS_AS(intersect_candidates({}), StructuralError);

    // Three seed constraints on the small world match a brute-force filter.
    AssertionStore store = tt::store_from_tsv(kSmallWorld);
    auto s1 = store.anti_factual_candidates("Near", "lamp", Slot::Start);
    auto s2 = store.anti_factual_candidates("Near", "mug", Slot::Start);
    auto s3 = store.anti_factual_candidates("Inside", "spoon", Slot::Start);
    auto got = intersect_candidates({s1, s2, s3});
    std::vector<std::string> expected;
    std::set<std::string> pool(s1.begin(), s1.end());
    for (const std::string& t : pool) {
        bool in2 = std::find(s2.begin(), s2.end(), t) != s2.end();
        bool in3 = std::find(s3.begin(), s3.end(), t) != s3.end();
        if (in2 && in3) expected.push_back(t);
    }
    CHECK(got == expected);
}

TEST_CASE("index and membership agree on sampled assertions") {
    AssertionStore store = tt::store_from_tsv(kSmallWorld);
    Rng rng(11);
    std::vector<const Assertion*> all;
    for (const std::string& relation : store.relations()) {
        for (const Assertion& a : store.assertions(relation)) all.push_back(&a);
    }
    for (int i = 0; i < 1000; ++i) {
        const Assertion* a = all[rng.uniform(all.size())];
        CHECK(store.contains(a->relation, a->start, a->end));
        auto by_start = store.lookup(a->relation, Slot::Start, a->start);
        CHECK(std::any_of(by_start.begin(), by_start.end(),
                          [&](const Assertion* p) { return p->end == a->end; }));
        auto by_end = store.lookup(a->relation, Slot::End, a->end);
        CHECK(std::any_of(by_end.begin(), by_end.end(),
                          [&](const Assertion* p) { return p->start == a->start; }));
    }
}

TEST_CASE("ingest is idempotent") {
    AssertionStore a = tt::store_from_tsv(kSmallWorld);
    AssertionStore b = tt::store_from_tsv(kSmallWorld);
    REQUIRE(a.relations() == b.relations());
    for (const std::string& relation : a.relations()) {
        const auto& av = a.assertions(relation);
        const auto& bv = b.assertions(relation);
        REQUIRE(av.size() == bv.size());
        for (size_t i = 0; i < av.size(); ++i) {
            CHECK(av[i].start == bv[i].start);
            CHECK(av[i].end == bv[i].end);
        }
    }
}

TEST_CASE("candidate sets are sorted for reproducible downstream sampling") {
    AssertionStore store = tt::store_from_tsv(kSmallWorld);
    auto candidates = store.anti_factual_candidates("Near", "lamp", Slot::Start);
    CHECK(std::is_sorted(candidates.begin(), candidates.end()));
}

TEST_CASE("binary cache round-trips and rejects a stale checksum") {
    auto dir = tt::fresh_tmp_dir("kb_cache");
    AssertionStore store = tt::store_from_tsv(kSmallWorld);
    store.save_cache(dir / "store.bin", 0xABCDEF);

    auto loaded = AssertionStore::load_cache(dir / "store.bin", 0xABCDEF);
    REQUIRE(loaded.has_value());
    CHECK(loaded->size() == store.size());
    CHECK(loaded->relations() == store.relations());
    for (const std::string& relation : store.relations()) {
        for (const Assertion& a : store.assertions(relation)) {
            CHECK(loaded->contains(relation, a.start, a.end));
        }
    }
    CHECK_FALSE(AssertionStore::load_cache(dir / "store.bin", 0x123456).has_value());
    CHECK_FALSE(AssertionStore::load_cache(dir / "missing.bin", 0xABCDEF).has_value());
}

TEST_CASE("term normalization") {
    CHECK(normalize_term("/c/en/music_store/n") == "music store");
    CHECK(normalize_term("Water  Molecule") == "water molecule");
    CHECK(normalize_term("  the_planet ") == "the planet");
    CHECK(normalize_relation("/r/AtLocation") == "AtLocation");
    CHECK(uri_language("/c/fr/chat") == "fr");
}

TEST_SUITE_END();
