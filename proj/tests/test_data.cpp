// Synthetic benchmark generator: the labeling rule is re-derived here from
// scratch (parity + first-marker order) and every emitted sequence is checked
// against it, so generator and oracle agree or the test fails loudly.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "pmem/data.hpp"
#include "pmem/rng.hpp"

using namespace pmem;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "pmem_data_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

// Independent re-statement of the labeling rule.
int oracle_base(const std::vector<std::string>& tokens, const DomainSpec& spec) {
    std::set<std::string> as(spec.markers_a.begin(), spec.markers_a.end());
    as.insert(spec.shared_markers_a.begin(), spec.shared_markers_a.end());
    std::set<std::string> bs(spec.markers_b.begin(), spec.markers_b.end());
    bs.insert(spec.shared_markers_b.begin(), spec.shared_markers_b.end());
    int count_a = 0;
    int first_a = -1, first_b = -1;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (as.count(tokens[i])) {
            ++count_a;
            if (first_a < 0) first_a = static_cast<int>(i);
        } else if (bs.count(tokens[i])) {
            if (first_b < 0) first_b = static_cast<int>(i);
        }
    }
    REQUIRE(first_a >= 0);
    REQUIRE(first_b >= 0);
    if (count_a % 2 == 1) return 2;
    return first_a < first_b ? 0 : 1;
}

DomainSpec tiny_spec() {
    DomainSpec s;
    s.name = "d0";
    s.markers_a = {"pa"};
    s.markers_b = {"pb"};
    s.shared_markers_a = {"sa"};
    s.shared_markers_b = {"sb"};
    s.private_fillers = {"pf0", "pf1", "pf2"};
    s.shared_fillers = {"sf0", "sf1"};
    s.len_min = 6;
    s.len_max = 9;
    s.n_train = 30;
    s.n_valid = 9;
    s.n_test = 9;
    s.seed = 5;
    return s;
}

int label_index(const std::string& label) {
    const auto& labels = task_labels();
    auto it = std::find(labels.begin(), labels.end(), label);
    REQUIRE(it != labels.end());
    return static_cast<int>(it - labels.begin());
}

}  // namespace

TEST_CASE("base_class_of matches hand-worked sequences") {
    DomainSpec s = tiny_spec();
    // one A (odd) -> 2 regardless of order
    CHECK(base_class_of({"pf0", "pa", "pf1", "pb", "pf2", "pf0"}, s) == 2);
    CHECK(base_class_of({"pb", "pf0", "sa", "pf1", "pf0", "pf1"}, s) == 2);
    // two As, first A before first B -> 0
    CHECK(base_class_of({"pa", "pf0", "sa", "pb", "pf1", "pf2"}, s) == 0);
    // two As, B first -> 1
    CHECK(base_class_of({"pf0", "sb", "pa", "pf1", "sa", "pf2"}, s) == 1);
    // shared and private forms are interchangeable
    CHECK(base_class_of({"sa", "pf0", "pa", "sb", "pf1", "pf2"}, s) == 0);
    // missing a marker type is rejected
    CHECK_THROWS_AS(base_class_of({"pf0", "pa", "pf1", "sa", "pf2", "pf0"}, s), Error);
    CHECK_THROWS_AS(base_class_of({"pf0", "pf1", "pf2", "pf0", "pf1", "pf2"}, s), Error);
}

TEST_CASE("label permutation relabels but does not change sequences' base class") {
    DomainSpec s = tiny_spec();
    s.permutation = {2, 0, 1};
    auto domains = gen_synthetic({s});
    for (const Example& ex : domains[0].train) {
        int base = oracle_base(ex.tokens, s);
        CHECK(label_index(ex.label) == s.permutation[static_cast<size_t>(base)]);
    }
}

TEST_CASE("generated splits are balanced, deduplicated and label-faithful") {
    auto specs = default_domain_specs(2, 42, 120, 30, 30);
    auto domains = gen_synthetic(specs);
    REQUIRE(domains.size() == 2);

    for (size_t d = 0; d < domains.size(); ++d) {
        const DomainSpec& spec = specs[d];
        const GeneratedDomain& g = domains[d];
        CHECK(g.name == spec.name);
        CHECK(g.train.size() == 120);
        CHECK(g.valid.size() == 30);
        CHECK(g.test.size() == 30);

        std::unordered_set<std::string> seen;
        for (const auto* split : {&g.train, &g.valid, &g.test}) {
            int counts[3] = {0, 0, 0};
            for (const Example& ex : *split) {
                CHECK(ex.domain == spec.name);
                // label re-derivable from tokens alone: Bayes accuracy is 1
                int base = oracle_base(ex.tokens, spec);
                CHECK(label_index(ex.label) == spec.permutation[static_cast<size_t>(base)]);
                ++counts[label_index(ex.label)];
                CHECK(static_cast<int64_t>(ex.tokens.size()) >= spec.len_min);
                CHECK(static_cast<int64_t>(ex.tokens.size()) <= spec.len_max);
                std::string joined;
                for (const auto& t : ex.tokens) joined += t + " ";
                CHECK(seen.insert(joined).second);  // no duplicates across splits
            }
            // round-robin class targets: exact balance when size % 3 == 0
            CHECK(counts[0] == counts[1]);
            CHECK(counts[1] == counts[2]);
        }
    }
}

TEST_CASE("default specs share anchors and fillers but keep private pools disjoint") {
    auto specs = default_domain_specs(3, 7);
    REQUIRE(specs.size() == 3);
    std::unordered_set<std::string> private_union;
    for (const DomainSpec& s : specs) {
        CHECK(!s.markers_a.empty());
        CHECK(!s.markers_b.empty());
        CHECK(!s.shared_markers_a.empty());
        CHECK(!s.shared_fillers.empty());
        CHECK(s.permutation == std::vector<int>{0, 1, 2});
        for (const auto* pool : {&s.markers_a, &s.markers_b, &s.private_fillers})
            for (const std::string& t : *pool) CHECK(private_union.insert(t).second);
    }
    // shared pools are identical across domains
    CHECK(specs[0].shared_markers_a == specs[1].shared_markers_a);
    CHECK(specs[0].shared_fillers == specs[2].shared_fillers);
    for (const std::string& t : specs[0].shared_fillers) CHECK(!private_union.count(t));
    CHECK_THROWS_AS(default_domain_specs(0, 1), Error);
}

TEST_CASE("domain_token_set covers exactly the generator pools") {
    DomainSpec s = tiny_spec();
    auto toks = domain_token_set(s);
    std::unordered_set<std::string> got(toks.begin(), toks.end());
    CHECK(got.size() == toks.size());  // no repeats
    std::unordered_set<std::string> want;
    for (const auto* pool : {&s.markers_a, &s.markers_b, &s.shared_markers_a,
                             &s.shared_markers_b, &s.private_fillers, &s.shared_fillers})
        want.insert(pool->begin(), pool->end());
    CHECK(got == want);
}

TEST_CASE("bad specs are rejected") {
    auto expect_throw = [](DomainSpec s) { CHECK_THROWS_AS(gen_synthetic({s}), Error); };
    {
        DomainSpec s = tiny_spec();
        s.markers_a.clear();
        s.shared_markers_a.clear();  // no A forms at all
        expect_throw(s);
    }
    {
        DomainSpec s = tiny_spec();
        s.markers_b.push_back("pa");  // token is both marker types
        expect_throw(s);
    }
    {
        DomainSpec s = tiny_spec();
        s.shared_markers_b.push_back("sa");  // shared pools overlap
        expect_throw(s);
    }
    {
        DomainSpec s = tiny_spec();
        s.private_fillers.push_back("pb");  // filler collides with a marker
        expect_throw(s);
    }
    {
        DomainSpec s = tiny_spec();
        s.shared_fillers.push_back("sa");  // shared filler collides with a marker
        expect_throw(s);
    }
    {
        DomainSpec s = tiny_spec();
        s.private_fillers.clear();
        expect_throw(s);
    }
    {
        DomainSpec s = tiny_spec();
        s.len_min = 3;  // too short to force both marker types reliably
        expect_throw(s);
    }
    {
        DomainSpec s = tiny_spec();
        s.len_max = 5;  // inverted range
        expect_throw(s);
    }
    {
        DomainSpec s = tiny_spec();
        s.permutation = {0, 1, 1};
        expect_throw(s);
    }
    {
        DomainSpec s = tiny_spec();
        s.n_valid = 0;
        expect_throw(s);
    }
    {
        // cross-domain private collision
        DomainSpec a = tiny_spec();
        DomainSpec b = tiny_spec();
        b.name = "d1";
        CHECK_THROWS_AS(gen_synthetic({a, b}), Error);
    }
    {
        // shared pool colliding with another domain's private pool
        DomainSpec a = tiny_spec();
        DomainSpec b = tiny_spec();
        b.name = "d1";
        b.markers_a = {"qa"};
        b.markers_b = {"qb"};
        b.private_fillers = {"qf0", "sf9"};
        b.shared_fillers = {"sf9"};
        a.shared_fillers = {"sf9"};
        CHECK_THROWS_AS(gen_synthetic({a, b}), Error);
    }
    CHECK_THROWS_AS(gen_synthetic({}), Error);
    // exhausting the distinct-sequence budget
    {
        DomainSpec s = tiny_spec();
        s.shared_markers_a.clear();
        s.shared_markers_b.clear();
        s.private_fillers = {"pf0"};
        s.shared_fillers.clear();
        s.len_min = 6;
        s.len_max = 6;
        s.n_train = 100000;  // far beyond the combinatorial budget of one filler
        CHECK_THROWS_AS(gen_synthetic({s}), Error);
    }
}

TEST_CASE("generation is deterministic in the spec seed") {
    DomainSpec s = tiny_spec();
    auto a = gen_synthetic({s});
    auto b = gen_synthetic({s});
    REQUIRE(a[0].train.size() == b[0].train.size());
    for (size_t i = 0; i < a[0].train.size(); ++i) {
        CHECK(a[0].train[i].tokens == b[0].train[i].tokens);
        CHECK(a[0].train[i].label == b[0].train[i].label);
    }
    s.seed = 6;
    auto c = gen_synthetic({s});
    bool any_diff = false;
    for (size_t i = 0; i < a[0].train.size(); ++i)
        any_diff = any_diff || a[0].train[i].tokens != c[0].train[i].tokens;
    CHECK(any_diff);
}

TEST_CASE("jsonl round trip preserves examples; frozen vs extend vocab modes") {
    DomainSpec s = tiny_spec();
    auto domains = gen_synthetic({s});
    fs::path path = scratch_dir() / "split.jsonl";
    write_jsonl(domains[0].valid, path.string());

    VocabMap frozen = VocabMap::with_reserved();
    frozen.add("pa");
    auto labels = task_labels();
    auto back = load_jsonl(path.string(), frozen, VocabBuild::kFrozen, &labels);
    REQUIRE(back.size() == domains[0].valid.size());
    for (size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].tokens == domains[0].valid[i].tokens);
        CHECK(back[i].label == domains[0].valid[i].label);
        CHECK(back[i].domain == domains[0].valid[i].domain);
    }
    CHECK(frozen.size() == 3);  // <pad>, <unk>, pa: kFrozen never grows

    VocabMap grown = VocabMap::with_reserved();
    load_jsonl(path.string(), grown, VocabBuild::kExtend, &labels);
    std::unordered_set<std::string> content;
    for (const Example& ex : back) content.insert(ex.tokens.begin(), ex.tokens.end());
    CHECK(grown.size() == static_cast<int64_t>(content.size()) + 2);
    for (const std::string& t : content) CHECK(grown.contains(t));

    // unknown tokens become UNK under a frozen vocab
    auto ids = to_ids(back, frozen, labels);
    REQUIRE(ids.size() == back.size());
    for (size_t i = 0; i < ids.size(); ++i) {
        REQUIRE(ids[i].ids.size() == back[i].tokens.size());
        CHECK(ids[i].label == label_index(back[i].label));
        for (size_t j = 0; j < ids[i].ids.size(); ++j) {
            int32_t want = back[i].tokens[j] == "pa" ? frozen.lookup("pa") : VocabMap::kUnk;
            CHECK(ids[i].ids[j] == want);
        }
    }
}

TEST_CASE("load_jsonl accepts text strings, rejects bad rows") {
    fs::path path = scratch_dir() / "hand.jsonl";
    {
        std::ofstream f(path);
        f << R"({"text": "pa x pb", "label": "L1", "domain": "d9"})" << "\n";
        f << "\n";  // blank lines are skipped
        f << R"({"text": ["pb", "pa"], "label": "L0", "domain": "d9"})" << "\n";
    }
    VocabMap vocab = VocabMap::with_reserved();
    auto rows = load_jsonl(path.string(), vocab, VocabBuild::kExtend);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].tokens == std::vector<std::string>{"pa", "x", "pb"});
    CHECK(rows[1].tokens == std::vector<std::string>{"pb", "pa"});
    CHECK(rows[0].label == "L1");
    CHECK(rows[0].domain == "d9");

    auto bad = [&](const std::string& line) {
        fs::path p = scratch_dir() / "bad.jsonl";
        std::ofstream f(p);
        f << line << "\n";
        f.close();
        VocabMap v = VocabMap::with_reserved();
        auto labels = task_labels();
        CHECK_THROWS_AS(load_jsonl(p.string(), v, VocabBuild::kExtend, &labels), Error);
    };
    bad("{not json");
    bad(R"({"text": "a b", "label": "L7", "domain": "d"})");   // unknown label
    bad(R"({"text": 3, "label": "L0", "domain": "d"})");       // wrong text type
    bad(R"({"text": "", "label": "L0", "domain": "d"})");      // empty sequence
    bad(R"({"label": "L0", "domain": "d"})");                  // missing text
    CHECK_THROWS_AS(load_jsonl((scratch_dir() / "no.jsonl").string(), vocab,
                               VocabBuild::kExtend),
                    Error);
}

TEST_CASE("dataset directory round trips through its manifest") {
    auto specs = default_domain_specs(2, 9, 30, 9, 9);
    auto domains = gen_synthetic(specs);
    fs::path root = scratch_dir() / "dataset";
    write_dataset(domains, specs, 9, root.string());

    DatasetInfo info = read_manifest(root.string());
    CHECK(info.seed == 9);
    CHECK(info.labels == task_labels());
    REQUIRE(info.specs.size() == 2);
    for (size_t d = 0; d < 2; ++d) {
        CHECK(info.specs[d].name == specs[d].name);
        CHECK(info.specs[d].markers_a == specs[d].markers_a);
        CHECK(info.specs[d].shared_markers_a == specs[d].shared_markers_a);
        CHECK(info.specs[d].shared_markers_b == specs[d].shared_markers_b);
        CHECK(info.specs[d].private_fillers == specs[d].private_fillers);
        CHECK(info.specs[d].shared_fillers == specs[d].shared_fillers);
        CHECK(info.specs[d].permutation == specs[d].permutation);
        CHECK(info.specs[d].seed == specs[d].seed);
    }

    VocabMap vocab = VocabMap::with_reserved();
    auto train = load_split(info, specs[1].name, "train", vocab, VocabBuild::kExtend);
    REQUIRE(train.size() == domains[1].train.size());
    for (size_t i = 0; i < train.size(); ++i) CHECK(train[i].tokens == domains[1].train[i].tokens);

    CHECK_THROWS_AS(load_split(info, "no_such_domain", "train", vocab, VocabBuild::kFrozen),
                    Error);
    CHECK_THROWS_AS(load_split(info, specs[0].name, "no_such_split", vocab, VocabBuild::kFrozen),
                    Error);
    CHECK_THROWS_AS(read_manifest((scratch_dir() / "missing").string()), Error);
}

TEST_CASE("to_ids validates labels") {
    VocabMap vocab = VocabMap::with_reserved();
    vocab.add("pa");
    Example ex;
    ex.tokens = {"pa"};
    ex.label = "not_a_label";
    CHECK_THROWS_AS(to_ids({ex}, vocab, task_labels()), Error);
}
