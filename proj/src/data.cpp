#include "pmem/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace pmem {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string two_digits(int64_t v) {
    std::string s = std::to_string(v);
    return s.size() < 2 ? "0" + s : s;
}

}  // namespace

std::vector<DomainSpec> default_domain_specs(int64_t n_domains, uint64_t seed, int64_t n_train,
                                             int64_t n_valid, int64_t n_test) {
    if (n_domains < 1) fail("data", "need at least one domain, got ", n_domains);
    std::vector<std::string> shared;
    for (int64_t i = 0; i < 50; ++i) shared.push_back("sf_" + two_digits(i));

    std::vector<DomainSpec> specs;
    for (int64_t k = 0; k < n_domains; ++k) {
        DomainSpec s;
        s.name = "d" + std::to_string(k);
        for (int64_t i = 0; i < 2; ++i) {
            s.markers_a.push_back(s.name + "_a" + std::to_string(i));
            s.markers_b.push_back(s.name + "_b" + std::to_string(i));
        }
        s.shared_markers_a = {"sa_0", "sa_1"};
        s.shared_markers_b = {"sb_0", "sb_1"};
        for (int64_t i = 0; i < 30; ++i) s.private_fillers.push_back(s.name + "_f" + two_digits(i));
        s.shared_fillers = shared;
        // One label semantics across domains (the genres share a task); the
        // permutation stays available for deliberately conflicting domains.
        s.permutation = {0, 1, 2};
        s.n_train = n_train;
        s.n_valid = n_valid;
        s.n_test = n_test;
        s.seed = derive_seed(seed, "domain", static_cast<uint64_t>(k));
        specs.push_back(std::move(s));
    }
    return specs;
}

int base_class_of(const std::vector<std::string>& tokens, const DomainSpec& spec) {
    auto in = [](const std::vector<std::string>& set, const std::string& t) {
        return std::find(set.begin(), set.end(), t) != set.end();
    };
    int64_t count_a = 0, first_a = -1, first_b = -1;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (in(spec.markers_a, tokens[i]) || in(spec.shared_markers_a, tokens[i])) {
            ++count_a;
            if (first_a < 0) first_a = static_cast<int64_t>(i);
        } else if (in(spec.markers_b, tokens[i]) || in(spec.shared_markers_b, tokens[i])) {
            if (first_b < 0) first_b = static_cast<int64_t>(i);
        }
    }
    if (first_a < 0 || first_b < 0)
        fail("data", "sequence lacks a marker of each type in domain ", spec.name);
    if (count_a % 2 == 1) return 2;
    return first_a < first_b ? 0 : 1;
}

namespace {

void check_spec(const DomainSpec& s) {
    if (s.name.empty()) fail("data", "domain spec without a name");
    if ((s.markers_a.empty() && s.shared_markers_a.empty()) ||
        (s.markers_b.empty() && s.shared_markers_b.empty()))
        fail("data", "domain ", s.name, " needs markers of both types");
    std::set<std::string> as(s.markers_a.begin(), s.markers_a.end());
    as.insert(s.shared_markers_a.begin(), s.shared_markers_a.end());
    for (const auto& t : s.markers_b)
        if (as.count(t)) fail("data", "token '", t, "' is both marker types in ", s.name);
    for (const auto& t : s.shared_markers_b)
        if (as.count(t)) fail("data", "token '", t, "' is both marker types in ", s.name);
    if (s.private_fillers.empty()) fail("data", "domain ", s.name, " needs private fillers");
    std::set<std::string> all_markers = as;
    all_markers.insert(s.markers_b.begin(), s.markers_b.end());
    all_markers.insert(s.shared_markers_b.begin(), s.shared_markers_b.end());
    for (const auto& t : s.private_fillers)
        if (all_markers.count(t)) fail("data", "filler '", t, "' is also a marker in ", s.name);
    for (const auto& t : s.shared_fillers)
        if (all_markers.count(t)) fail("data", "filler '", t, "' is also a marker in ", s.name);
    if (s.len_min < 5 || s.len_max < s.len_min)
        fail("data", "domain ", s.name, " has a bad length range [", s.len_min, ", ", s.len_max,
             "]");
    if (s.permutation.size() != 3) fail("data", "domain ", s.name, " permutation must cover 3 classes");
    std::set<int> perm(s.permutation.begin(), s.permutation.end());
    if (perm != std::set<int>{0, 1, 2})
        fail("data", "domain ", s.name, " permutation is not a permutation of {0,1,2}");
    if (s.n_train < 1 || s.n_valid < 1 || s.n_test < 1)
        fail("data", "domain ", s.name, " needs nonzero split sizes");
}

const std::string& pick(const std::vector<std::string>& v, Rng& rng) {
    return v[static_cast<size_t>(rng.below(v.size()))];
}

std::vector<std::string> make_sequence(const DomainSpec& spec, int target_label, Rng& rng) {
    int base = 0;
    for (int b = 0; b < 3; ++b)
        if (spec.permutation[static_cast<size_t>(b)] == target_label) base = b;

    int64_t len = spec.len_min + static_cast<int64_t>(
                                     rng.below(static_cast<uint64_t>(spec.len_max - spec.len_min + 1)));
    // count_a <= 3 and count_b <= 2 always fit because len_min >= 5.
    int64_t count_a = base == 2 ? (rng.below(2) == 0 ? 1 : 3) : 2;
    int64_t count_b = 1 + static_cast<int64_t>(rng.below(2));

    // Marker positions: a partial Fisher-Yates over all slots.
    std::vector<int64_t> slots(static_cast<size_t>(len));
    for (int64_t i = 0; i < len; ++i) slots[static_cast<size_t>(i)] = i;
    rng.shuffle(slots);
    std::vector<int64_t> marker_pos(slots.begin(), slots.begin() + count_a + count_b);
    std::sort(marker_pos.begin(), marker_pos.end());

    // Type assignment; for base 0/1 the earliest marker's type is pinned.
    std::vector<int> types(static_cast<size_t>(count_a), 0);
    types.insert(types.end(), static_cast<size_t>(count_b), 1);
    rng.shuffle(types);
    if (base == 0 && types.front() != 0) {
        auto it = std::find(types.begin(), types.end(), 0);
        std::iter_swap(types.begin(), it);
    } else if (base == 1 && types.front() != 1) {
        auto it = std::find(types.begin(), types.end(), 1);
        std::iter_swap(types.begin(), it);
    }

    // Surface forms: a fair coin between the shared and the private pool keeps
    // the rule anchored on cross-domain tokens while every sequence still
    // carries domain-specific vocabulary.
    std::vector<std::string> tokens(static_cast<size_t>(len));
    auto pool = [&](int type) -> const std::vector<std::string>& {
        const auto& priv = type == 0 ? spec.markers_a : spec.markers_b;
        const auto& shar = type == 0 ? spec.shared_markers_a : spec.shared_markers_b;
        if (priv.empty()) return shar;
        if (shar.empty()) return priv;
        return rng.below(2) == 0 ? shar : priv;
    };
    for (size_t m = 0; m < marker_pos.size(); ++m)
        tokens[static_cast<size_t>(marker_pos[m])] = pick(pool(types[m]), rng);
    for (auto& t : tokens)
        if (t.empty())
            t = spec.shared_fillers.empty() || rng.below(2) == 1 ? pick(spec.private_fillers, rng)
                                                                 : pick(spec.shared_fillers, rng);
    return tokens;
}

std::string joined(const std::vector<std::string>& tokens) {
    std::string s;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) s += ' ';
        s += tokens[i];
    }
    return s;
}

std::vector<Example> gen_split(const DomainSpec& spec, int64_t count, Rng& rng,
                               std::unordered_set<std::string>& seen) {
    std::vector<Example> out;
    for (int64_t i = 0; i < count; ++i) {
        int target = static_cast<int>(i % 3);
        std::vector<std::string> tokens;
        int attempts = 0;
        for (;;) {
            tokens = make_sequence(spec, target, rng);
            int base = base_class_of(tokens, spec);
            if (spec.permutation[static_cast<size_t>(base)] != target)
                fail("data", "internal: generated sequence does not satisfy its target class");
            if (seen.insert(joined(tokens)).second) break;
            if (++attempts > 1000)
                fail("data", "cannot generate ", count, " distinct sequences for domain ",
                     spec.name, "; enlarge the length range or vocabulary");
        }
        Example ex;
        ex.tokens = std::move(tokens);
        ex.label = task_labels()[static_cast<size_t>(target)];
        ex.domain = spec.name;
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace

std::vector<GeneratedDomain> gen_synthetic(const std::vector<DomainSpec>& specs) {
    if (specs.empty()) fail("data", "no domain specs given");
    std::set<std::string> all_private;
    for (const DomainSpec& s : specs) {
        check_spec(s);
        std::vector<std::string> priv = s.markers_a;
        priv.insert(priv.end(), s.markers_b.begin(), s.markers_b.end());
        priv.insert(priv.end(), s.private_fillers.begin(), s.private_fillers.end());
        for (const auto& t : priv)
            if (!all_private.insert(t).second)
                fail("data", "private token '", t, "' appears in more than one domain");
    }
    for (const DomainSpec& s : specs) {
        std::vector<std::string> shared = s.shared_markers_a;
        shared.insert(shared.end(), s.shared_markers_b.begin(), s.shared_markers_b.end());
        shared.insert(shared.end(), s.shared_fillers.begin(), s.shared_fillers.end());
        for (const auto& t : shared)
            if (all_private.count(t))
                fail("data", "shared token '", t, "' collides with a domain-private token");
    }

    std::vector<GeneratedDomain> out;
    for (const DomainSpec& s : specs) {
        Rng rng(s.seed);
        std::unordered_set<std::string> seen;
        GeneratedDomain g;
        g.name = s.name;
        g.train = gen_split(s, s.n_train, rng, seen);
        g.valid = gen_split(s, s.n_valid, rng, seen);
        g.test = gen_split(s, s.n_test, rng, seen);
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<Example> load_jsonl(const std::string& path, VocabMap& vocab, VocabBuild mode,
                                const std::vector<std::string>* allowed_labels) {
    std::ifstream f(path);
    if (!f) fail("data", "cannot open '", path, "'");
    std::vector<Example> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail("data", path, ":", lineno, ": bad JSON: ", e.what());
        }
        Example ex;
        try {
            const json& text = j.at("text");
            if (text.is_string()) {
                std::string s = text.get<std::string>();
                std::string tok;
                for (char c : s) {
                    if (c == ' ' || c == '\t') {
                        if (!tok.empty()) ex.tokens.push_back(std::move(tok)), tok.clear();
                    } else {
                        tok += c;
                    }
                }
                if (!tok.empty()) ex.tokens.push_back(std::move(tok));
            } else if (text.is_array()) {
                ex.tokens = text.get<std::vector<std::string>>();
            } else {
                fail("data", path, ":", lineno, ": text must be a string or token array");
            }
            ex.label = j.at("label").get<std::string>();
            ex.domain = j.value("domain", std::string("default"));
        } catch (const json::exception& e) {
            fail("data", path, ":", lineno, ": ", e.what());
        }
        if (ex.tokens.empty()) fail("data", path, ":", lineno, ": empty token sequence");
        if (allowed_labels &&
            std::find(allowed_labels->begin(), allowed_labels->end(), ex.label) ==
                allowed_labels->end())
            fail("data", path, ":", lineno, ": unknown label '", ex.label, "'");
        if (mode == VocabBuild::kExtend)
            for (const auto& t : ex.tokens) vocab.add(t);
        out.push_back(std::move(ex));
    }
    return out;
}

void write_jsonl(const std::vector<Example>& examples, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail("data", "cannot open '", path, "' for writing");
    for (const Example& ex : examples) {
        json j;
        std::string text;
        for (size_t i = 0; i < ex.tokens.size(); ++i) {
            if (i) text += ' ';
            text += ex.tokens[i];
        }
        j["text"] = text;
        j["label"] = ex.label;
        j["domain"] = ex.domain;
        f << j.dump() << '\n';
    }
    if (!f) fail("data", "short write to '", path, "'");
}

namespace {

json spec_to_json(const DomainSpec& s) {
    json j;
    j["name"] = s.name;
    j["markers_a"] = s.markers_a;
    j["markers_b"] = s.markers_b;
    j["shared_markers_a"] = s.shared_markers_a;
    j["shared_markers_b"] = s.shared_markers_b;
    j["private_fillers"] = s.private_fillers;
    j["shared_fillers"] = s.shared_fillers;
    j["permutation"] = s.permutation;
    j["len_min"] = s.len_min;
    j["len_max"] = s.len_max;
    j["n_train"] = s.n_train;
    j["n_valid"] = s.n_valid;
    j["n_test"] = s.n_test;
    j["seed"] = s.seed;
    return j;
}

DomainSpec spec_from_json(const json& j) {
    DomainSpec s;
    s.name = j.at("name").get<std::string>();
    s.markers_a = j.at("markers_a").get<std::vector<std::string>>();
    s.markers_b = j.at("markers_b").get<std::vector<std::string>>();
    s.shared_markers_a = j.value("shared_markers_a", std::vector<std::string>{});
    s.shared_markers_b = j.value("shared_markers_b", std::vector<std::string>{});
    s.private_fillers = j.at("private_fillers").get<std::vector<std::string>>();
    s.shared_fillers = j.at("shared_fillers").get<std::vector<std::string>>();
    s.permutation = j.at("permutation").get<std::vector<int>>();
    s.len_min = j.at("len_min").get<int64_t>();
    s.len_max = j.at("len_max").get<int64_t>();
    s.n_train = j.at("n_train").get<int64_t>();
    s.n_valid = j.at("n_valid").get<int64_t>();
    s.n_test = j.at("n_test").get<int64_t>();
    s.seed = j.at("seed").get<uint64_t>();
    return s;
}

}  // namespace

void write_dataset(const std::vector<GeneratedDomain>& domains,
                   const std::vector<DomainSpec>& specs, uint64_t seed,
                   const std::string& root) {
    fs::create_directories(root);
    json manifest;
    manifest["seed"] = seed;
    manifest["labels"] = task_labels();
    manifest["domains"] = json::array();
    for (const DomainSpec& s : specs) manifest["domains"].push_back(spec_to_json(s));
    {
        std::ofstream f(fs::path(root) / "manifest.json", std::ios::trunc);
        if (!f) fail("data", "cannot write manifest under '", root, "'");
        f << manifest.dump(2) << '\n';
    }
    for (const GeneratedDomain& d : domains) {
        fs::path dir = fs::path(root) / d.name;
        fs::create_directories(dir);
        write_jsonl(d.train, (dir / "train.jsonl").string());
        write_jsonl(d.valid, (dir / "valid.jsonl").string());
        write_jsonl(d.test, (dir / "test.jsonl").string());
    }
}

DatasetInfo read_manifest(const std::string& root) {
    std::ifstream f(fs::path(root) / "manifest.json");
    if (!f) fail("data", "no manifest.json under '", root, "'");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        fail("data", "bad manifest under '", root, "': ", e.what());
    }
    DatasetInfo info;
    info.root = root;
    try {
        info.seed = j.at("seed").get<uint64_t>();
        info.labels = j.at("labels").get<std::vector<std::string>>();
        for (const json& s : j.at("domains")) info.specs.push_back(spec_from_json(s));
    } catch (const json::exception& e) {
        fail("data", "bad manifest under '", root, "': ", e.what());
    }
    return info;
}

std::vector<Example> load_split(const DatasetInfo& info, const std::string& domain,
                                const std::string& split, VocabMap& vocab, VocabBuild mode) {
    fs::path path = fs::path(info.root) / domain / (split + ".jsonl");
    return load_jsonl(path.string(), vocab, mode, &info.labels);
}

std::vector<LabeledIds> to_ids(const std::vector<Example>& examples, const VocabMap& vocab,
                               const std::vector<std::string>& labels) {
    std::vector<LabeledIds> out;
    out.reserve(examples.size());
    for (const Example& ex : examples) {
        LabeledIds li;
        li.ids = tokens_to_ids(vocab, ex.tokens);
        auto it = std::find(labels.begin(), labels.end(), ex.label);
        if (it == labels.end()) fail("data", "label '", ex.label, "' not in the task's label set");
        li.label = it - labels.begin();
        out.push_back(std::move(li));
    }
    return out;
}

std::vector<std::string> domain_token_set(const DomainSpec& spec) {
    std::vector<std::string> out = spec.markers_a;
    out.insert(out.end(), spec.markers_b.begin(), spec.markers_b.end());
    out.insert(out.end(), spec.shared_markers_a.begin(), spec.shared_markers_a.end());
    out.insert(out.end(), spec.shared_markers_b.begin(), spec.shared_markers_b.end());
    out.insert(out.end(), spec.private_fillers.begin(), spec.private_fillers.end());
    out.insert(out.end(), spec.shared_fillers.begin(), spec.shared_fillers.end());
    return out;
}

}  // namespace pmem
