#pragma once

#include <string>
#include <vector>

#include "pmem/train.hpp"
#include "pmem/vocab.hpp"

namespace pmem {

struct Example {
    std::vector<std::string> tokens;
    std::string label;
    std::string domain;
};

// Synthetic 3-class task. Every sequence contains marker tokens of two types
// (A and B) among filler tokens; each marker occurrence draws its surface
// form from a domain-private pool or a pool shared by all domains. The base
// class is:
//   count(A) odd            -> base 2
//   first A before first B  -> base 0
//   otherwise               -> base 1
// and the emitted label is L[permutation[base]]. Shared marker forms keep the
// rule learnable across domains while private forms (invisible without
// vocabulary expansion) make both zero-shot degradation and forgetting
// measurable. Labels are recomputable from the tokens alone given the spec,
// so Bayes accuracy is 100%.
struct DomainSpec {
    std::string name;
    std::vector<std::string> markers_a;         // domain-private A surface forms
    std::vector<std::string> markers_b;         // domain-private B surface forms
    std::vector<std::string> shared_markers_a;  // A forms common to all domains
    std::vector<std::string> shared_markers_b;
    std::vector<std::string> private_fillers;
    std::vector<std::string> shared_fillers;
    std::vector<int> permutation = {0, 1, 2};
    int64_t len_min = 6;
    int64_t len_max = 10;
    int64_t n_train = 2000;
    int64_t n_valid = 500;
    int64_t n_test = 500;
    uint64_t seed = 0;
};

inline const std::vector<std::string>& task_labels() {
    static const std::vector<std::string> labels = {"L0", "L1", "L2"};
    return labels;
}

std::vector<DomainSpec> default_domain_specs(int64_t n_domains, uint64_t seed,
                                             int64_t n_train = 2000, int64_t n_valid = 500,
                                             int64_t n_test = 500);

// The labeling rule, applied to an already-built token sequence.
int base_class_of(const std::vector<std::string>& tokens, const DomainSpec& spec);

struct GeneratedDomain {
    std::string name;
    std::vector<Example> train, valid, test;
};

std::vector<GeneratedDomain> gen_synthetic(const std::vector<DomainSpec>& specs);

enum class VocabBuild { kFrozen, kExtend };

// One JSON object per line with fields text (string or token array), label,
// domain. kExtend registers unseen tokens in the vocab; kFrozen leaves the
// vocab untouched (unknowns map to UNK at id-conversion time). When
// allowed_labels is given, any other label is rejected.
std::vector<Example> load_jsonl(const std::string& path, VocabMap& vocab, VocabBuild mode,
                                const std::vector<std::string>* allowed_labels = nullptr);

void write_jsonl(const std::vector<Example>& examples, const std::string& path);

// Directory layout: <root>/manifest.json plus <root>/<domain>/{train,valid,
// test}.jsonl.
void write_dataset(const std::vector<GeneratedDomain>& domains,
                   const std::vector<DomainSpec>& specs, uint64_t seed,
                   const std::string& root);

struct DatasetInfo {
    std::string root;
    uint64_t seed = 0;
    std::vector<std::string> labels;
    std::vector<DomainSpec> specs;
};
DatasetInfo read_manifest(const std::string& root);

std::vector<Example> load_split(const DatasetInfo& info, const std::string& domain,
                                const std::string& split, VocabMap& vocab, VocabBuild mode);

std::vector<LabeledIds> to_ids(const std::vector<Example>& examples, const VocabMap& vocab,
                               const std::vector<std::string>& labels);

// All tokens of a domain's generator vocabulary (markers, private fillers,
// shared fillers), in a fixed order.
std::vector<std::string> domain_token_set(const DomainSpec& spec);

}  // namespace pmem
