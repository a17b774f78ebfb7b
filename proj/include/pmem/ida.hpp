#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pmem/data.hpp"
#include "pmem/model.hpp"
#include "pmem/stats.hpp"
#include "pmem/train.hpp"

namespace pmem {

// Adaptation strategy for a sequential domain run. `mem_expand` grows the
// slot bank before each new domain; `hidden_expand` grows the hidden state at
// parameter parity with the slots it was asked to add; `multitask` trains on
// all domains jointly and is not incremental.
enum class IdaMethod {
    kMemExpand,
    kFinetuneOnly,
    kMemExpandFrozen,
    kHiddenExpand,
    kMultitask,
    kEwc,
};

IdaMethod ida_method_from_string(const std::string& s);
std::string ida_method_to_string(IdaMethod m);

struct MethodSpec {
    IdaMethod method = IdaMethod::kMemExpand;
    bool vocab_expand = false;
    double ewc_lambda = 1.0;  // only read by kEwc

    std::string tag() const;  // e.g. "mem_expand+vocab"
};

struct ScheduleEntry {
    std::string domain;
    int64_t slots_to_add = 32;  // first entry: initial bank size
    int64_t epochs = 8;
    int64_t patience = 3;
};

struct DomainSchedule {
    std::vector<ScheduleEntry> entries;
    void validate() const;
};

struct DomainDataset {
    std::vector<Example> train;
    std::vector<Example> valid;
    std::vector<Example> test;
};

// Hands run_schedule one domain's splits at a time; training data for earlier
// domains is never re-requested, only their test splits are kept for the
// evaluation matrix.
using DomainProvider = std::function<DomainDataset(const std::string& domain)>;

// Appends rows for tokens not yet in the vocabulary. Existing rows and ids
// are untouched; duplicate entries inside new_tokens are rejected.
void expand_vocab(Model& model, const std::vector<std::string>& new_tokens, Rng& rng);

// Grows the hidden state by `extra`. Old weights keep their original gate
// blocks (stacked-gate matrices are remapped block by block, not copied as a
// flat prefix); blocks touching new state dimensions take fresh
// initialization. Bank key/value widths follow the hidden width. extra == 0
// returns the model bitwise unchanged without consuming randomness.
Model expand_hidden(const Model& model, int64_t extra, Rng& rng);

struct ParityResult {
    int64_t d_extra = 0;
    int64_t mem_added = 0;     // parameters a bank expansion by M slots adds
    int64_t hidden_added = 0;  // parameters the chosen d_extra adds
};

// Widest hidden expansion whose added parameter count does not exceed the
// count added by M new slots. Exact equality is usually impossible; both
// counts are reported.
ParityResult param_parity(const Model& model, int64_t m_slots);

// Total learnable scalars for a hypothetical model shape; the basis for
// param_parity and for parity assertions in tests.
int64_t count_params(const ModelConfig& cfg, int64_t vocab_size, int64_t slots);

struct StageRecord {
    std::string domain;
    TrainResult train;
    int64_t slots_after = 0;
    int64_t hidden_after = 0;
    int64_t vocab_after = 0;
    std::string checkpoint_path;  // empty when checkpoints are not written
};

struct RunRecord {
    MethodSpec method;
    uint64_t seed = 0;
    bool incremental = true;
    std::vector<std::string> domains;
    AccuracyMatrix matrix;  // rows: after each stage; cols: test accuracy (percent)
    std::vector<StageRecord> stages;
};

std::string run_record_to_json(const RunRecord& rec);
RunRecord run_record_from_json(const std::string& text);

struct RunConfig {
    ModelConfig model;
    MethodSpec method;
    AdamConfig adam;
    int64_t batch_size = 32;
    int64_t fisher_samples = 200;
    std::vector<std::string> class_labels;  // empty -> task_labels()
    uint64_t seed = 0;
    std::string out_dir;  // empty -> keep everything in memory
};

// Sequential adaptation over the schedule: the first domain trains from
// scratch, every later domain first expands (memory, vocabulary, or hidden
// state, per method), then trains on that domain only. After each domain the
// model is evaluated on every domain's test split (later columns are
// zero-shot at earlier stages). Multitask is rejected here; see
// run_multitask.
RunRecord run_schedule(const DomainSchedule& schedule, const DomainProvider& provider,
                       const RunConfig& config, Model* final_model = nullptr);

// Joint training over all listed domains with uniformly interleaved batches.
// The model starts with the union vocabulary and the full slot budget; the
// record carries a single stage row and is flagged non-incremental.
RunRecord run_multitask(const DomainSchedule& schedule, const DomainProvider& provider,
                        const RunConfig& config, Model* final_model = nullptr);

// Renders per-method mean accuracy matrices plus, when several methods share
// the same seed set, pairwise across-seed Wilcoxon comparisons. format is
// "csv" or "markdown"; both carry the same numbers, markdown adds
// significance arrows. Runs must share the domain set.
std::string render_report(const std::vector<RunRecord>& runs, const std::string& format);

}  // namespace pmem
