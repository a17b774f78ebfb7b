#include "pmem/ida.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <utility>

#include <nlohmann/json.hpp>

#include "pmem/checkpoint.hpp"

namespace pmem {

IdaMethod ida_method_from_string(const std::string& s) {
    if (s == "mem_expand") return IdaMethod::kMemExpand;
    if (s == "finetune_only") return IdaMethod::kFinetuneOnly;
    if (s == "mem_expand_frozen") return IdaMethod::kMemExpandFrozen;
    if (s == "hidden_expand") return IdaMethod::kHiddenExpand;
    if (s == "multitask") return IdaMethod::kMultitask;
    if (s == "ewc") return IdaMethod::kEwc;
    fail("config", "unknown adaptation method '", s, "'");
}

std::string ida_method_to_string(IdaMethod m) {
    switch (m) {
        case IdaMethod::kMemExpand: return "mem_expand";
        case IdaMethod::kFinetuneOnly: return "finetune_only";
        case IdaMethod::kMemExpandFrozen: return "mem_expand_frozen";
        case IdaMethod::kHiddenExpand: return "hidden_expand";
        case IdaMethod::kMultitask: return "multitask";
        case IdaMethod::kEwc: return "ewc";
    }
    return "?";
}

std::string MethodSpec::tag() const {
    std::string t = ida_method_to_string(method);
    if (vocab_expand) t += "+vocab";
    return t;
}

void DomainSchedule::validate() const {
    if (entries.empty()) fail("config", "schedule needs at least one domain");
    std::set<std::string> seen;
    for (const ScheduleEntry& e : entries) {
        if (e.domain.empty()) fail("config", "schedule entry without a domain name");
        if (!seen.insert(e.domain).second)
            fail("config", "domain '", e.domain, "' appears twice in the schedule");
        if (e.slots_to_add < 0)
            fail("config", "slots_to_add must be >= 0 for domain '", e.domain, "'");
        if (e.epochs < 0) fail("config", "epochs must be >= 0 for domain '", e.domain, "'");
        if (e.patience < 1) fail("config", "patience must be >= 1 for domain '", e.domain, "'");
    }
}

void expand_vocab(Model& model, const std::vector<std::string>& new_tokens, Rng& rng) {
    if (new_tokens.empty()) return;
    std::set<std::string> batch;
    for (const std::string& t : new_tokens) {
        if (model.vocab.contains(t))
            fail("config", "token '", t, "' is already in the vocabulary");
        if (!batch.insert(t).second)
            fail("config", "token '", t, "' appears twice in the expansion list");
    }
    for (const std::string& t : new_tokens) model.vocab.add(t);
    grow_embedding_rows(model, model.vocab.size(), rng);
}

namespace {

int64_t cell_param_count(CellKind kind, int64_t in, int64_t d) {
    switch (kind) {
        case CellKind::kVanilla: return d * in + d * d + d;
        case CellKind::kGru: return 3 * d * in + 2 * d * d + d * d + 3 * d;
        case CellKind::kLstm: return 4 * d * in + 4 * d * d + 4 * d;
    }
    return 0;
}

}  // namespace

int64_t count_params(const ModelConfig& cfg, int64_t vocab_size, int64_t slots) {
    int64_t in = cfg.embed_dim + (cfg.use_bank ? cfg.hidden_dim : 0);
    int64_t total = vocab_size * cfg.embed_dim;
    total += 2 * cell_param_count(cfg.cell, in, cfg.hidden_dim);
    if (cfg.use_bank) total += 2 * slots * cfg.hidden_dim;
    total += cfg.n_classes * 2 * cfg.hidden_dim + cfg.n_classes;
    return total;
}

ParityResult param_parity(const Model& model, int64_t m_slots) {
    if (m_slots < 0) fail("config", "slot count must be >= 0, got ", m_slots);
    ParityResult r;
    int64_t slot_dim = model.bank ? model.bank->dim() : model.cfg.hidden_dim;
    r.mem_added = 2 * m_slots * slot_dim;
    if (m_slots == 0) return r;
    int64_t slots = model.bank ? model.bank->slots() : 0;
    int64_t vocab = model.vocab.size();
    int64_t base = count_params(model.cfg, vocab, slots);
    int64_t e = 0;
    for (;;) {
        ModelConfig grown = model.cfg;
        grown.hidden_dim += e + 1;
        if (count_params(grown, vocab, slots) - base > r.mem_added) break;
        ++e;
    }
    r.d_extra = e;
    ModelConfig grown = model.cfg;
    grown.hidden_dim += e;
    r.hidden_added = count_params(grown, vocab, slots) - base;
    return r;
}

namespace {

using ColMap = std::function<int64_t(int64_t)>;

int64_t identity_col(int64_t c) { return c; }

// Old gate block g occupies rows [g*rows_old, g*rows_old + rows_old) in src
// and rows [g*rows_new, g*rows_new + rows_old) in dst.
void copy_gate_blocks(const Tensor& src, Tensor& dst, int64_t gates, int64_t rows_old,
                      int64_t rows_new, const ColMap& col_map) {
    int64_t cols_old = src.shape[1];
    for (int64_t g = 0; g < gates; ++g)
        for (int64_t r = 0; r < rows_old; ++r)
            for (int64_t c = 0; c < cols_old; ++c)
                dst.at(g * rows_new + r, col_map(c)) = src.at(g * rows_old + r, c);
}

void copy_gate_bias(const Tensor& src, Tensor& dst, int64_t gates, int64_t rows_old,
                    int64_t rows_new) {
    for (int64_t g = 0; g < gates; ++g)
        for (int64_t r = 0; r < rows_old; ++r)
            dst.at(g * rows_new + r) = src.at(g * rows_old + r);
}

void copy_cell_blocks(const RnnCell& src, RnnCell& dst, int64_t d_old, int64_t d_new) {
    int64_t ih_gates = 1, hh_gates = 1;
    switch (src.kind) {
        case CellKind::kVanilla: break;
        case CellKind::kGru: ih_gates = 3; hh_gates = 2; break;
        case CellKind::kLstm: ih_gates = 4; hh_gates = 4; break;
    }
    // Input columns: embedding dims then bank-readout dims; readout growth
    // appends columns, so old columns keep their indices in both layouts.
    copy_gate_blocks(src.w_ih.value, dst.w_ih.value, ih_gates, d_old, d_new, identity_col);
    copy_gate_blocks(src.w_hh.value, dst.w_hh.value, hh_gates, d_old, d_new, identity_col);
    if (src.kind == CellKind::kGru)
        copy_gate_blocks(src.u_n.value, dst.u_n.value, 1, d_old, d_new, identity_col);
    copy_gate_bias(src.b.value, dst.b.value, ih_gates, d_old, d_new);
}

}  // namespace

Model expand_hidden(const Model& model, int64_t extra, Rng& rng) {
    if (extra < 0) fail("config", "hidden expansion must be >= 0, got ", extra);
    if (extra == 0) return model;
    int64_t d_old = model.cfg.hidden_dim;
    int64_t d_new = d_old + extra;
    ModelConfig cfg = model.cfg;
    cfg.hidden_dim = d_new;
    int64_t slots = model.bank ? model.bank->slots() : 0;

    Model grown = make_model(cfg, model.vocab, slots, rng);
    grown.embedding.value = model.embedding.value;
    copy_cell_blocks(model.fwd, grown.fwd, d_old, d_new);
    copy_cell_blocks(model.bwd, grown.bwd, d_old, d_new);
    if (model.bank) {
        // Key/value widths track the hidden width; old columns lead.
        copy_gate_blocks(model.bank->keys.value, grown.bank->keys.value, 1, slots, slots,
                         identity_col);
        copy_gate_blocks(model.bank->values.value, grown.bank->values.value, 1, slots, slots,
                         identity_col);
        grown.bank->domain_boundaries = model.bank->domain_boundaries;
    }
    // Head columns: [forward block | backward block] in both layouts.
    ColMap head_col = [&](int64_t c) { return c < d_old ? c : d_new + (c - d_old); };
    copy_gate_blocks(model.head.projection.value, grown.head.projection.value, 1,
                     model.cfg.n_classes, model.cfg.n_classes, head_col);
    grown.head.bias.value = model.head.bias.value;
    return grown;
}

std::string run_record_to_json(const RunRecord& rec) {
    nlohmann::json j;
    j["method"] = ida_method_to_string(rec.method.method);
    j["vocab_expand"] = rec.method.vocab_expand;
    j["ewc_lambda"] = rec.method.ewc_lambda;
    j["seed"] = rec.seed;
    j["incremental"] = rec.incremental;
    j["domains"] = rec.domains;
    j["matrix"] = {{"row_labels", rec.matrix.row_labels},
                   {"col_labels", rec.matrix.col_labels},
                   {"cells", rec.matrix.cells}};
    j["stages"] = nlohmann::json::array();
    for (const StageRecord& s : rec.stages)
        j["stages"].push_back({{"domain", s.domain},
                               {"epochs_run", s.train.epochs_run},
                               {"best_valid_acc", s.train.best_valid_acc},
                               {"final_train_loss", s.train.final_train_loss},
                               {"slots_after", s.slots_after},
                               {"hidden_after", s.hidden_after},
                               {"vocab_after", s.vocab_after},
                               {"checkpoint", s.checkpoint_path}});
    return j.dump(2);
}

RunRecord run_record_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail("config", "run record is not valid JSON: ", e.what());
    }
    RunRecord rec;
    try {
        rec.method.method = ida_method_from_string(j.at("method").get<std::string>());
        rec.method.vocab_expand = j.at("vocab_expand").get<bool>();
        rec.method.ewc_lambda = j.value("ewc_lambda", 1.0);
        rec.seed = j.at("seed").get<uint64_t>();
        rec.incremental = j.at("incremental").get<bool>();
        rec.domains = j.at("domains").get<std::vector<std::string>>();
        const auto& m = j.at("matrix");
        rec.matrix.row_labels = m.at("row_labels").get<std::vector<std::string>>();
        rec.matrix.col_labels = m.at("col_labels").get<std::vector<std::string>>();
        rec.matrix.cells = m.at("cells").get<std::vector<std::vector<double>>>();
        for (const auto& s : j.at("stages")) {
            StageRecord st;
            st.domain = s.at("domain").get<std::string>();
            st.train.epochs_run = s.at("epochs_run").get<int64_t>();
            st.train.best_valid_acc = s.at("best_valid_acc").get<double>();
            st.train.final_train_loss = s.at("final_train_loss").get<double>();
            st.slots_after = s.at("slots_after").get<int64_t>();
            st.hidden_after = s.at("hidden_after").get<int64_t>();
            st.vocab_after = s.at("vocab_after").get<int64_t>();
            st.checkpoint_path = s.value("checkpoint", std::string());
            rec.stages.push_back(std::move(st));
        }
    } catch (const nlohmann::json::exception& e) {
        fail("config", "run record misses a field: ", e.what());
    }
    return rec;
}

namespace {

std::vector<std::string> sorted_unseen_tokens(const std::vector<Example>& examples,
                                              const VocabMap& vocab) {
    std::set<std::string> uniq;
    for (const Example& ex : examples)
        for (const std::string& t : ex.tokens)
            if (!vocab.contains(t)) uniq.insert(t);
    return {uniq.begin(), uniq.end()};
}

const std::vector<std::string>& effective_labels(const RunConfig& config) {
    const std::vector<std::string>& labels =
        config.class_labels.empty() ? task_labels() : config.class_labels;
    if (static_cast<int64_t>(labels.size()) != config.model.n_classes)
        fail("config", "model has ", config.model.n_classes, " classes but ", labels.size(),
             " labels were given");
    return labels;
}

std::vector<double> eval_all(Model& model, const std::vector<std::vector<Example>>& tests,
                             const std::vector<std::string>& labels) {
    std::vector<double> row;
    row.reserve(tests.size());
    for (const std::vector<Example>& t : tests)
        row.push_back(100.0 * accuracy(model, to_ids(t, model.vocab, labels)));
    return row;
}

std::vector<std::vector<Example>> collect_test_splits(const DomainSchedule& schedule,
                                                      const DomainProvider& provider) {
    std::vector<std::vector<Example>> tests;
    for (const ScheduleEntry& e : schedule.entries) {
        DomainDataset ds = provider(e.domain);
        if (ds.test.empty()) fail("data", "domain '", e.domain, "' provided no test data");
        tests.push_back(std::move(ds.test));
    }
    return tests;
}

void split_ids(const std::vector<LabeledIds>& in, std::vector<std::vector<int32_t>>& ids,
               std::vector<int64_t>& labels) {
    for (const LabeledIds& ex : in) {
        ids.push_back(ex.ids);
        labels.push_back(ex.label);
    }
}

std::string stage_checkpoint(Model& model, const RunConfig& config,
                             const std::vector<std::string>& labels,
                             const std::vector<std::string>& history, size_t stage) {
    if (config.out_dir.empty()) return {};
    std::filesystem::create_directories(config.out_dir);
    std::string path = config.out_dir + "/stage_" + std::to_string(stage) + ".pmem";
    CheckpointExtras extras;
    extras.labels = labels;
    extras.domain_history = history;
    extras.seed = config.seed;
    extras.method = config.method.tag();
    save_checkpoint(model, extras, path);
    return path;
}

void write_run_record(const RunRecord& rec, const RunConfig& config) {
    if (config.out_dir.empty()) return;
    std::string path = config.out_dir + "/run.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("io", "cannot write ", path);
    out << run_record_to_json(rec) << "\n";
    if (!out.good()) fail("io", "short write to ", path);
}

}  // namespace

RunRecord run_schedule(const DomainSchedule& schedule, const DomainProvider& provider,
                       const RunConfig& config, Model* final_model) {
    schedule.validate();
    if (config.method.method == IdaMethod::kMultitask)
        fail("config",
             "multitask needs every domain's training data at once; use run_multitask");
    if (config.batch_size < 1) fail("config", "batch_size must be >= 1");
    const std::vector<std::string>& labels = effective_labels(config);

    RunRecord rec;
    rec.method = config.method;
    rec.seed = config.seed;
    rec.incremental = true;
    for (const ScheduleEntry& e : schedule.entries) rec.domains.push_back(e.domain);
    rec.matrix.col_labels = rec.domains;

    // Test splits for every scheduled domain are held for evaluation; each
    // domain's train/valid splits are fetched only when that domain starts
    // and dropped when it ends.
    std::vector<std::vector<Example>> tests = collect_test_splits(schedule, provider);

    Model model;
    EwcState ewc;
    ewc.lambda = config.method.ewc_lambda;
    bool have_anchor = false;
    std::vector<std::string> history;

    for (size_t k = 0; k < schedule.entries.size(); ++k) {
        const ScheduleEntry& entry = schedule.entries[k];
        DomainDataset ds = provider(entry.domain);
        if (ds.train.empty() || ds.valid.empty())
            fail("data", "domain '", entry.domain, "' provided no train/valid data");
        history.push_back(entry.domain);

        FreezeMask freeze;
        bool use_freeze = false;

        if (k == 0) {
            VocabMap vocab = VocabMap::with_reserved();
            for (const std::string& t : sorted_unseen_tokens(ds.train, vocab)) vocab.add(t);
            Rng init_rng(derive_seed(config.seed, "init"));
            model = make_model(config.model, std::move(vocab), entry.slots_to_add, init_rng);
        } else {
            // Pre-expansion sizes define the frozen region: growth appends
            // rows, so "everything that existed" is a leading prefix.
            std::unordered_map<std::string, int64_t> pre_sizes;
            for (Parameter* p : model.parameters()) pre_sizes[p->name] = p->value.numel();

            Rng expand_rng(derive_seed(config.seed, "expand", k));
            if (config.method.vocab_expand)
                expand_vocab(model, sorted_unseen_tokens(ds.train, model.vocab), expand_rng);

            switch (config.method.method) {
                case IdaMethod::kMemExpand:
                case IdaMethod::kMemExpandFrozen:
                    if (!model.bank)
                        fail("config", "memory expansion needs a model with a bank");
                    expand(*model.bank, entry.slots_to_add, expand_rng);
                    break;
                case IdaMethod::kHiddenExpand: {
                    ParityResult parity = param_parity(model, entry.slots_to_add);
                    model = expand_hidden(model, parity.d_extra, expand_rng);
                    if (model.bank) expand(*model.bank, 0, expand_rng);
                    break;
                }
                case IdaMethod::kFinetuneOnly:
                case IdaMethod::kEwc:
                    if (model.bank) expand(*model.bank, 0, expand_rng);
                    break;
                case IdaMethod::kMultitask:
                    break;  // rejected above
            }

            if (config.method.method == IdaMethod::kMemExpandFrozen) {
                for (const auto& [name, numel] : pre_sizes) freeze.frozen_prefix[name] = numel;
                use_freeze = true;
            }
        }

        std::vector<LabeledIds> train_ids = to_ids(ds.train, model.vocab, labels);
        std::vector<LabeledIds> valid_ids = to_ids(ds.valid, model.vocab, labels);

        TrainOptions opts;
        opts.epochs = entry.epochs;
        opts.patience = entry.patience;
        opts.batch_size = config.batch_size;
        opts.adam = config.adam;
        Rng train_rng(derive_seed(config.seed, "train", k));
        const EwcState* ewc_arg =
            (config.method.method == IdaMethod::kEwc && have_anchor) ? &ewc : nullptr;
        TrainResult tr = train_domain(model, train_ids, valid_ids, opts, train_rng,
                                      use_freeze ? &freeze : nullptr, ewc_arg);

        if (config.method.method == IdaMethod::kEwc) {
            Rng fisher_rng(derive_seed(config.seed, "fisher", k));
            std::vector<std::vector<int32_t>> ids;
            std::vector<int64_t> lab;
            split_ids(train_ids, ids, lab);
            int64_t n = std::min<int64_t>(config.fisher_samples,
                                          static_cast<int64_t>(train_ids.size()));
            ewc.fisher = compute_fisher(model, ids, lab, n, fisher_rng);
            ewc.anchor.clear();
            for (Parameter* p : model.parameters()) ewc.anchor.push_back(p->value);
            have_anchor = true;
        }

        StageRecord stage;
        stage.domain = entry.domain;
        stage.train = tr;
        stage.slots_after = model.bank ? model.bank->slots() : 0;
        stage.hidden_after = model.cfg.hidden_dim;
        stage.vocab_after = model.vocab.size();
        stage.checkpoint_path = stage_checkpoint(model, config, labels, history, k);
        rec.stages.push_back(std::move(stage));

        rec.matrix.row_labels.push_back("after " + entry.domain);
        rec.matrix.cells.push_back(eval_all(model, tests, labels));
    }

    write_run_record(rec, config);
    if (final_model) *final_model = std::move(model);
    return rec;
}

namespace {

std::string comparison_to_csv(const MethodComparison& c, const std::string& name_a,
                              const std::string& name_b) {
    std::ostringstream os;
    os << "# comparison," << name_a << "," << name_b << "\n";
    os << "stage,domain,mean_a,mean_b,diff,p_greater,p_less\n";
    os << std::fixed << std::setprecision(4);
    for (size_t r = 0; r < c.mean_a.size(); ++r)
        for (size_t k = 0; k < c.mean_a[r].size(); ++k) {
            if (c.mean_a[r][k] < 0.0) continue;
            os << c.row_labels[r] << "," << c.col_labels[k] << "," << c.mean_a[r][k] << ","
               << c.mean_b[r][k] << "," << c.mean_a[r][k] - c.mean_b[r][k] << ","
               << c.p_greater[r][k] << "," << c.p_less[r][k] << "\n";
        }
    return os.str();
}

}  // namespace

std::string render_report(const std::vector<RunRecord>& runs, const std::string& format) {
    if (format != "csv" && format != "markdown")
        fail("config", "report format must be csv or markdown, got '", format, "'");
    if (runs.empty()) fail("config", "report needs at least one run");
    bool md = format == "markdown";

    const std::vector<std::string>& domains = runs.front().matrix.col_labels;
    for (const RunRecord& r : runs)
        if (r.matrix.col_labels != domains)
            fail("config", "runs do not share the domain set; cannot compare them");

    // Group runs of one method (and flag combination) across seeds.
    std::map<std::string, std::vector<const RunRecord*>> groups;
    for (const RunRecord& r : runs) {
        std::string tag = r.method.tag();
        if (r.method.method == IdaMethod::kEwc) tag += cat("(lambda=", r.method.ewc_lambda, ")");
        if (!r.incremental) tag += " [non-incremental]";
        groups[tag].push_back(&r);
    }

    std::ostringstream os;
    std::map<std::string, std::vector<AccuracyMatrix>> per_seed;
    for (auto& [tag, members] : groups) {
        std::sort(members.begin(), members.end(),
                  [](const RunRecord* a, const RunRecord* b) { return a->seed < b->seed; });
        AccuracyMatrix mean = members.front()->matrix;
        for (auto& row : mean.cells) std::fill(row.begin(), row.end(), 0.0);
        for (const RunRecord* r : members) {
            if (r->matrix.row_labels != mean.row_labels)
                fail("config", "runs tagged '", tag, "' disagree on schedule stages");
            for (size_t i = 0; i < mean.cells.size(); ++i)
                for (size_t j = 0; j < mean.cells[i].size(); ++j)
                    mean.cells[i][j] += r->matrix.cells[i][j] / members.size();
            per_seed[tag].push_back(r->matrix);
        }
        if (md)
            os << "## " << tag << " (mean over " << members.size() << " seeds)\n\n"
               << matrix_to_markdown(mean) << "\n";
        else
            os << "# matrix," << tag << ",seeds=" << members.size() << "\n"
               << matrix_to_csv(mean) << "\n";
    }

    // Pairwise across-seed comparisons (each seed contributes one paired
    // observation per cell) for groups with matching seed sets.
    auto seeds_of = [](const std::vector<const RunRecord*>& v) {
        std::vector<uint64_t> s;
        for (const RunRecord* r : v) s.push_back(r->seed);
        return s;
    };
    for (auto it_a = groups.begin(); it_a != groups.end(); ++it_a) {
        for (auto it_b = std::next(it_a); it_b != groups.end(); ++it_b) {
            if (seeds_of(it_a->second) != seeds_of(it_b->second)) continue;
            if (it_a->second.front()->matrix.row_labels !=
                it_b->second.front()->matrix.row_labels)
                continue;
            MethodComparison cmp =
                compare_methods(per_seed[it_a->first], per_seed[it_b->first]);
            if (md)
                os << "## " << it_a->first << " vs " << it_b->first
                   << " (paired across seeds)\n\n"
                   << comparison_to_markdown(cmp, it_a->first, it_b->first) << "\n";
            else
                os << comparison_to_csv(cmp, it_a->first, it_b->first) << "\n";
        }
    }
    return os.str();
}

RunRecord run_multitask(const DomainSchedule& schedule, const DomainProvider& provider,
                        const RunConfig& config, Model* final_model) {
    schedule.validate();
    if (config.method.method != IdaMethod::kMultitask)
        fail("config", "run_multitask only accepts the multitask method");
    if (config.batch_size < 1) fail("config", "batch_size must be >= 1");
    const std::vector<std::string>& labels = effective_labels(config);

    // The sanctioned non-incremental path: all domains are loaded at once.
    std::vector<DomainDataset> all;
    std::vector<std::vector<Example>> tests;
    std::vector<Example> merged_train, merged_valid;
    int64_t total_slots = 0;
    for (const ScheduleEntry& e : schedule.entries) {
        DomainDataset ds = provider(e.domain);
        if (ds.train.empty() || ds.valid.empty() || ds.test.empty())
            fail("data", "domain '", e.domain, "' provided an empty split");
        merged_train.insert(merged_train.end(), ds.train.begin(), ds.train.end());
        merged_valid.insert(merged_valid.end(), ds.valid.begin(), ds.valid.end());
        tests.push_back(std::move(ds.test));
        total_slots += e.slots_to_add;
    }

    VocabMap vocab = VocabMap::with_reserved();
    for (const std::string& t : sorted_unseen_tokens(merged_train, vocab)) vocab.add(t);
    Rng init_rng(derive_seed(config.seed, "init"));
    Model model = make_model(config.model, std::move(vocab), total_slots, init_rng);

    std::vector<LabeledIds> train_ids = to_ids(merged_train, model.vocab, labels);
    std::vector<LabeledIds> valid_ids = to_ids(merged_valid, model.vocab, labels);

    TrainOptions opts;
    opts.epochs = schedule.entries.front().epochs;
    opts.patience = schedule.entries.front().patience;
    opts.batch_size = config.batch_size;
    opts.adam = config.adam;
    // One shuffled pass over the union per epoch: every batch is a uniform
    // random mixture of the domains.
    Rng train_rng(derive_seed(config.seed, "train", 0));
    TrainResult tr = train_domain(model, train_ids, valid_ids, opts, train_rng);

    RunRecord rec;
    rec.method = config.method;
    rec.seed = config.seed;
    rec.incremental = false;
    for (const ScheduleEntry& e : schedule.entries) rec.domains.push_back(e.domain);
    rec.matrix.col_labels = rec.domains;
    rec.matrix.row_labels.push_back("joint");
    rec.matrix.cells.push_back(eval_all(model, tests, labels));

    StageRecord stage;
    stage.domain = "joint";
    stage.train = tr;
    stage.slots_after = model.bank ? model.bank->slots() : 0;
    stage.hidden_after = model.cfg.hidden_dim;
    stage.vocab_after = model.vocab.size();
    std::vector<std::string> history = rec.domains;
    stage.checkpoint_path = stage_checkpoint(model, config, labels, history, 0);
    rec.stages.push_back(std::move(stage));

    write_run_record(rec, config);
    if (final_model) *final_model = std::move(model);
    return rec;
}

}  // namespace pmem
