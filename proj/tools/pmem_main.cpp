#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "pmem/checkpoint.hpp"
#include "pmem/data.hpp"
#include "pmem/gradcheck.hpp"
#include "pmem/ida.hpp"
#include "pmem/model.hpp"
#include "pmem/theory.hpp"

namespace {

using nlohmann::json;

json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) pmem::fail("io", "cannot open ", path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        pmem::fail("config", path, " is not valid JSON: ", e.what());
    }
}

pmem::ModelConfig model_config_from_json(const json& j) {
    pmem::ModelConfig cfg;
    cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
    cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
    cfg.n_classes = j.value("n_classes", cfg.n_classes);
    if (j.contains("cell")) cfg.cell = pmem::cell_kind_from_string(j.at("cell"));
    cfg.use_bank = j.value("use_bank", cfg.use_bank);
    return cfg;
}

pmem::AdamConfig adam_config_from_json(const json& j) {
    pmem::AdamConfig adam;
    adam.lr = j.value("lr", adam.lr);
    adam.beta1 = j.value("beta1", adam.beta1);
    adam.beta2 = j.value("beta2", adam.beta2);
    adam.eps = j.value("eps", adam.eps);
    return adam;
}

struct CommonRunSettings {
    pmem::RunConfig run;
    int64_t slots = 32;
    int64_t epochs = 8;
    int64_t patience = 3;
};

CommonRunSettings run_settings_from_json(const json& j) {
    CommonRunSettings s;
    if (j.contains("model")) s.run.model = model_config_from_json(j.at("model"));
    if (j.contains("adam")) s.run.adam = adam_config_from_json(j.at("adam"));
    s.run.batch_size = j.value("batch_size", s.run.batch_size);
    s.run.fisher_samples = j.value("fisher_samples", s.run.fisher_samples);
    s.run.seed = j.value("seed", s.run.seed);
    s.slots = j.value("slots", s.slots);
    s.epochs = j.value("epochs", s.epochs);
    s.patience = j.value("patience", s.patience);
    return s;
}

pmem::DomainProvider dataset_provider(const pmem::DatasetInfo& info) {
    return [info](const std::string& name) {
        pmem::DomainDataset ds;
        pmem::VocabMap scratch = pmem::VocabMap::with_reserved();
        ds.train = pmem::load_split(info, name, "train", scratch, pmem::VocabBuild::kFrozen);
        ds.valid = pmem::load_split(info, name, "valid", scratch, pmem::VocabBuild::kFrozen);
        ds.test = pmem::load_split(info, name, "test", scratch, pmem::VocabBuild::kFrozen);
        return ds;
    };
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir,
                 std::optional<uint64_t> seed_flag) {
    json j = read_json_file(spec_path);
    uint64_t seed = seed_flag ? *seed_flag : j.value("seed", uint64_t{0});
    int64_t n_domains = j.value("n_domains", int64_t{2});
    auto specs = pmem::default_domain_specs(n_domains, seed, j.value("n_train", int64_t{2000}),
                                            j.value("n_valid", int64_t{500}),
                                            j.value("n_test", int64_t{500}));
    for (auto& s : specs) {
        s.len_min = j.value("len_min", s.len_min);
        s.len_max = j.value("len_max", s.len_max);
    }
    auto domains = pmem::gen_synthetic(specs);
    pmem::write_dataset(domains, specs, seed, out_dir);
    json out;
    out["out"] = out_dir;
    out["seed"] = seed;
    for (const auto& d : domains)
        out["domains"].push_back({{"name", d.name},
                                  {"train", d.train.size()},
                                  {"valid", d.valid.size()},
                                  {"test", d.test.size()}});
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_ckpt, std::optional<uint64_t> seed_flag) {
    json j = read_json_file(config_path);
    CommonRunSettings s = run_settings_from_json(j);
    if (seed_flag) s.run.seed = *seed_flag;
    s.run.method.method = pmem::IdaMethod::kFinetuneOnly;

    pmem::DatasetInfo info = pmem::read_manifest(data_dir);
    std::string domain = j.value("domain", info.specs.empty() ? std::string("d0")
                                                              : info.specs.front().name);
    pmem::DomainSchedule schedule;
    schedule.entries.push_back({domain, s.slots, s.epochs, s.patience});

    pmem::Model model;
    pmem::RunRecord rec =
        pmem::run_schedule(schedule, dataset_provider(info), s.run, &model);

    pmem::CheckpointExtras extras;
    extras.labels = info.labels.empty() ? pmem::task_labels() : info.labels;
    extras.domain_history = {domain};
    extras.seed = s.run.seed;
    extras.method = s.run.method.tag();
    if (auto parent = std::filesystem::path(out_ckpt).parent_path(); !parent.empty())
        std::filesystem::create_directories(parent);
    pmem::save_checkpoint(model, extras, out_ckpt);

    json out;
    out["checkpoint"] = out_ckpt;
    out["domain"] = domain;
    out["epochs_run"] = rec.stages.front().train.epochs_run;
    out["best_valid_acc"] = rec.stages.front().train.best_valid_acc;
    out["test_acc"] = rec.matrix.cells.front().front();
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_ida(const std::string& config_path, const std::string& schedule_csv,
            const std::string& method_flag, std::optional<int64_t> slots_flag,
            const std::string& out_dir, std::optional<uint64_t> seed_flag,
            std::optional<bool> vocab_flag, std::optional<double> lambda_flag,
            std::optional<int64_t> epochs_flag) {
    json j = read_json_file(config_path);
    CommonRunSettings s = run_settings_from_json(j);
    if (seed_flag) s.run.seed = *seed_flag;
    if (slots_flag) s.slots = *slots_flag;
    if (epochs_flag) s.epochs = *epochs_flag;

    std::string method = !method_flag.empty() ? method_flag
                                              : j.value("method", std::string("mem_expand"));
    s.run.method.method = pmem::ida_method_from_string(method);
    s.run.method.vocab_expand =
        vocab_flag ? *vocab_flag : j.value("vocab_expand", false);
    s.run.method.ewc_lambda = lambda_flag ? *lambda_flag : j.value("ewc_lambda", 1.0);
    s.run.out_dir = out_dir;

    std::string data_dir = j.value("data", std::string());
    if (data_dir.empty()) pmem::fail("config", "config needs a 'data' field (dataset root)");
    pmem::DatasetInfo info = pmem::read_manifest(data_dir);

    std::vector<std::string> domains = split_csv(schedule_csv);
    if (domains.empty())
        for (const auto& spec : info.specs) domains.push_back(spec.name);

    pmem::DomainSchedule schedule;
    for (const std::string& d : domains)
        schedule.entries.push_back({d, s.slots, s.epochs, s.patience});

    pmem::RunRecord rec;
    if (s.run.method.method == pmem::IdaMethod::kMultitask)
        rec = pmem::run_multitask(schedule, dataset_provider(info), s.run);
    else
        rec = pmem::run_schedule(schedule, dataset_provider(info), s.run);

    std::cout << pmem::run_record_to_json(rec) << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& domain_flag, const std::string& split, int64_t bootstrap_size,
             int64_t bootstrap_repeats, uint64_t seed) {
    pmem::LoadedCheckpoint ckpt = pmem::read_checkpoint(ckpt_path);
    pmem::Model model = pmem::model_from_checkpoint(ckpt);
    std::vector<std::string> labels =
        ckpt.extras.labels.empty() ? pmem::task_labels() : ckpt.extras.labels;

    pmem::DatasetInfo info = pmem::read_manifest(data_dir);
    std::vector<std::string> domains;
    if (!domain_flag.empty())
        domains.push_back(domain_flag);
    else
        for (const auto& spec : info.specs) domains.push_back(spec.name);

    json out;
    out["checkpoint"] = ckpt_path;
    out["split"] = split;
    pmem::Tape scratch;
    for (const std::string& d : domains) {
        pmem::VocabMap tmp = pmem::VocabMap::with_reserved();
        auto examples = pmem::load_split(info, d, split, tmp, pmem::VocabBuild::kFrozen);
        auto ids = pmem::to_ids(examples, model.vocab, labels);
        std::vector<int64_t> preds, gold;
        for (const auto& ex : ids) {
            preds.push_back(pmem::predict(scratch, model, ex.ids));
            gold.push_back(ex.label);
        }
        int64_t hits = 0;
        for (size_t i = 0; i < preds.size(); ++i)
            if (preds[i] == gold[i]) ++hits;
        json entry;
        entry["n"] = preds.size();
        entry["accuracy"] =
            preds.empty() ? 0.0 : 100.0 * static_cast<double>(hits) / preds.size();
        if (bootstrap_repeats > 0) {
            entry["bootstrap"] =
                pmem::bootstrap_eval(preds, gold, bootstrap_size, bootstrap_repeats,
                                     pmem::derive_seed(seed, "bootstrap-" + d));
        }
        out["domains"][d] = entry;
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_verify_theorem(const pmem::SimulationConfig& cfg, bool as_json, bool serial) {
    pmem::VerifierReport rep = pmem::verify_theorem(cfg, serial);
    if (as_json)
        std::cout << pmem::report_to_json(rep) << "\n";
    else
        std::cout << pmem::report_to_table(rep);
    return rep.all_pass ? 0 : 2;
}

int cmd_gradcheck(uint64_t seed, int64_t n_seeds, int64_t hidden, int64_t slots,
                  int64_t vocab_size, int64_t seq_len, const std::string& cell,
                  double tolerance) {
    pmem::ModelConfig cfg;
    cfg.embed_dim = 8;
    cfg.hidden_dim = hidden;
    cfg.n_classes = 3;
    cfg.cell = pmem::cell_kind_from_string(cell);

    double worst = 0.0;
    std::string worst_param;
    for (int64_t s = 0; s < n_seeds; ++s) {
        pmem::Rng rng(pmem::derive_seed(seed, "gradcheck", static_cast<uint64_t>(s)));
        pmem::VocabMap vocab = pmem::VocabMap::with_reserved();
        for (int64_t t = vocab.size(); t < vocab_size; ++t) vocab.add(pmem::cat("tok", t));
        pmem::Model model = pmem::make_model(cfg, vocab, slots, rng);

        std::vector<int32_t> tokens;
        for (int64_t t = 0; t < seq_len; ++t)
            tokens.push_back(static_cast<int32_t>(rng.below(static_cast<uint64_t>(vocab_size))));
        int64_t label = static_cast<int64_t>(rng.below(3));

        pmem::Tape tape;
        auto loss_fn = [&]() {
            tape.clear();
            pmem::ModelVars vars = pmem::model_on_tape(tape, model);
            pmem::Var logits = pmem::model_logits(tape, model, vars, tokens);
            pmem::Var loss = tape.cross_entropy(logits, label);
            tape.backward(loss);
            return tape.value(loss).at(0);
        };
        pmem::GradCheckResult res = pmem::grad_check(loss_fn, model.parameters());
        std::cout << "seed " << s << "  max_rel_err " << res.max_rel_err << "  ("
                  << res.worst_param << "[" << res.worst_index << "])\n";
        if (res.max_rel_err > worst) {
            worst = res.max_rel_err;
            worst_param = res.worst_param;
        }
    }
    std::cout << "worst over " << n_seeds << " seeds: " << worst << " (" << worst_param
              << "), tolerance " << tolerance << "\n";
    return worst < tolerance ? 0 : 2;
}

int cmd_report(const std::string& runs_dir, const std::string& format) {
    std::vector<pmem::RunRecord> runs;
    std::vector<std::filesystem::path> files;
    std::error_code ec;
    for (auto it = std::filesystem::recursive_directory_iterator(runs_dir, ec);
         !ec && it != std::filesystem::recursive_directory_iterator(); ++it)
        if (it->is_regular_file() && it->path().filename() == "run.json")
            files.push_back(it->path());
    if (ec) pmem::fail("io", "cannot scan ", runs_dir, ": ", ec.message());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        runs.push_back(pmem::run_record_from_json(text));
    }
    if (runs.empty()) pmem::fail("config", "no run.json files under ", runs_dir);
    std::cout << pmem::render_report(runs, format);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Progressively expandable memory RNN: data, training, verification"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic multi-domain dataset");
    std::string gen_spec, gen_out;
    std::optional<uint64_t> gen_seed;
    gen->add_option("--spec", gen_spec, "generator spec (JSON)")->required();
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", gen_seed, "override the spec seed");

    // train
    auto* train = app.add_subcommand("train", "Train on a single domain");
    std::string train_config, train_data, train_out;
    std::optional<uint64_t> train_seed;
    train->add_option("--config", train_config, "run config (JSON)")->required();
    train->add_option("--data", train_data, "dataset root")->required();
    train->add_option("--out", train_out, "checkpoint path to write")->required();
    train->add_option("--seed", train_seed, "override the config seed");

    // ida
    auto* ida = app.add_subcommand("ida", "Run a sequential adaptation schedule");
    std::string ida_config, ida_schedule, ida_method, ida_out;
    std::optional<int64_t> ida_slots, ida_epochs;
    std::optional<uint64_t> ida_seed;
    bool ida_vocab_flag = false;
    std::optional<double> ida_lambda;
    ida->add_option("--config", ida_config, "run config (JSON)")->required();
    ida->add_option("--schedule", ida_schedule, "comma-separated domain names");
    ida->add_option("--method", ida_method,
                    "mem_expand|finetune_only|mem_expand_frozen|hidden_expand|multitask|ewc");
    ida->add_option("--slots", ida_slots, "slots added per domain");
    ida->add_option("--out", ida_out, "run output directory")->required();
    ida->add_option("--seed", ida_seed, "override the config seed");
    ida->add_flag("--vocab-expand", ida_vocab_flag, "expand vocabulary per domain");
    ida->add_option("--ewc-lambda", ida_lambda, "EWC strength");
    ida->add_option("--epochs", ida_epochs, "epochs per domain");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string ev_ckpt, ev_data, ev_domain, ev_split = "test";
    int64_t ev_bsize = 200, ev_brepeats = 0;
    uint64_t ev_seed = 0;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--data", ev_data, "dataset root")->required();
    ev->add_option("--domain", ev_domain, "single domain (default: all)");
    ev->add_option("--split", ev_split, "train|valid|test");
    ev->add_option("--bootstrap-size", ev_bsize, "bootstrap subset size");
    ev->add_option("--bootstrap-repeats", ev_brepeats, "bootstrap repeats (0 = off)");
    ev->add_option("--seed", ev_seed, "bootstrap seed");

    // verify-theorem
    auto* vt = app.add_subcommand("verify-theorem",
                                  "Monte Carlo check of the expansion-perturbation bound");
    pmem::SimulationConfig sim;
    std::string vt_mode = "sampled";
    bool vt_json = false, vt_serial = false, vt_fix_query = false;
    vt->add_option("--D", sim.D, "hidden width of the queried state");
    vt->add_option("--d", sim.d, "value width");
    vt->add_option("--sigma", sim.sigma, "sampling std dev");
    vt->add_option("--N", sim.N, "old slots");
    vt->add_option("--M", sim.M, "new slots");
    vt->add_option("--trials", sim.trials, "Monte Carlo trials");
    vt->add_option("--seed", sim.seed, "root seed");
    vt->add_option("--attention-mode", vt_mode, "sampled|sampled_conditioned|fixed");
    vt->add_flag("--fix-query", vt_fix_query, "reuse one query vector across trials");
    vt->add_flag("--json", vt_json, "emit the full report as JSON");
    vt->add_flag("--serial", vt_serial, "force the serial trial loop");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck",
                                  "Finite-difference check of the full model gradient");
    uint64_t gc_seed = 0;
    int64_t gc_nseeds = 10, gc_hidden = 16, gc_slots = 4, gc_vocab = 20, gc_len = 5;
    std::string gc_cell = "lstm";
    double gc_tol = 1e-5;
    gc->add_option("--seed", gc_seed, "root seed");
    gc->add_option("--seeds", gc_nseeds, "number of model seeds");
    gc->add_option("--hidden", gc_hidden, "hidden width");
    gc->add_option("--slots", gc_slots, "bank slots");
    gc->add_option("--vocab-size", gc_vocab, "vocabulary size");
    gc->add_option("--len", gc_len, "sequence length");
    gc->add_option("--cell", gc_cell, "vanilla|gru|lstm");
    gc->add_option("--tolerance", gc_tol, "max relative error allowed");

    // report
    auto* rep = app.add_subcommand("report", "Aggregate run records into tables");
    std::string rep_runs, rep_format = "markdown";
    uint64_t rep_seed = 0;
    rep->add_option("--runs", rep_runs, "directory containing run.json files")->required();
    rep->add_option("--format", rep_format, "csv|markdown");
    rep->add_option("--seed", rep_seed, "accepted for interface uniformity");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        nlohmann::json err;
        err["error"] = "usage";
        err["message"] = e.what();
        std::cerr << err.dump() << "\n";
        return e.get_exit_code() == 0 ? 1 : e.get_exit_code();
    }

    try {
        if (app.got_subcommand(gen)) return cmd_gen_data(gen_spec, gen_out, gen_seed);
        if (app.got_subcommand(train))
            return cmd_train(train_config, train_data, train_out, train_seed);
        if (app.got_subcommand(ida)) {
            std::optional<bool> ida_vocab;
            if (ida->count("--vocab-expand")) ida_vocab = ida_vocab_flag;
            return cmd_ida(ida_config, ida_schedule, ida_method, ida_slots, ida_out, ida_seed,
                           ida_vocab, ida_lambda, ida_epochs);
        }
        if (app.got_subcommand(ev))
            return cmd_eval(ev_ckpt, ev_data, ev_domain, ev_split, ev_bsize, ev_brepeats,
                            ev_seed);
        if (app.got_subcommand(vt)) {
            sim.mode = pmem::attention_mode_from_string(vt_mode);
            sim.fix_query_across_trials = vt_fix_query;
            return cmd_verify_theorem(sim, vt_json, vt_serial);
        }
        if (app.got_subcommand(gc))
            return cmd_gradcheck(gc_seed, gc_nseeds, gc_hidden, gc_slots, gc_vocab, gc_len,
                                 gc_cell, gc_tol);
        if (app.got_subcommand(rep)) return cmd_report(rep_runs, rep_format);
    } catch (const pmem::Error& e) {
        nlohmann::json err;
        err["error"] = e.kind();
        err["message"] = e.what();
        std::cerr << err.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        nlohmann::json err;
        err["error"] = "internal";
        err["message"] = e.what();
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
