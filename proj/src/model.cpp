#include "pmem/model.hpp"

#include <cmath>

namespace pmem {

std::vector<Parameter*> Model::parameters() {
    std::vector<Parameter*> ps;
    ps.push_back(&embedding);
    for (Parameter* p : fwd.params()) ps.push_back(p);
    for (Parameter* p : bwd.params()) ps.push_back(p);
    if (bank) {
        ps.push_back(&bank->keys);
        ps.push_back(&bank->values);
    }
    for (Parameter* p : head.params()) ps.push_back(p);
    return ps;
}

int64_t Model::param_count() {
    int64_t n = 0;
    for (Parameter* p : parameters()) n += p->numel();
    return n;
}

Model make_model(const ModelConfig& cfg, VocabMap vocab, int64_t initial_slots, Rng& rng) {
    if (cfg.embed_dim < 1 || cfg.hidden_dim < 1 || cfg.n_classes < 2)
        fail("config", "bad model dims: embed=", cfg.embed_dim, " hidden=", cfg.hidden_dim,
             " classes=", cfg.n_classes);
    Model m;
    m.cfg = cfg;
    m.vocab = std::move(vocab);
    if (m.vocab.size() < 2) fail("config", "vocabulary must contain the reserved tokens");

    m.embedding = Parameter("embedding.weights",
                            Tensor::zeros({m.vocab.size(), cfg.embed_dim}));
    init_uniform_fan_in(m.embedding, rng);

    int64_t in_dim = cfg.embed_dim + (cfg.use_bank ? cfg.hidden_dim : 0);
    m.fwd = make_cell(cfg.cell, in_dim, cfg.hidden_dim, rng, "rnn.fwd");
    m.bwd = make_cell(cfg.cell, in_dim, cfg.hidden_dim, rng, "rnn.bwd");
    if (cfg.use_bank) m.bank = make_bank(initial_slots, cfg.hidden_dim, rng);
    m.head = make_head(cfg.n_classes, 2 * cfg.hidden_dim, rng, "head");
    return m;
}

ModelVars model_on_tape(Tape& tape, Model& model) {
    ModelVars v;
    v.fwd = cell_on_tape(tape, model.fwd);
    v.bwd = cell_on_tape(tape, model.bwd);
    if (model.bank) {
        v.bank = bank_on_tape(tape, *model.bank);
        v.has_bank = true;
    }
    v.head_w = tape.param(model.head.projection);
    v.head_b = tape.param(model.head.bias);
    return v;
}

Var model_logits(Tape& tape, Model& model, const ModelVars& vars,
                 const std::vector<int32_t>& tokens) {
    Var inputs = embed(tape, model.embedding, tokens);
    Var enc = encode_with_vars(tape, model.fwd, model.bwd, vars.fwd, vars.bwd, inputs,
                               vars.has_bank ? &vars.bank : nullptr);
    return classify_with_vars(tape, vars.head_w, vars.head_b, enc);
}

int64_t predict(Tape& scratch, Model& model, const std::vector<int32_t>& tokens) {
    scratch.clear();
    ModelVars vars = model_on_tape(scratch, model);
    Var logits = model_logits(scratch, model, vars, tokens);
    const Tensor& lv = scratch.value(logits);
    int64_t best = 0;
    for (int64_t i = 1; i < lv.numel(); ++i)
        if (lv.at(i) > lv.at(best)) best = i;
    return best;
}

void grow_embedding_rows(Model& model, int64_t new_vocab_size, Rng& rng) {
    int64_t old_rows = model.embedding.value.shape[0];
    int64_t cols = model.embedding.value.shape[1];
    if (new_vocab_size < old_rows)
        fail("model", "cannot shrink embedding from ", old_rows, " to ", new_vocab_size);
    if (new_vocab_size == old_rows) return;
    model.embedding.value.data.resize(static_cast<size_t>(new_vocab_size * cols), 0.0);
    model.embedding.value.shape[0] = new_vocab_size;
    double s = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int64_t i = old_rows * cols; i < new_vocab_size * cols; ++i)
        model.embedding.value.data[static_cast<size_t>(i)] = rng.uniform(-s, s);
    model.embedding.grad = Tensor::zeros(model.embedding.value.shape);
}

std::vector<int32_t> tokens_to_ids(const VocabMap& vocab, const std::vector<std::string>& toks) {
    std::vector<int32_t> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(vocab.lookup(t));
    return ids;
}

}  // namespace pmem
