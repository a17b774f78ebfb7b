#pragma once

#include <optional>
#include <vector>

#include "pmem/layers.hpp"
#include "pmem/membank.hpp"
#include "pmem/vocab.hpp"

namespace pmem {

struct ModelConfig {
    int64_t embed_dim = 32;
    int64_t hidden_dim = 64;
    int64_t n_classes = 3;
    CellKind cell = CellKind::kLstm;
    bool use_bank = true;
};

// BiRNN classifier with an optional shared memory bank. The bank dim equals
// hidden_dim (keys are dotted with the previous hidden state directly) and
// its readout is concatenated to the token embedding at every step of both
// directions. Parameter order is fixed; checkpoints, freeze masks, and the
// optimizer all index parameters by this order.
struct Model {
    ModelConfig cfg;
    VocabMap vocab;
    Parameter embedding;  // [vocab_size x embed_dim]
    RnnCell fwd;
    RnnCell bwd;
    std::optional<MemoryBank> bank;
    ClassifierHead head;

    std::vector<Parameter*> parameters();
    int64_t cell_input_dim() const {
        return cfg.embed_dim + (cfg.use_bank ? cfg.hidden_dim : 0);
    }
    int64_t param_count();
};

// initial_slots is the bank size trained on the first domain (ignored when
// cfg.use_bank is false). All initialization draws from rng in a fixed
// order: embedding, forward cell, backward cell, bank, head.
Model make_model(const ModelConfig& cfg, VocabMap vocab, int64_t initial_slots, Rng& rng);

struct ModelVars {
    CellVars fwd, bwd;
    BankVars bank;
    bool has_bank = false;
    Var head_w, head_b;
};
ModelVars model_on_tape(Tape& tape, Model& model);

// Logits for one token sequence; parameter Vars are shared across examples
// on the same tape.
Var model_logits(Tape& tape, Model& model, const ModelVars& vars,
                 const std::vector<int32_t>& tokens);

// argmax prediction (lowest index wins ties); builds and discards its own
// forward pass on the supplied scratch tape.
int64_t predict(Tape& scratch, Model& model, const std::vector<int32_t>& tokens);

// Appends rows for newly added vocabulary entries. Existing rows keep their
// bit patterns.
void grow_embedding_rows(Model& model, int64_t new_vocab_size, Rng& rng);

std::vector<int32_t> tokens_to_ids(const VocabMap& vocab, const std::vector<std::string>& toks);

}  // namespace pmem
