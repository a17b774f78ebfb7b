#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pmem/membank.hpp"
#include "pmem/rng.hpp"
#include "pmem/tape.hpp"

namespace pmem {

enum class CellKind { kVanilla, kGru, kLstm };

CellKind cell_kind_from_string(const std::string& s);
std::string cell_kind_to_string(CellKind k);

// Recurrent cell. All kinds share the parameter naming scheme
// <prefix>.w_ih (input projection), <prefix>.w_hh (recurrent projection),
// <prefix>.b (stacked gate bias), plus <prefix>.u_n for the GRU candidate.
// Gate row order: GRU [z; r; n], LSTM [i; f; g; o].
struct RnnCell {
    CellKind kind = CellKind::kLstm;
    int64_t input_dim = 0;
    int64_t hidden_dim = 0;
    Activation vanilla_act = Activation::kTanh;  // kIdentity for analysis

    Parameter w_ih;
    Parameter w_hh;
    Parameter u_n;  // GRU only
    Parameter b;

    std::vector<Parameter*> params();
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases, LSTM
// forget-gate bias +1.
RnnCell make_cell(CellKind kind, int64_t input_dim, int64_t hidden_dim, Rng& rng,
                  const std::string& prefix, Activation vanilla_act = Activation::kTanh);

struct CellVars {
    Var w_ih, w_hh, u_n, b;
    bool has_u = false;
};
CellVars cell_on_tape(Tape& tape, RnnCell& cell);

struct StepState {
    Var h;
    Var c;  // LSTM cell state
    bool has_c = false;
};
StepState initial_state(Tape& tape, const RnnCell& cell);

// One transition. cstate must be present iff kind == lstm.
StepState rnn_step(Tape& tape, const RnnCell& cell, const CellVars& vars, const StepState& prev,
                   Var input);

struct BankVars {
    Var keys, values;
};
BankVars bank_on_tape(Tape& tape, MemoryBank& bank);

// Bidirectional encoding with h_0 = 0. When a bank is attached, every step
// of both directions first attends with the previous hidden state and the
// readout is concatenated to the token embedding as the cell input. Returns
// concat(final forward state, final backward state), [2 * hidden_dim].
Var encode_sequence(Tape& tape, RnnCell& cell_fwd, RnnCell& cell_bwd, Var inputs,
                    MemoryBank* bank);

// Same, with parameter Vars already on the tape (one push per batch).
Var encode_with_vars(Tape& tape, const RnnCell& cell_fwd, const RnnCell& cell_bwd,
                     const CellVars& vars_fwd, const CellVars& vars_bwd, Var inputs,
                     const BankVars* bank);

struct ClassifierHead {
    Parameter projection;  // [n_classes x encoder_output_dim]
    Parameter bias;        // [n_classes]
    std::vector<Parameter*> params() { return {&projection, &bias}; }
};
ClassifierHead make_head(int64_t n_classes, int64_t encoder_dim, Rng& rng,
                         const std::string& prefix);

Var classify(Tape& tape, ClassifierHead& head, Var encoding);
Var classify_with_vars(Tape& tape, Var projection, Var bias, Var encoding);

// Row-gather of the embedding table; ids must already be in range.
Var embed(Tape& tape, Parameter& table, const std::vector<int32_t>& tokens);

void init_uniform_fan_in(Parameter& p, Rng& rng);

}  // namespace pmem
