#include "pmem/layers.hpp"

#include <cmath>

namespace pmem {

CellKind cell_kind_from_string(const std::string& s) {
    if (s == "vanilla") return CellKind::kVanilla;
    if (s == "gru") return CellKind::kGru;
    if (s == "lstm") return CellKind::kLstm;
    fail("config", "unknown cell kind '", s, "' (expected vanilla, gru, or lstm)");
}

std::string cell_kind_to_string(CellKind k) {
    switch (k) {
        case CellKind::kVanilla: return "vanilla";
        case CellKind::kGru: return "gru";
        case CellKind::kLstm: return "lstm";
    }
    return "?";
}

void init_uniform_fan_in(Parameter& p, Rng& rng) {
    if (p.value.rank() != 2) fail("init", "fan-in init needs a matrix, got ", shape_str(p.value));
    double s = 1.0 / std::sqrt(static_cast<double>(p.value.shape[1]));
    for (double& v : p.value.data) v = rng.uniform(-s, s);
}

std::vector<Parameter*> RnnCell::params() {
    std::vector<Parameter*> ps = {&w_ih, &w_hh};
    if (kind == CellKind::kGru) ps.push_back(&u_n);
    ps.push_back(&b);
    return ps;
}

RnnCell make_cell(CellKind kind, int64_t input_dim, int64_t hidden_dim, Rng& rng,
                  const std::string& prefix, Activation vanilla_act) {
    if (input_dim < 1 || hidden_dim < 1)
        fail("config", "cell dims must be positive, got in=", input_dim, " hidden=", hidden_dim);
    RnnCell cell;
    cell.kind = kind;
    cell.input_dim = input_dim;
    cell.hidden_dim = hidden_dim;
    cell.vanilla_act = vanilla_act;

    int64_t gates = kind == CellKind::kLstm ? 4 : (kind == CellKind::kGru ? 3 : 1);
    int64_t rec_gates = kind == CellKind::kLstm ? 4 : (kind == CellKind::kGru ? 2 : 1);
    cell.w_ih = Parameter(prefix + ".w_ih", Tensor::zeros({gates * hidden_dim, input_dim}));
    cell.w_hh = Parameter(prefix + ".w_hh", Tensor::zeros({rec_gates * hidden_dim, hidden_dim}));
    init_uniform_fan_in(cell.w_ih, rng);
    init_uniform_fan_in(cell.w_hh, rng);
    if (kind == CellKind::kGru) {
        cell.u_n = Parameter(prefix + ".u_n", Tensor::zeros({hidden_dim, hidden_dim}));
        init_uniform_fan_in(cell.u_n, rng);
    }
    cell.b = Parameter(prefix + ".b", Tensor::zeros({gates * hidden_dim}));
    if (kind == CellKind::kLstm)
        for (int64_t i = hidden_dim; i < 2 * hidden_dim; ++i) cell.b.value.at(i) = 1.0;
    return cell;
}

CellVars cell_on_tape(Tape& tape, RnnCell& cell) {
    CellVars v;
    v.w_ih = tape.param(cell.w_ih);
    v.w_hh = tape.param(cell.w_hh);
    if (cell.kind == CellKind::kGru) {
        v.u_n = tape.param(cell.u_n);
        v.has_u = true;
    }
    v.b = tape.param(cell.b);
    return v;
}

StepState initial_state(Tape& tape, const RnnCell& cell) {
    StepState s;
    s.h = tape.constant(Tensor::zeros({cell.hidden_dim}));
    if (cell.kind == CellKind::kLstm) {
        s.c = tape.constant(Tensor::zeros({cell.hidden_dim}));
        s.has_c = true;
    }
    return s;
}

StepState rnn_step(Tape& tape, const RnnCell& cell, const CellVars& vars, const StepState& prev,
                   Var input) {
    int64_t D = cell.hidden_dim;
    const Tensor& iv = tape.value(input);
    if (iv.rank() != 1 || iv.shape[0] != cell.input_dim)
        fail("layers", "step input ", shape_str(iv), " does not match input_dim ",
             cell.input_dim);
    if ((cell.kind == CellKind::kLstm) != prev.has_c)
        fail("layers", "cell state must be present iff the cell is an LSTM");

    StepState out;
    switch (cell.kind) {
        case CellKind::kVanilla: {
            Var pre = tape.add(tape.add(tape.matmul(vars.w_ih, input),
                                        tape.matmul(vars.w_hh, prev.h)),
                               vars.b);
            out.h = tape.activation(pre, cell.vanilla_act);
            break;
        }
        case CellKind::kGru: {
            Var ih = tape.matmul(vars.w_ih, input);
            Var hh = tape.matmul(vars.w_hh, prev.h);
            Var z = tape.activation(
                tape.add(tape.add(tape.slice(ih, 0, D), tape.slice(hh, 0, D)),
                         tape.slice(vars.b, 0, D)),
                Activation::kSigmoid);
            Var r = tape.activation(
                tape.add(tape.add(tape.slice(ih, D, D), tape.slice(hh, D, D)),
                         tape.slice(vars.b, D, D)),
                Activation::kSigmoid);
            Var n = tape.activation(
                tape.add(tape.add(tape.slice(ih, 2 * D, D),
                                  tape.matmul(vars.u_n, tape.mul(r, prev.h))),
                         tape.slice(vars.b, 2 * D, D)),
                Activation::kTanh);
            // (1 - z) h + z n, written as h - z (h - n)
            out.h = tape.sub(prev.h, tape.mul(z, tape.sub(prev.h, n)));
            break;
        }
        case CellKind::kLstm: {
            Var pre = tape.add(tape.add(tape.matmul(vars.w_ih, input),
                                        tape.matmul(vars.w_hh, prev.h)),
                               vars.b);
            Var i = tape.activation(tape.slice(pre, 0, D), Activation::kSigmoid);
            Var f = tape.activation(tape.slice(pre, D, D), Activation::kSigmoid);
            Var g = tape.activation(tape.slice(pre, 2 * D, D), Activation::kTanh);
            Var o = tape.activation(tape.slice(pre, 3 * D, D), Activation::kSigmoid);
            out.c = tape.add(tape.mul(f, prev.c), tape.mul(i, g));
            out.has_c = true;
            out.h = tape.mul(o, tape.activation(out.c, Activation::kTanh));
            break;
        }
    }
    return out;
}

BankVars bank_on_tape(Tape& tape, MemoryBank& bank) {
    BankVars v;
    v.keys = tape.param(bank.keys);
    v.values = tape.param(bank.values);
    return v;
}

namespace {

Var run_direction(Tape& tape, const RnnCell& cell, const CellVars& vars, Var inputs,
                  const BankVars* bank, bool reverse) {
    int64_t len = tape.value(inputs).shape[0];
    StepState state = initial_state(tape, cell);
    for (int64_t s = 0; s < len; ++s) {
        int64_t t = reverse ? len - 1 - s : s;
        Var x = tape.row(inputs, t);
        Var in = x;
        if (bank) {
            TapeAttend att = attend_on_tape(tape, state.h, bank->keys, bank->values);
            in = tape.concat(x, att.readout);
        }
        state = rnn_step(tape, cell, vars, state, in);
    }
    return state.h;
}

}  // namespace

Var encode_with_vars(Tape& tape, const RnnCell& cell_fwd, const RnnCell& cell_bwd,
                     const CellVars& vars_fwd, const CellVars& vars_bwd, Var inputs,
                     const BankVars* bank) {
    const Tensor& iv = tape.value(inputs);
    if (iv.rank() != 2 || iv.shape[0] < 1)
        fail("layers", "encode_sequence needs a non-empty [len x dim] input, got ",
             shape_str(iv));
    if (cell_fwd.hidden_dim != cell_bwd.hidden_dim)
        fail("layers", "forward/backward cells disagree on hidden_dim");
    Var hf = run_direction(tape, cell_fwd, vars_fwd, inputs, bank, false);
    Var hb = run_direction(tape, cell_bwd, vars_bwd, inputs, bank, true);
    return tape.concat(hf, hb);
}

Var encode_sequence(Tape& tape, RnnCell& cell_fwd, RnnCell& cell_bwd, Var inputs,
                    MemoryBank* bank) {
    CellVars vf = cell_on_tape(tape, cell_fwd);
    CellVars vb = cell_on_tape(tape, cell_bwd);
    if (bank) {
        BankVars bv = bank_on_tape(tape, *bank);
        return encode_with_vars(tape, cell_fwd, cell_bwd, vf, vb, inputs, &bv);
    }
    return encode_with_vars(tape, cell_fwd, cell_bwd, vf, vb, inputs, nullptr);
}

ClassifierHead make_head(int64_t n_classes, int64_t encoder_dim, Rng& rng,
                         const std::string& prefix) {
    if (n_classes < 2 || encoder_dim < 1)
        fail("config", "head needs >= 2 classes and positive encoder dim");
    ClassifierHead head;
    head.projection = Parameter(prefix + ".projection", Tensor::zeros({n_classes, encoder_dim}));
    init_uniform_fan_in(head.projection, rng);
    head.bias = Parameter(prefix + ".bias", Tensor::zeros({n_classes}));
    return head;
}

Var classify_with_vars(Tape& tape, Var projection, Var bias, Var encoding) {
    return tape.add(tape.matmul(projection, encoding), bias);
}

Var classify(Tape& tape, ClassifierHead& head, Var encoding) {
    return classify_with_vars(tape, tape.param(head.projection), tape.param(head.bias), encoding);
}

Var embed(Tape& tape, Parameter& table, const std::vector<int32_t>& tokens) {
    if (tokens.empty()) fail("layers", "embed on empty token sequence");
    return tape.gather_rows(table, tokens);
}

}  // namespace pmem
