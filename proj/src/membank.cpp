#include "pmem/membank.hpp"

#include <algorithm>
#include <cmath>

namespace pmem {

namespace {

double default_scale(int64_t dim, double scale) {
    if (scale > 0.0) return scale;
    return 1.0 / std::sqrt(static_cast<double>(dim));
}

void fill_uniform(double* p, int64_t n, Rng& rng, double scale) {
    for (int64_t i = 0; i < n; ++i) p[i] = rng.uniform(-scale, scale);
}

}  // namespace

MemoryBank make_bank(int64_t n_slots, int64_t dim, Rng& rng, double scale) {
    if (n_slots < 1 || dim < 1)
        fail("membank", "bank needs at least 1 slot and positive dim, got N=", n_slots,
             " d=", dim);
    MemoryBank bank;
    bank.keys = Parameter("membank.keys", Tensor::zeros({n_slots, dim}));
    bank.values = Parameter("membank.values", Tensor::zeros({n_slots, dim}));
    double s = default_scale(dim, scale);
    fill_uniform(bank.keys.value.data.data(), bank.keys.numel(), rng, s);
    fill_uniform(bank.values.value.data.data(), bank.values.numel(), rng, s);
    bank.domain_boundaries.push_back(n_slots);
    return bank;
}

AttendResult attend(const Tensor& h_prev, const MemoryBank& bank) {
    int64_t n = bank.slots(), d = bank.dim();
    if (n == 0) fail("membank", "attend on empty bank");
    if (h_prev.rank() != 1 || h_prev.shape[0] != d)
        fail("membank", "query ", shape_str(h_prev), " does not match slot dim ", d);

    Tensor logits = matmul(bank.keys.value, h_prev);
    AttendResult res;
    res.weights.unnormalized = Tensor::zeros({n});
    res.weights.normalized = Tensor::zeros({n});
    double mx = *std::max_element(logits.data.begin(), logits.data.end());
    double norm = 0.0;
    for (int64_t j = 0; j < n; ++j) {
        double lg = logits.at(j);
        if (std::fabs(lg) > 700.0)
            fail("membank", "attention logit overflow: |", lg, "| > 700 at slot ", j);
        res.weights.unnormalized.at(j) = std::exp(lg);
        res.weights.normalized.at(j) = std::exp(lg - mx);
        norm += res.weights.normalized.at(j);
    }
    for (int64_t j = 0; j < n; ++j) res.weights.normalized.at(j) /= norm;

    res.readout.content = Tensor::zeros({d});
    add_matvec_t(res.readout.content, bank.values.value, res.weights.normalized);
    return res;
}

TapeAttend attend_on_tape(Tape& tape, Var h_prev, Var keys, Var values) {
    const Tensor& kv = tape.value(keys);
    const Tensor& hv = tape.value(h_prev);
    if (kv.rank() != 2 || kv.shape[0] < 1) fail("membank", "attend on empty bank");
    if (hv.rank() != 1 || hv.shape[0] != kv.shape[1])
        fail("membank", "query ", shape_str(hv), " does not match slot dim ", kv.shape[1]);
    TapeAttend out;
    Var logits = tape.matmul(keys, h_prev);
    out.alpha = tape.softmax(logits);
    out.readout = tape.matvec_t(values, out.alpha);
    return out;
}

TapeAttend attend_on_tape(Tape& tape, Var h_prev, MemoryBank& bank) {
    Var k = tape.param(bank.keys);
    Var v = tape.param(bank.values);
    return attend_on_tape(tape, h_prev, k, v);
}

void expand(MemoryBank& bank, int64_t m, Rng& rng, double scale) {
    if (m < 0) fail("membank", "cannot expand by ", m, " slots");
    int64_t n = bank.slots(), d = bank.dim();
    if (n == 0) fail("membank", "expand on uninitialized bank");
    double s = default_scale(d, scale);

    // Row append: existing rows keep their exact bit patterns.
    for (Parameter* p : {&bank.keys, &bank.values}) {
        p->value.data.resize(static_cast<size_t>((n + m) * d), 0.0);
        p->value.shape[0] = n + m;
        fill_uniform(p->value.data.data() + n * d, m * d, rng, s);
        p->grad = Tensor::zeros(p->value.shape);
    }
    bank.domain_boundaries.push_back(n + m);
}

MassSplit attention_mass_split(const AttentionWeights& weights, int64_t boundary) {
    int64_t n = weights.unnormalized.numel();
    if (boundary < 0 || boundary > n)
        fail("membank", "boundary ", boundary, " out of range for ", n, " slots");
    MassSplit split;
    for (int64_t j = 0; j < boundary; ++j) split.s_old += weights.unnormalized.at(j);
    for (int64_t j = boundary; j < n; ++j) split.s_new += weights.unnormalized.at(j);
    return split;
}

}  // namespace pmem
