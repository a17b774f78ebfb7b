#pragma once

#include <vector>

#include "pmem/rng.hpp"
#include "pmem/tape.hpp"
#include "pmem/tensor.hpp"

namespace pmem {

// Key-value memory. Keys and values are [N x d] Parameters; slot j is row j
// of each. Attention dots the query against keys directly, so d must equal
// the hidden width of whatever queries the bank. domain_boundaries records
// the cumulative slot count after each expansion (nondecreasing, ends at N).
struct MemoryBank {
    Parameter keys;
    Parameter values;
    std::vector<int64_t> domain_boundaries;

    int64_t slots() const { return keys.value.rank() == 2 ? keys.value.shape[0] : 0; }
    int64_t dim() const { return keys.value.rank() == 2 ? keys.value.shape[1] : 0; }
};

MemoryBank make_bank(int64_t n_slots, int64_t dim, Rng& rng, double scale = -1.0);

struct AttentionWeights {
    Tensor unnormalized;  // exp of raw logits, strictly positive
    Tensor normalized;    // sums to 1
};

struct MemoryReadout {
    Tensor content;  // [d], convex combination of value rows
};

// Value-level attention, used for analysis and the expansion identities.
// Raw exp() is used for the unnormalized weights; logits beyond +-700 are
// rejected rather than silently saturated.
struct AttendResult {
    AttentionWeights weights;
    MemoryReadout readout;
};
AttendResult attend(const Tensor& h_prev, const MemoryBank& bank);

// Differentiable attention on a tape; gradients flow to h_prev, keys, values.
struct TapeAttend {
    Var alpha;    // normalized weights [N]
    Var readout;  // [d]
};
TapeAttend attend_on_tape(Tape& tape, Var h_prev, MemoryBank& bank);
TapeAttend attend_on_tape(Tape& tape, Var h_prev, Var keys, Var values);

// Appends M randomly initialized slots and records a boundary. M = 0 is a
// legal no-op that still records the boundary. Old rows are untouched.
// Default scale is 1/sqrt(d).
void expand(MemoryBank& bank, int64_t m, Rng& rng, double scale = -1.0);

// Sums of unnormalized mass below/at and above a boundary.
struct MassSplit {
    double s_old = 0.0;
    double s_new = 0.0;
};
MassSplit attention_mass_split(const AttentionWeights& weights, int64_t boundary);

}  // namespace pmem
