#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pmem/gradcheck.hpp"
#include "pmem/membank.hpp"
#include "pmem/rng.hpp"

using namespace pmem;

namespace {

MemoryBank bank_from(const std::vector<std::vector<double>>& keys,
                     const std::vector<std::vector<double>>& values) {
    int64_t n = int64_t(keys.size()), d = int64_t(keys[0].size());
    Tensor k = Tensor::zeros({n, d}), v = Tensor::zeros({n, d});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) {
            k.at(i, j) = keys[size_t(i)][size_t(j)];
            v.at(i, j) = values[size_t(i)][size_t(j)];
        }
    MemoryBank b;
    b.keys = Parameter("bank.keys", std::move(k));
    b.values = Parameter("bank.values", std::move(v));
    b.domain_boundaries = {n};
    return b;
}

}  // namespace

TEST_CASE("attend hand oracle") {
    // keys e1, e2; query (ln 3, 0): logits (ln 3, 0), weights (3, 1),
    // alpha (0.75, 0.25), readout 0.75*(1,1) + 0.25*(3,5) = (1.5, 2.0)
    MemoryBank bank = bank_from({{1, 0}, {0, 1}}, {{1, 1}, {3, 5}});
    AttendResult r = attend(Tensor::vec({std::log(3.0), 0.0}), bank);
    CHECK(r.weights.unnormalized.at(0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(r.weights.unnormalized.at(1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.weights.normalized.at(0) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(r.weights.normalized.at(1) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(r.readout.content.at(0) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(r.readout.content.at(1) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("attend is a convex combination") {
    Rng rng(2);
    MemoryBank bank = make_bank(6, 4, rng, 1.0);
    Tensor h = Tensor::vec({0.3, -0.2, 0.9, 0.1});
    AttendResult r = attend(h, bank);
    double sum = 0.0;
    for (int64_t j = 0; j < 6; ++j) {
        CHECK(r.weights.normalized.at(j) > 0.0);
        sum += r.weights.normalized.at(j);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    for (int64_t k = 0; k < 4; ++k) {
        double want = 0.0;
        for (int64_t j = 0; j < 6; ++j)
            want += r.weights.normalized.at(j) * bank.values.value.at(j, k);
        CHECK(r.readout.content.at(k) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("attend rejects overflowing logits and bad shapes") {
    MemoryBank bank = bank_from({{800, 0}, {0, 1}}, {{1, 1}, {3, 5}});
    CHECK_THROWS_AS(attend(Tensor::vec({1.0, 0.0}), bank), Error);
    MemoryBank ok = bank_from({{1, 0}, {0, 1}}, {{1, 1}, {3, 5}});
    CHECK_THROWS_AS(attend(Tensor::vec({1.0, 0.0, 0.0}), ok), Error);
}

TEST_CASE("tape attention agrees with the analysis path and is differentiable") {
    Rng rng(3);
    MemoryBank bank = make_bank(5, 3, rng, 1.0);
    Tensor h = Tensor::vec({0.4, -1.0, 0.25});
    AttendResult ref = attend(h, bank);

    Tape tape;
    TapeAttend ta = attend_on_tape(tape, tape.constant(h), bank);
    for (int64_t j = 0; j < 5; ++j)
        CHECK(tape.value(ta.alpha).at(j) ==
              doctest::Approx(ref.weights.normalized.at(j)).epsilon(1e-12));
    for (int64_t k = 0; k < 3; ++k)
        CHECK(tape.value(ta.readout).at(k) ==
              doctest::Approx(ref.readout.content.at(k)).epsilon(1e-12));

    Parameter query("q", h);
    Tape t2;
    auto loss_fn = [&]() {
        t2.clear();
        TapeAttend a = attend_on_tape(t2, t2.param(query), bank);
        Var loss = t2.sum(t2.mul(a.readout, a.readout));
        t2.backward(loss);
        return t2.value(loss).at(0);
    };
    GradCheckResult res = grad_check(loss_fn, {&query, &bank.keys, &bank.values});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("expand appends random slots and preserves old rows bitwise") {
    Rng rng(4);
    MemoryBank bank = make_bank(3, 4, rng);
    Tensor keys_before = bank.keys.value, values_before = bank.values.value;
    Rng grow(5);
    expand(bank, 2, grow);
    CHECK(bank.slots() == 5);
    CHECK(bank.domain_boundaries == std::vector<int64_t>{3, 5});
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 4; ++j) {
            CHECK(bank.keys.value.at(i, j) == keys_before.at(i, j));
            CHECK(bank.values.value.at(i, j) == values_before.at(i, j));
        }
    // new rows: nonzero and within the default init scale 1/sqrt(d)
    double maxabs = 0.0;
    for (int64_t i = 3; i < 5; ++i)
        for (int64_t j = 0; j < 4; ++j)
            maxabs = std::max(maxabs, std::fabs(bank.keys.value.at(i, j)));
    CHECK(maxabs > 0.0);
    CHECK(maxabs <= 0.5);
}

TEST_CASE("expand with m=0 records a boundary and changes nothing else") {
    Rng rng(6);
    MemoryBank bank = make_bank(4, 2, rng);
    Tensor keys_before = bank.keys.value;
    uint64_t probe_before = Rng(99).next_u64();
    Rng grow(99);
    expand(bank, 0, grow);
    CHECK(grow.next_u64() == probe_before);  // no rng draws consumed
    CHECK(bank.slots() == 4);
    CHECK(bank.domain_boundaries == std::vector<int64_t>{4, 4});
    for (size_t i = 0; i < keys_before.data.size(); ++i)
        CHECK(bank.keys.value.data[i] == keys_before.data[i]);
}

TEST_CASE("attention rescaling law across expansion") {
    // alpha'_j = alpha_j * S_old / (S_old + S_new) for every old slot, i.e.
    // two softmaxes over the union agree with mass-scaled old weights.
    Rng rng(7);
    for (int pair = 0; pair < 1000; ++pair) {
        int64_t n = 1 + int64_t(rng.below(6)), m = 1 + int64_t(rng.below(4));
        int64_t d = 2 + int64_t(rng.below(3));
        MemoryBank bank = make_bank(n, d, rng, 1.0);
        Tensor h = Tensor::zeros({d});
        for (double& v : h.data) v = rng.normal();
        AttendResult before = attend(h, bank);
        expand(bank, m, rng, 1.0);
        AttendResult after = attend(h, bank);
        MassSplit split = attention_mass_split(after.weights, n);
        double scale = split.s_old / (split.s_old + split.s_new);
        for (int64_t j = 0; j < n; ++j) {
            double want = before.weights.normalized.at(j) * scale;
            double got = after.weights.normalized.at(j);
            CHECK(std::fabs(got - want) <= 1e-12);
        }
    }
}

TEST_CASE("attention_mass_split partitions the unnormalized mass") {
    Rng rng(8);
    MemoryBank bank = make_bank(6, 3, rng, 1.0);
    Tensor h = Tensor::vec({0.1, 0.2, -0.3});
    AttendResult r = attend(h, bank);
    MassSplit split = attention_mass_split(r.weights, 4);
    double total = 0.0;
    for (int64_t j = 0; j < 6; ++j) total += r.weights.unnormalized.at(j);
    CHECK(split.s_old + split.s_new == doctest::Approx(total).epsilon(1e-12));
    double old_sum = 0.0;
    for (int64_t j = 0; j < 4; ++j) old_sum += r.weights.unnormalized.at(j);
    CHECK(split.s_old == doctest::Approx(old_sum).epsilon(1e-12));
}

TEST_CASE("make_bank validates arguments") {
    Rng rng(9);
    CHECK_THROWS_AS(make_bank(2, 0, rng), Error);
    CHECK_THROWS_AS(make_bank(-1, 3, rng), Error);
    CHECK_THROWS_AS(make_bank(0, 3, rng), Error);
    MemoryBank bank = make_bank(1, 3, rng);
    CHECK_THROWS_AS(expand(bank, -1, rng), Error);
}
