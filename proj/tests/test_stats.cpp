// Signed-rank test against fully hand-enumerated null distributions, plus
// bootstrap determinism and the report renderers.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pmem/stats.hpp"

using namespace pmem;

namespace {

std::vector<double> zeros_like(size_t n) { return std::vector<double>(n, 0.0); }

}  // namespace

TEST_CASE("five positive pairs give the classic exact p = 1/32") {
    std::vector<double> x{2.0, 3.1, 4.7, 0.9, 5.5};
    std::vector<double> y{1.0, 2.0, 3.0, 0.5, 4.0};
    WilcoxonResult r = wilcoxon_one_tailed(x, y, Alternative::kGreater);
    CHECK(r.defined);
    CHECK(r.exact);
    CHECK(r.n_effective == 5);
    CHECK(r.statistic == doctest::Approx(15.0).epsilon(1e-15));  // ranks 1..5
    CHECK(r.p_value == doctest::Approx(0.03125).epsilon(1e-15));
    // the other tail covers the whole null distribution
    WilcoxonResult l = wilcoxon_one_tailed(x, y, Alternative::kLess);
    CHECK(l.p_value == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("exact p matches hand enumeration with mixed signs") {
    // diffs {1, -2, 3, 4}: ranks 1, 2, 3, 4; W+ = 1 + 3 + 4 = 8.
    // Sums of subsets of {1,2,3,4}: P(W+ >= 8) = 3/16, P(W+ <= 8) = 14/16.
    std::vector<double> x{1.0, 0.0, 3.0, 4.0};
    std::vector<double> y = zeros_like(4);
    y[1] = 2.0;
    WilcoxonResult g = wilcoxon_one_tailed(x, y, Alternative::kGreater);
    CHECK(g.exact);
    CHECK(g.statistic == doctest::Approx(8.0).epsilon(1e-15));
    CHECK(g.p_value == doctest::Approx(3.0 / 16.0).epsilon(1e-15));
    WilcoxonResult l = wilcoxon_one_tailed(x, y, Alternative::kLess);
    CHECK(l.p_value == doctest::Approx(14.0 / 16.0).epsilon(1e-15));
}

TEST_CASE("swapping the samples swaps the tails exactly") {
    std::vector<double> x{1.0, -2.0, 3.5, 0.25, -0.75, 6.0};
    std::vector<double> y{0.5, 1.0, -2.0, 1.5, 0.5, 2.0};
    WilcoxonResult g = wilcoxon_one_tailed(x, y, Alternative::kGreater);
    WilcoxonResult swapped = wilcoxon_one_tailed(y, x, Alternative::kLess);
    CHECK(g.exact);
    CHECK(g.p_value == doctest::Approx(swapped.p_value).epsilon(1e-15));
}

TEST_CASE("tied magnitudes get average ranks") {
    // diffs {1, 1, -2}: the two unit diffs share rank (1+2)/2 = 1.5.
    // W+ = 3; subset sums of {1.5, 1.5, 3}: P(W+ >= 3) = 5/8.
    std::vector<double> x{1.0, 1.0, 0.0};
    std::vector<double> y{0.0, 0.0, 2.0};
    WilcoxonResult r = wilcoxon_one_tailed(x, y, Alternative::kGreater);
    CHECK(r.statistic == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(r.p_value == doctest::Approx(5.0 / 8.0).epsilon(1e-15));
}

TEST_CASE("zero differences drop out before ranking") {
    std::vector<double> x{7.0, 1.5, 2.5, 9.0, 3.5, 4.5, 5.5};
    std::vector<double> y{7.0, 0.5, 1.5, 9.0, 2.5, 3.5, 4.5};  // two exact ties
    WilcoxonResult r = wilcoxon_one_tailed(x, y, Alternative::kGreater);
    CHECK(r.n_effective == 5);
    CHECK(r.exact);
    CHECK(r.p_value == doctest::Approx(0.03125).epsilon(1e-15));
}

TEST_CASE("all-zero differences leave the test undefined rather than throwing") {
    std::vector<double> x{1.0, 2.0, 3.0};
    WilcoxonResult r = wilcoxon_one_tailed(x, x, Alternative::kGreater);
    CHECK(!r.defined);
    CHECK(r.n_effective == 0);
    CHECK(r.p_value == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("input validation") {
    CHECK_THROWS_AS(wilcoxon_one_tailed({1.0, 2.0}, {1.0}, Alternative::kGreater), Error);
    std::vector<double> bad{1.0, std::nan("")};
    CHECK_THROWS_AS(wilcoxon_one_tailed(bad, zeros_like(2), Alternative::kGreater), Error);
}

TEST_CASE("large samples switch to the corrected normal approximation") {
    // 25 strictly positive differences, no ties: W+ = 325.
    std::vector<double> x, y;
    for (int i = 1; i <= 25; ++i) {
        x.push_back(static_cast<double>(i));
        y.push_back(0.0);
    }
    WilcoxonResult r = wilcoxon_one_tailed(x, y, Alternative::kGreater);
    CHECK(!r.exact);
    CHECK(r.n_effective == 25);
    CHECK(r.statistic == doctest::Approx(325.0).epsilon(1e-15));
    // Standard z with continuity correction: mean n(n+1)/4, var n(n+1)(2n+1)/24.
    double mean = 25.0 * 26.0 / 4.0;
    double var = 25.0 * 26.0 * 51.0 / 24.0;
    double z = (325.0 - mean - 0.5) / std::sqrt(var);
    double want = 0.5 * std::erfc(z / std::sqrt(2.0));
    CHECK(r.p_value == doctest::Approx(want).epsilon(1e-10));
    CHECK(r.p_value < 1e-5);

    // A balanced sample is nowhere near significant.
    std::vector<double> xb, yb;
    for (int i = 1; i <= 30; ++i) {
        xb.push_back(i % 2 ? static_cast<double>(i) : 0.0);
        yb.push_back(i % 2 ? 0.0 : static_cast<double>(i));
    }
    WilcoxonResult b = wilcoxon_one_tailed(xb, yb, Alternative::kGreater);
    CHECK(!b.exact);
    CHECK(b.p_value > 0.1);
    CHECK(b.p_value < 0.9);
}

TEST_CASE("bootstrap accuracies are deterministic, valued in steps of 1/size") {
    std::vector<int64_t> preds{1, 1, 0, 2};
    std::vector<int64_t> labels{1, 0, 0, 2};  // 3 of 4 correct
    auto a = bootstrap_eval(preds, labels, 4, 12, 77);
    auto b = bootstrap_eval(preds, labels, 4, 12, 77);
    REQUIRE(a.size() == 12);
    CHECK(a == b);
    for (double v : a) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        double scaled = v * 4.0;
        CHECK(scaled == doctest::Approx(std::round(scaled)).epsilon(1e-12));
    }
    auto c = bootstrap_eval(preds, labels, 4, 12, 78);
    CHECK(a != c);

    // the bootstrap mean tracks the point accuracy
    auto many = bootstrap_eval(preds, labels, 4, 4000, 3);
    double mean = 0.0;
    for (double v : many) mean += v;
    mean /= static_cast<double>(many.size());
    CHECK(mean == doctest::Approx(0.75).epsilon(0.03));

    CHECK_THROWS_AS(bootstrap_eval({}, {}, 1, 1, 0), Error);
    CHECK_THROWS_AS(bootstrap_eval(preds, {1, 0}, 1, 1, 0), Error);
    CHECK_THROWS_AS(bootstrap_eval(preds, labels, 0, 1, 0), Error);
    CHECK_THROWS_AS(bootstrap_eval(preds, labels, 4, 0, 0), Error);
}

TEST_CASE("paired bootstrap shares indices between the two methods") {
    // Identical correctness vectors: with shared indices every repeat ties,
    // so the test is undefined. Independent indices would rarely tie at all.
    std::vector<uint8_t> same{1, 0, 1, 1, 0, 1, 0, 1, 1, 1, 0, 0, 1, 1, 0, 1};
    WilcoxonResult tied = bootstrap_wilcoxon(same, same, 8, 15, 5);
    CHECK(!tied.defined);

    // A dominates B pointwise: every resampled difference is >= 0.
    std::vector<uint8_t> a(24, 1);
    std::vector<uint8_t> b(24, 0);
    for (size_t i = 0; i < 12; ++i) b[i] = 1;
    WilcoxonResult dom = bootstrap_wilcoxon(a, b, 12, 15, 5);
    CHECK(dom.defined);
    CHECK(dom.exact);
    CHECK(dom.p_value == doctest::Approx(1.0 / 32768.0).epsilon(1e-12));  // 2^-15

    CHECK_THROWS_AS(bootstrap_wilcoxon(a, {1, 0}, 4, 4, 0), Error);
    CHECK_THROWS_AS(bootstrap_wilcoxon({}, {}, 4, 4, 0), Error);
}

TEST_CASE("matrix renderers blank out never-evaluated cells") {
    AccuracyMatrix m;
    m.row_labels = {"after d0", "after d1"};
    m.col_labels = {"d0", "d1"};
    m.cells = {{97.5, -1.0}, {96.25, 88.0}};
    std::string csv = matrix_to_csv(m);
    CHECK(csv.find("stage,d0,d1") == 0);
    CHECK(csv.find("after d0,97.5000,\n") != std::string::npos);  // -1 renders empty
    CHECK(csv.find("after d1,96.2500,88.0000") != std::string::npos);
    std::string md = matrix_to_markdown(m);
    CHECK(md.find("| after d0 | 97.5000 | - |") != std::string::npos);
    CHECK(md.find("| d0 | d1 |") != std::string::npos);
}

TEST_CASE("method comparison aggregates per-seed matrices cellwise") {
    auto mk = [](double v) {
        AccuracyMatrix m;
        m.row_labels = {"after d0"};
        m.col_labels = {"d0", "d1"};
        m.cells = {{v, v - 10.0}};
        return m;
    };
    std::vector<AccuracyMatrix> a{mk(80.0), mk(82.0), mk(81.0), mk(83.0), mk(84.0)};
    std::vector<AccuracyMatrix> bteam{mk(70.0), mk(71.0), mk(69.0), mk(72.0), mk(68.0)};
    MethodComparison c = compare_methods(a, bteam);
    REQUIRE(c.mean_a.size() == 1);
    REQUIRE(c.mean_a[0].size() == 2);
    CHECK(c.mean_a[0][0] == doctest::Approx(82.0).epsilon(1e-12));
    CHECK(c.mean_b[0][0] == doctest::Approx(70.0).epsilon(1e-12));
    CHECK(c.mean_a[0][1] == doctest::Approx(72.0).epsilon(1e-12));
    // five seeds, a above b on every one: exact one-tailed p = 1/32
    CHECK(c.p_greater[0][0] == doctest::Approx(0.03125).epsilon(1e-12));
    CHECK(c.p_less[0][0] == doctest::Approx(1.0).epsilon(1e-12));

    std::string md = comparison_to_markdown(c, "mem", "baseline");
    CHECK(md.find("mem") != std::string::npos);
    CHECK(md.find("baseline") != std::string::npos);

    CHECK_THROWS_AS(compare_methods(a, {mk(1.0)}), Error);
    std::vector<AccuracyMatrix> bent = a;
    bent[0].cells[0].pop_back();
    CHECK_THROWS_AS(compare_methods(bent, a), Error);
    CHECK_THROWS_AS(compare_methods({}, {}), Error);
}
