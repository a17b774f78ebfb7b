#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pmem/rng.hpp"

namespace pmem {

enum class Alternative { kGreater, kLess };

struct WilcoxonResult {
    double statistic = 0.0;   // signed-rank sum of positive differences (W+)
    double p_value = 1.0;
    int64_t n_effective = 0;  // pairs remaining after zero differences drop out
    bool exact = false;       // exact enumeration vs normal approximation
    bool defined = true;      // false when every difference is zero
};

// One-tailed Wilcoxon signed-rank test on paired differences x - y.
// Zero differences are dropped; ties get average ranks. Up to 20 effective
// pairs the null distribution is enumerated exactly (2^n sign assignments,
// p = P(W+ >= observed) for kGreater); beyond that a normal approximation
// with continuity correction and a tie correction to the variance is used.
// All-zero differences leave the test undefined (reported, not thrown).
WilcoxonResult wilcoxon_one_tailed(const std::vector<double>& x, const std::vector<double>& y,
                                   Alternative alt = Alternative::kGreater);

// `repeats` accuracies, each over a with-replacement sample of subset_size
// prediction/label pairs. Deterministic given the seed.
std::vector<double> bootstrap_eval(const std::vector<int64_t>& predictions,
                                   const std::vector<int64_t>& labels, int64_t subset_size,
                                   int64_t repeats, uint64_t seed);

// Paired bootstrap: both methods' correctness vectors are resampled with the
// same indices per repeat, then the one-tailed Wilcoxon runs across the
// repeated accuracy pairs.
WilcoxonResult bootstrap_wilcoxon(const std::vector<uint8_t>& correct_a,
                                  const std::vector<uint8_t>& correct_b, int64_t subset_size,
                                  int64_t repeats, uint64_t seed,
                                  Alternative alt = Alternative::kGreater);

// Accuracy matrix for a domain schedule: rows are stages (after training on
// domain i), columns are evaluation domains. -1 marks cells never evaluated.
struct AccuracyMatrix {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<std::vector<double>> cells;
};

std::string matrix_to_csv(const AccuracyMatrix& m);
std::string matrix_to_markdown(const AccuracyMatrix& m);

// Per-cell comparison of two methods across seeds. Annotates each cell of
// `a` with the mean difference to `b` and an arrow when a one-tailed
// Wilcoxon over seeds is significant: up/down at p < 0.05, double at p < 0.01.
struct MethodComparison {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<std::vector<double>> mean_a;
    std::vector<std::vector<double>> mean_b;
    std::vector<std::vector<double>> p_greater;  // P(a > b)
    std::vector<std::vector<double>> p_less;
};

// per_seed_x[seed] is a full accuracy matrix for one seed; all seeds must
// share the same shape.
MethodComparison compare_methods(const std::vector<AccuracyMatrix>& per_seed_a,
                                 const std::vector<AccuracyMatrix>& per_seed_b);

std::string comparison_to_markdown(const MethodComparison& c, const std::string& name_a,
                                   const std::string& name_b);

}  // namespace pmem
