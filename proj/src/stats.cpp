#include "pmem/stats.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "pmem/common.hpp"

namespace pmem {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
}

}  // namespace

WilcoxonResult wilcoxon_one_tailed(const std::vector<double>& x, const std::vector<double>& y,
                                   Alternative alt) {
    if (x.size() != y.size()) fail("stats", "paired test needs equal lengths, got ", x.size(),
                                   " and ", y.size());
    std::vector<double> diffs;
    for (size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - y[i];
        if (!std::isfinite(d)) fail("stats", "non-finite difference at pair ", i);
        if (d != 0.0) diffs.push_back(d);
    }
    WilcoxonResult res;
    res.n_effective = static_cast<int64_t>(diffs.size());
    if (diffs.empty()) {
        res.exact = true;
        res.p_value = 1.0;
        res.defined = false;
        return res;
    }

    // Rank |d| with average ranks for ties.
    size_t n = diffs.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return std::fabs(diffs[a]) < std::fabs(diffs[b]);
    });
    std::vector<double> ranks(n);
    std::vector<size_t> tie_sizes;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n &&
               std::fabs(diffs[order[j + 1]]) == std::fabs(diffs[order[i]]))
            ++j;
        double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        tie_sizes.push_back(j - i + 1);
        i = j + 1;
    }

    double w_plus = 0.0;
    for (size_t k = 0; k < n; ++k)
        if (diffs[k] > 0.0) w_plus += ranks[k];
    res.statistic = w_plus;

    if (n <= 20) {
        // Exact null: every sign assignment equally likely.
        res.exact = true;
        uint64_t total = uint64_t{1} << n;
        uint64_t count = 0;
        const double eps = 1e-9;
        for (uint64_t mask = 0; mask < total; ++mask) {
            double s = 0.0;
            for (size_t k = 0; k < n; ++k)
                if (mask & (uint64_t{1} << k)) s += ranks[k];
            bool hit = alt == Alternative::kGreater ? (s >= w_plus - eps) : (s <= w_plus + eps);
            if (hit) ++count;
        }
        res.p_value = static_cast<double>(count) / static_cast<double>(total);
        return res;
    }

    double dn = static_cast<double>(n);
    double mu = dn * (dn + 1.0) / 4.0;
    double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0;
    for (size_t t : tie_sizes) {
        double dt = static_cast<double>(t);
        var -= (dt * dt * dt - dt) / 48.0;
    }
    double sd = std::sqrt(var);
    if (alt == Alternative::kGreater)
        res.p_value = 1.0 - normal_cdf((w_plus - mu - 0.5) / sd);
    else
        res.p_value = normal_cdf((w_plus - mu + 0.5) / sd);
    return res;
}

std::vector<double> bootstrap_eval(const std::vector<int64_t>& predictions,
                                   const std::vector<int64_t>& labels, int64_t subset_size,
                                   int64_t repeats, uint64_t seed) {
    if (predictions.empty()) fail("stats", "bootstrap needs at least one prediction");
    if (predictions.size() != labels.size())
        fail("stats", "predictions and labels disagree: ", predictions.size(), " vs ",
             labels.size());
    if (subset_size < 1) fail("stats", "subset_size must be >= 1");
    if (repeats < 1) fail("stats", "repeats must be >= 1");

    Rng rng(seed);
    std::vector<double> accs;
    accs.reserve(static_cast<size_t>(repeats));
    for (int64_t r = 0; r < repeats; ++r) {
        int64_t hits = 0;
        for (int64_t k = 0; k < subset_size; ++k) {
            size_t i = static_cast<size_t>(rng.below(static_cast<uint64_t>(predictions.size())));
            if (predictions[i] == labels[i]) ++hits;
        }
        accs.push_back(static_cast<double>(hits) / static_cast<double>(subset_size));
    }
    return accs;
}

WilcoxonResult bootstrap_wilcoxon(const std::vector<uint8_t>& correct_a,
                                  const std::vector<uint8_t>& correct_b, int64_t subset_size,
                                  int64_t repeats, uint64_t seed, Alternative alt) {
    if (correct_a.empty() || correct_a.size() != correct_b.size())
        fail("stats", "paired bootstrap needs equal non-empty correctness vectors");
    if (subset_size < 1) fail("stats", "subset_size must be >= 1");
    if (repeats < 1) fail("stats", "repeats must be >= 1");

    Rng rng(seed);
    std::vector<double> acc_a, acc_b;
    for (int64_t r = 0; r < repeats; ++r) {
        int64_t hits_a = 0, hits_b = 0;
        for (int64_t k = 0; k < subset_size; ++k) {
            size_t i = static_cast<size_t>(rng.below(static_cast<uint64_t>(correct_a.size())));
            hits_a += correct_a[i] ? 1 : 0;
            hits_b += correct_b[i] ? 1 : 0;
        }
        acc_a.push_back(static_cast<double>(hits_a) / static_cast<double>(subset_size));
        acc_b.push_back(static_cast<double>(hits_b) / static_cast<double>(subset_size));
    }
    return wilcoxon_one_tailed(acc_a, acc_b, alt);
}

std::string matrix_to_csv(const AccuracyMatrix& m) {
    std::ostringstream os;
    os << "stage";
    for (const std::string& c : m.col_labels) os << "," << c;
    os << "\n";
    for (size_t r = 0; r < m.cells.size(); ++r) {
        os << (r < m.row_labels.size() ? m.row_labels[r] : cat("row", r));
        for (double v : m.cells[r]) {
            os << ",";
            if (v >= 0.0) os << fmt(v);
        }
        os << "\n";
    }
    return os.str();
}

std::string matrix_to_markdown(const AccuracyMatrix& m) {
    std::ostringstream os;
    os << "| stage |";
    for (const std::string& c : m.col_labels) os << " " << c << " |";
    os << "\n|---|";
    for (size_t c = 0; c < m.col_labels.size(); ++c) os << "---|";
    os << "\n";
    for (size_t r = 0; r < m.cells.size(); ++r) {
        os << "| " << (r < m.row_labels.size() ? m.row_labels[r] : cat("row", r)) << " |";
        for (double v : m.cells[r]) {
            if (v >= 0.0)
                os << " " << fmt(v) << " |";
            else
                os << " - |";
        }
        os << "\n";
    }
    return os.str();
}

MethodComparison compare_methods(const std::vector<AccuracyMatrix>& per_seed_a,
                                 const std::vector<AccuracyMatrix>& per_seed_b) {
    if (per_seed_a.empty() || per_seed_a.size() != per_seed_b.size())
        fail("stats", "comparison needs the same non-zero seed count for both methods");
    const AccuracyMatrix& ref = per_seed_a.front();
    size_t rows = ref.cells.size();
    size_t cols = ref.col_labels.size();
    auto check_shape = [&](const AccuracyMatrix& m) {
        if (m.cells.size() != rows) fail("stats", "matrices disagree on row count");
        for (const auto& row : m.cells)
            if (row.size() != cols) fail("stats", "matrices disagree on column count");
    };
    for (const auto& m : per_seed_a) check_shape(m);
    for (const auto& m : per_seed_b) check_shape(m);

    MethodComparison out;
    out.row_labels = ref.row_labels;
    out.col_labels = ref.col_labels;
    out.mean_a.assign(rows, std::vector<double>(cols, -1.0));
    out.mean_b.assign(rows, std::vector<double>(cols, -1.0));
    out.p_greater.assign(rows, std::vector<double>(cols, 1.0));
    out.p_less.assign(rows, std::vector<double>(cols, 1.0));

    for (size_t r = 0; r < rows; ++r) {
        for (size_t c = 0; c < cols; ++c) {
            std::vector<double> va, vb;
            bool all = true;
            for (size_t s = 0; s < per_seed_a.size(); ++s) {
                double a = per_seed_a[s].cells[r][c];
                double b = per_seed_b[s].cells[r][c];
                if (a < 0.0 || b < 0.0) {
                    all = false;
                    break;
                }
                va.push_back(a);
                vb.push_back(b);
            }
            if (!all) continue;
            double ma = 0.0, mb = 0.0;
            for (double v : va) ma += v;
            for (double v : vb) mb += v;
            out.mean_a[r][c] = ma / static_cast<double>(va.size());
            out.mean_b[r][c] = mb / static_cast<double>(vb.size());
            out.p_greater[r][c] = wilcoxon_one_tailed(va, vb, Alternative::kGreater).p_value;
            out.p_less[r][c] = wilcoxon_one_tailed(va, vb, Alternative::kLess).p_value;
        }
    }
    return out;
}

std::string comparison_to_markdown(const MethodComparison& c, const std::string& name_a,
                                   const std::string& name_b) {
    std::ostringstream os;
    os << "Mean accuracy of " << name_a << " (difference to " << name_b
       << " in parentheses; arrows mark one-tailed Wilcoxon significance, "
          "single p<0.05, double p<0.01)\n\n";
    os << "| stage |";
    for (const std::string& col : c.col_labels) os << " " << col << " |";
    os << "\n|---|";
    for (size_t k = 0; k < c.col_labels.size(); ++k) os << "---|";
    os << "\n";
    for (size_t r = 0; r < c.mean_a.size(); ++r) {
        os << "| " << (r < c.row_labels.size() ? c.row_labels[r] : cat("row", r)) << " |";
        for (size_t k = 0; k < c.mean_a[r].size(); ++k) {
            if (c.mean_a[r][k] < 0.0) {
                os << " - |";
                continue;
            }
            double diff = c.mean_a[r][k] - c.mean_b[r][k];
            const char* arrow = "";
            if (c.p_greater[r][k] < 0.01)
                arrow = "⇑";
            else if (c.p_greater[r][k] < 0.05)
                arrow = "↑";
            else if (c.p_less[r][k] < 0.01)
                arrow = "⇓";
            else if (c.p_less[r][k] < 0.05)
                arrow = "↓";
            os << " " << fmt(c.mean_a[r][k], 2) << " (" << (diff >= 0.0 ? "+" : "")
               << fmt(diff, 2) << arrow << ") |";
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace pmem
