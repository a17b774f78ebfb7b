#pragma once

#include <string>
#include <vector>

#include "pmem/rng.hpp"
#include "pmem/tensor.hpp"

namespace pmem {

// Monte Carlo verification of the expansion-perturbation bound: with all
// sampled quantities iid N(0, sigma^2), state expansion perturbs the old
// hidden dimensions by E||W~ h~||^2 = D d sigma^4, while memory expansion
// perturbs them by E||W_c (c' - c)||^2 = D d sigma^2 Var(dc_k), and
// Var(dc_k) <= sigma^2 whenever the new slots' unnormalized attention mass
// does not exceed the old slots'.

enum class AttentionMode { kSampled, kSampledConditioned, kFixed };

AttentionMode attention_mode_from_string(const std::string& s);
std::string attention_mode_to_string(AttentionMode m);

struct SimulationConfig {
    int64_t D = 8;  // original hidden width
    int64_t d = 4;  // expansion width and slot dim
    double sigma = 1.0;
    int64_t N = 8;  // old slots
    int64_t M = 2;  // new slots
    int64_t trials = 100000;
    uint64_t seed = 0;
    AttentionMode mode = AttentionMode::kSampled;
    Tensor fixed_alpha;  // [N+M] unnormalized weights, kFixed only
    // The theorem fixes h_{i-1} but the expectation samples it; both
    // readings are supported and the report records which was used.
    bool fix_query_across_trials = false;

    void validate() const;
};

struct TheoremTrial {
    double sq_diff_state = 0.0;  // ||W~ h~||^2
    double sq_diff_mem = 0.0;    // ||W_c dc||^2
    Tensor beta;                 // [N+M]
    Tensor delta_c;              // [d]
    double mass_old = 0.0;
    double mass_new = 0.0;
    bool assumption_held = false;
    int64_t resamples = 0;

    // per-trial exact-identity diagnostics
    double abs_beta_sum = 0.0;       // |sum_j beta_j|
    double max_decomp_err = 0.0;     // max_k |dc_k - sum_j beta_j v_jk|
    double max_two_attend_err = 0.0; // max_k |dc_k - (c'_k - c_k)|
    double max_beta_excess = 0.0;    // max_j |beta_j| - alpha'_j
};

// The two-case decomposition of dc over slots: for old j,
// beta_j = -a~_j S_new / (S_total S_old); for new j, beta_j = a~_j / S_total.
Tensor beta_weights(const Tensor& unnormalized_old, const Tensor& unnormalized_new);

double analytic_state_msd(int64_t D, int64_t d, double sigma);

// One trial; rng must be the trial's own stream so that trials are
// independent and order-insensitive.
TheoremTrial simulate_trial(const SimulationConfig& cfg, Rng& rng);

struct VerifierCheck {
    std::string name;
    bool pass = false;
    bool informational = false;
    double value = 0.0;
    double bound = 0.0;
    std::string detail;
};

struct VerifierReport {
    SimulationConfig cfg;
    double analytic_state = 0.0;
    double mc_state_msd = 0.0, mc_state_stderr = 0.0;
    double mc_mem_msd = 0.0, mc_mem_stderr = 0.0;            // all trials
    double mc_mem_msd_cond = 0.0, mc_mem_stderr_cond = 0.0;  // assumption held
    double var_delta_c_cond = 0.0, var_delta_c_stderr = 0.0;
    double assumption_fraction = 0.0;
    int64_t conditioned_trials = 0;
    int64_t total_resamples = 0;
    double max_abs_beta_sum = 0.0;
    double max_decomp_err = 0.0;
    double max_two_attend_err = 0.0;
    double max_beta_excess_held = 0.0;  // over assumption-held trials
    std::vector<VerifierCheck> checks;
    bool all_pass = false;
};

// Aggregates cfg.trials independent trials. Trials carry deterministic
// per-index seeds; parallel and serial execution produce the identical
// report. force_serial is for the benchmark comparison.
VerifierReport verify_theorem(const SimulationConfig& cfg, bool force_serial = false);

std::string report_to_json(const VerifierReport& report);
std::string report_to_table(const VerifierReport& report);

}  // namespace pmem
