#pragma once

#include <functional>
#include <optional>
#include <unordered_map>
#include <vector>

#include "pmem/model.hpp"

namespace pmem {

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam. Moments are indexed by position in the parameter
// list, so the list must not change shape during the optimizer's lifetime;
// expansions happen between domains, where a fresh optimizer is created.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig cfg);

    void step();
    void zero_grad();
    int64_t steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_, v_;
    int64_t t_ = 0;
    AdamConfig cfg_;
};

// Freezing is expressed as a count of leading frozen elements per parameter
// name (row-major), because every growth operation appends rows. A missing
// entry means nothing is frozen. apply() zeroes the frozen gradient region,
// which makes Adam updates exactly zero there (moments never leave zero).
struct FreezeMask {
    std::unordered_map<std::string, int64_t> frozen_prefix;

    static FreezeMask freeze_all(const std::vector<Parameter*>& params);
    void apply(const std::vector<Parameter*>& params) const;
    bool empty() const { return frozen_prefix.empty(); }
};

// Quadratic anchor penalty (lambda/2) * sum_k F_k (theta_k - theta*_k)^2.
// anchor and fisher are indexed like the model's parameter list. When a
// parameter grew by appended rows since the anchor was taken, the anchor and
// fisher entries are padded with zeros (new elements are unpenalized).
struct EwcState {
    std::vector<Tensor> anchor;
    std::vector<Tensor> fisher;
    double lambda = 1.0;

    Var penalty_on_tape(Tape& tape, const std::vector<Parameter*>& params) const;
};

// Empirical diagonal Fisher: mean over sampled examples of the squared
// gradient of the observed-label log-likelihood.
std::vector<Tensor> compute_fisher(Model& model, const std::vector<std::vector<int32_t>>& ids,
                                   const std::vector<int64_t>& labels, int64_t n_samples,
                                   Rng& rng);

struct LabeledIds {
    std::vector<int32_t> ids;
    int64_t label = 0;
};

struct Batch {
    std::vector<std::vector<int32_t>> tokens;  // right-padded to batch max
    std::vector<int64_t> lengths;
    std::vector<int64_t> labels;
};

std::vector<Batch> batch_pad(const std::vector<LabeledIds>& examples, int64_t batch_size,
                             int32_t pad_id);

double accuracy(Model& model, const std::vector<LabeledIds>& examples);

struct TrainOptions {
    int64_t epochs = 8;
    int64_t patience = 3;  // early-stop patience, in validation evaluations
    int64_t batch_size = 32;
    AdamConfig adam;
};

struct TrainResult {
    int64_t epochs_run = 0;
    double best_valid_acc = 0.0;
    double final_train_loss = 0.0;
};

// Mini-batch training with per-epoch validation and early stopping on
// validation accuracy (strict improvement resets patience). The parameter
// state with the best validation accuracy is restored before returning.
// rng drives the per-epoch shuffles only.
TrainResult train_domain(Model& model, const std::vector<LabeledIds>& train,
                         const std::vector<LabeledIds>& valid, const TrainOptions& opts,
                         Rng& rng, const FreezeMask* freeze = nullptr,
                         const EwcState* ewc = nullptr);

}  // namespace pmem
