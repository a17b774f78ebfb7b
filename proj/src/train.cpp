#include "pmem/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pmem {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.lr <= 0.0 || cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 ||
        cfg_.beta2 >= 1.0 || cfg_.eps <= 0.0)
        fail("config", "bad Adam settings: lr=", cfg_.lr, " beta1=", cfg_.beta1,
             " beta2=", cfg_.beta2, " eps=", cfg_.eps);
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Parameter* p : params_) {
        m_.push_back(Tensor::zeros(p->value.shape));
        v_.push_back(Tensor::zeros(p->value.shape));
    }
}

void Adam::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Parameter& p = *params_[pi];
        if (!p.value.same_shape(m_[pi]))
            fail("optim", "parameter ", p.name, " changed shape under a live optimizer");
        double* mp = m_[pi].data.data();
        double* vp = v_[pi].data.data();
        double* w = p.value.data.data();
        const double* g = p.grad.data.data();
        int64_t n = p.numel();
        for (int64_t i = 0; i < n; ++i) {
            mp[i] = cfg_.beta1 * mp[i] + (1.0 - cfg_.beta1) * g[i];
            vp[i] = cfg_.beta2 * vp[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            double mhat = mp[i] / bc1;
            double vhat = vp[i] / bc2;
            w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

FreezeMask FreezeMask::freeze_all(const std::vector<Parameter*>& params) {
    FreezeMask mask;
    for (const Parameter* p : params) mask.frozen_prefix[p->name] = p->numel();
    return mask;
}

void FreezeMask::apply(const std::vector<Parameter*>& params) const {
    for (Parameter* p : params) {
        auto it = frozen_prefix.find(p->name);
        if (it == frozen_prefix.end()) continue;
        int64_t n = std::min<int64_t>(it->second, p->numel());
        for (int64_t i = 0; i < n; ++i) p->grad.at(i) = 0.0;
    }
}

namespace {

// Zero-pads a saved tensor to the current shape. Growth is row-append only,
// so old elements form a row-major prefix.
Tensor pad_to_shape(const Tensor& src, const std::vector<int64_t>& target) {
    if (src.shape == target) return src;
    if (src.rank() != static_cast<int64_t>(target.size()))
        fail("optim", "anchor rank changed from ", shape_str(src), " to ", shape_str(target));
    if (src.rank() == 2 && src.shape[1] != target[1])
        fail("optim", "anchor column count changed from ", shape_str(src), " to ",
             shape_str(target));
    if (src.numel() > Tensor::zeros(target).numel())
        fail("optim", "anchor ", shape_str(src), " larger than parameter ", shape_str(target));
    Tensor out = Tensor::zeros(target);
    std::copy(src.data.begin(), src.data.end(), out.data.begin());
    return out;
}

}  // namespace

Var EwcState::penalty_on_tape(Tape& tape, const std::vector<Parameter*>& params) const {
    if (anchor.size() != params.size() || fisher.size() != params.size())
        fail("optim", "EWC state covers ", anchor.size(), " parameters, model has ",
             params.size());
    Var total = tape.constant(Tensor::scalar(0.0));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        Var pv = tape.param(p);
        Var a = tape.constant(pad_to_shape(anchor[pi], p.value.shape));
        Var f = tape.constant(pad_to_shape(fisher[pi], p.value.shape));
        Var diff = tape.sub(pv, a);
        Var term = tape.sum(tape.mul(f, tape.mul(diff, diff)));
        total = tape.add(total, term);
    }
    return tape.scale(total, lambda / 2.0);
}

std::vector<Tensor> compute_fisher(Model& model, const std::vector<std::vector<int32_t>>& ids,
                                   const std::vector<int64_t>& labels, int64_t n_samples,
                                   Rng& rng) {
    if (ids.size() != labels.size()) fail("optim", "fisher inputs disagree in length");
    if (n_samples < 1 || n_samples > static_cast<int64_t>(ids.size()))
        fail("optim", "fisher sample count ", n_samples, " out of range for ", ids.size(),
             " examples");
    std::vector<Parameter*> params = model.parameters();
    for (Parameter* p : params)
        if (!p->value.all_finite()) fail("optim", "non-finite parameter ", p->name);

    std::vector<size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    order.resize(static_cast<size_t>(n_samples));

    std::vector<Tensor> fisher;
    for (Parameter* p : params) fisher.push_back(Tensor::zeros(p->value.shape));

    Tape tape;
    for (size_t idx : order) {
        tape.clear();
        for (Parameter* p : params) p->zero_grad();
        ModelVars vars = model_on_tape(tape, model);
        Var loss = tape.cross_entropy(model_logits(tape, model, vars, ids[idx]), labels[idx]);
        if (!std::isfinite(tape.value(loss).at(0)))
            fail("optim", "non-finite loss while estimating Fisher");
        tape.backward(loss);
        for (size_t pi = 0; pi < params.size(); ++pi) {
            const Tensor& g = params[pi]->grad;
            for (size_t i = 0; i < g.data.size(); ++i)
                fisher[pi].data[i] += g.data[i] * g.data[i];
        }
    }
    double inv = 1.0 / static_cast<double>(n_samples);
    for (Tensor& f : fisher)
        for (double& v : f.data) v *= inv;
    for (Parameter* p : params) p->zero_grad();
    return fisher;
}

std::vector<Batch> batch_pad(const std::vector<LabeledIds>& examples, int64_t batch_size,
                             int32_t pad_id) {
    if (batch_size < 1) fail("data", "batch_size must be >= 1, got ", batch_size);
    std::vector<Batch> batches;
    for (size_t start = 0; start < examples.size(); start += static_cast<size_t>(batch_size)) {
        size_t end = std::min(examples.size(), start + static_cast<size_t>(batch_size));
        Batch b;
        size_t width = 0;
        for (size_t i = start; i < end; ++i) width = std::max(width, examples[i].ids.size());
        for (size_t i = start; i < end; ++i) {
            const LabeledIds& ex = examples[i];
            std::vector<int32_t> row = ex.ids;
            row.resize(width, pad_id);
            b.tokens.push_back(std::move(row));
            b.lengths.push_back(static_cast<int64_t>(ex.ids.size()));
            b.labels.push_back(ex.label);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

double accuracy(Model& model, const std::vector<LabeledIds>& examples) {
    if (examples.empty()) fail("data", "accuracy over empty set");
    Tape scratch;
    int64_t hits = 0;
    for (const LabeledIds& ex : examples)
        if (predict(scratch, model, ex.ids) == ex.label) ++hits;
    return static_cast<double>(hits) / static_cast<double>(examples.size());
}

namespace {

std::vector<Tensor> snapshot_values(const std::vector<Parameter*>& params) {
    std::vector<Tensor> vals;
    vals.reserve(params.size());
    for (Parameter* p : params) vals.push_back(p->value);
    return vals;
}

void restore_values(const std::vector<Parameter*>& params, const std::vector<Tensor>& vals) {
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = vals[i];
}

}  // namespace

TrainResult train_domain(Model& model, const std::vector<LabeledIds>& train,
                         const std::vector<LabeledIds>& valid, const TrainOptions& opts,
                         Rng& rng, const FreezeMask* freeze, const EwcState* ewc) {
    if (train.empty()) fail("data", "train_domain on empty training set");
    if (valid.empty()) fail("data", "train_domain needs a validation set");
    TrainResult res;
    if (opts.epochs <= 0) return res;

    std::vector<Parameter*> params = model.parameters();
    Adam adam(params, opts.adam);
    bool use_ewc = ewc && ewc->lambda != 0.0 && !ewc->fisher.empty();

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<Tensor> best;
    double best_acc = -1.0;
    int64_t since_best = 0;
    Tape tape;

    for (int64_t epoch = 0; epoch < opts.epochs; ++epoch) {
        rng.shuffle(order);
        std::vector<LabeledIds> permuted;
        permuted.reserve(train.size());
        for (size_t idx : order) permuted.push_back(train[idx]);
        std::vector<Batch> batches = batch_pad(permuted, opts.batch_size, VocabMap::kPad);

        double loss_sum = 0.0;
        for (const Batch& batch : batches) {
            tape.clear();
            ModelVars vars = model_on_tape(tape, model);
            Var loss{-1};
            for (size_t r = 0; r < batch.tokens.size(); ++r) {
                std::vector<int32_t> ids(batch.tokens[r].begin(),
                                         batch.tokens[r].begin() + batch.lengths[r]);
                Var ce = tape.cross_entropy(model_logits(tape, model, vars, ids),
                                            batch.labels[r]);
                loss = r == 0 ? ce : tape.add(loss, ce);
            }
            loss = tape.scale(loss, 1.0 / static_cast<double>(batch.tokens.size()));
            if (use_ewc) loss = tape.add(loss, ewc->penalty_on_tape(tape, params));
            double lv = tape.value(loss).at(0);
            if (!std::isfinite(lv)) fail("train", "non-finite batch loss at epoch ", epoch);
            loss_sum += lv;
            adam.zero_grad();
            tape.backward(loss);
            if (freeze) freeze->apply(params);
            adam.step();
        }
        res.final_train_loss = loss_sum / static_cast<double>(batches.size());
        ++res.epochs_run;

        double val_acc = accuracy(model, valid);
        if (val_acc > best_acc) {
            best_acc = val_acc;
            best = snapshot_values(params);
            since_best = 0;
        } else {
            ++since_best;
            if (since_best >= opts.patience) break;
        }
    }

    if (!best.empty()) restore_values(params, best);
    res.best_valid_acc = best_acc;
    return res;
}

}  // namespace pmem
