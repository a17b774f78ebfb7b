#include "pmem/tape.hpp"

#include <algorithm>
#include <cmath>

namespace pmem {

namespace {

// Floor for log-probabilities. exp(-745) is the smallest positive double of
// the form exp(x); clamping here keeps the loss finite even for p == 0.
constexpr double kLogProbFloor = -745.0;

double apply_act(double x, Activation k) {
    switch (k) {
        case Activation::kTanh: return std::tanh(x);
        case Activation::kSigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::kRelu: return x > 0.0 ? x : 0.0;
        case Activation::kIdentity: return x;
    }
    return x;
}

}  // namespace

void Tape::check(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int32_t>(nodes_.size()))
        fail("tape", "invalid Var id ", v.id, " (tape has ", nodes_.size(), " nodes)");
}

const Tape::Node& Tape::node(Var v) const {
    check(v);
    return nodes_[static_cast<size_t>(v.id)];
}

Var Tape::push(Node n) {
    if (nodes_.size() >= static_cast<size_t>(INT32_MAX)) fail("tape", "tape overflow");
    nodes_.push_back(std::move(n));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.data.empty()) fail("tape", "grad requested before backward reached node ", v.id);
    return n.grad;
}

Var Tape::constant(Tensor t) {
    Node n;
    n.op = Op::kConstant;
    n.value = std::move(t);
    return push(std::move(n));
}

Var Tape::param(Parameter& p) {
    Node n;
    n.op = Op::kParam;
    n.param = &p;
    n.value = p.value;
    return push(std::move(n));
}

Var Tape::gather_rows(Parameter& table, std::vector<int32_t> ids) {
    if (table.value.rank() != 2)
        fail("tape", "gather_rows needs a rank-2 table, got ", shape_str(table.value));
    int64_t rows = table.value.shape[0], cols = table.value.shape[1];
    Node n;
    n.op = Op::kGatherRows;
    n.param = &table;
    n.value = Tensor::zeros({static_cast<int64_t>(ids.size()), cols});
    for (size_t r = 0; r < ids.size(); ++r) {
        int32_t id = ids[r];
        if (id < 0 || id >= rows)
            fail("tape", "gather_rows id ", id, " out of range for table ", shape_str(table.value));
        const double* src = table.value.data.data() + static_cast<int64_t>(id) * cols;
        std::copy(src, src + cols, n.value.data.data() + static_cast<int64_t>(r) * cols);
    }
    n.ids = std::move(ids);
    return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
    Node n;
    n.op = Op::kMatmul;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = pmem::matmul(value(a), value(b));
    return push(std::move(n));
}

Var Tape::matvec_t(Var a, Var w) {
    const Tensor& av = value(a);
    const Tensor& wv = value(w);
    if (av.rank() != 2 || wv.rank() != 1 || av.shape[0] != wv.shape[0])
        fail("tape", "matvec_t mismatch ", shape_str(av), "^T * ", shape_str(wv));
    Node n;
    n.op = Op::kMatvecT;
    n.in0 = a.id;
    n.in1 = w.id;
    n.value = Tensor::zeros({av.shape[1]});
    add_matvec_t(n.value, av, wv);
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv))
        fail("tape", "add shape mismatch ", shape_str(av), " vs ", shape_str(bv));
    Node n;
    n.op = Op::kAdd;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = av;
    for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] += bv.data[i];
    return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv))
        fail("tape", "sub shape mismatch ", shape_str(av), " vs ", shape_str(bv));
    Node n;
    n.op = Op::kSub;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = av;
    for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] -= bv.data[i];
    return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv))
        fail("tape", "mul shape mismatch ", shape_str(av), " vs ", shape_str(bv));
    Node n;
    n.op = Op::kMul;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = av;
    for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] *= bv.data[i];
    return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
    Node n;
    n.op = Op::kScale;
    n.in0 = a.id;
    n.scalar = s;
    n.value = value(a);
    for (double& v : n.value.data) v *= s;
    return push(std::move(n));
}

Var Tape::activation(Var a, Activation kind) {
    Node n;
    n.op = Op::kActivation;
    n.in0 = a.id;
    n.act = kind;
    n.value = value(a);
    for (double& v : n.value.data) v = apply_act(v, kind);
    return push(std::move(n));
}

Var Tape::softmax(Var a) {
    const Tensor& av = value(a);
    if (av.rank() != 1 || av.numel() == 0)
        fail("tape", "softmax needs a non-empty rank-1 input, got ", shape_str(av));
    Node n;
    n.op = Op::kSoftmax;
    n.in0 = a.id;
    n.value = av;
    double mx = *std::max_element(av.data.begin(), av.data.end());
    double sum = 0.0;
    for (double& v : n.value.data) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : n.value.data) v /= sum;
    return push(std::move(n));
}

Var Tape::cross_entropy(Var logits, int64_t label) {
    const Tensor& lv = value(logits);
    if (lv.rank() != 1) fail("tape", "cross_entropy needs rank-1 logits, got ", shape_str(lv));
    if (label < 0 || label >= lv.numel())
        fail("tape", "cross_entropy label ", label, " out of range for ", shape_str(lv));
    Node n;
    n.op = Op::kCrossEntropy;
    n.in0 = logits.id;
    n.i0 = label;
    double mx = *std::max_element(lv.data.begin(), lv.data.end());
    double sum = 0.0;
    for (double v : lv.data) sum += std::exp(v - mx);
    double logp = (lv.at(label) - mx) - std::log(sum);
    n.value = Tensor::scalar(-std::max(logp, kLogProbFloor));
    return push(std::move(n));
}

Var Tape::concat(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.rank() != 1 || bv.rank() != 1)
        fail("tape", "concat needs rank-1 inputs, got ", shape_str(av), " and ", shape_str(bv));
    Node n;
    n.op = Op::kConcat;
    n.in0 = a.id;
    n.in1 = b.id;
    n.value = Tensor::zeros({av.numel() + bv.numel()});
    std::copy(av.data.begin(), av.data.end(), n.value.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), n.value.data.begin() + av.numel());
    return push(std::move(n));
}

Var Tape::slice(Var a, int64_t offset, int64_t len) {
    const Tensor& av = value(a);
    if (av.rank() != 1) fail("tape", "slice needs rank-1 input, got ", shape_str(av));
    if (offset < 0 || len < 0 || offset + len > av.numel())
        fail("tape", "slice [", offset, ", ", offset + len, ") out of range for ", shape_str(av));
    Node n;
    n.op = Op::kSlice;
    n.in0 = a.id;
    n.i0 = offset;
    n.i1 = len;
    n.value = Tensor::zeros({len});
    std::copy(av.data.begin() + offset, av.data.begin() + offset + len, n.value.data.begin());
    return push(std::move(n));
}

Var Tape::row(Var a, int64_t i) {
    const Tensor& av = value(a);
    if (av.rank() != 2) fail("tape", "row needs rank-2 input, got ", shape_str(av));
    if (i < 0 || i >= av.shape[0]) fail("tape", "row ", i, " out of range for ", shape_str(av));
    Node n;
    n.op = Op::kRow;
    n.in0 = a.id;
    n.i0 = i;
    n.value = Tensor::zeros({av.shape[1]});
    const double* src = av.data.data() + i * av.shape[1];
    std::copy(src, src + av.shape[1], n.value.data.begin());
    return push(std::move(n));
}

Var Tape::sum(Var a) {
    Node n;
    n.op = Op::kSum;
    n.in0 = a.id;
    double s = 0.0;
    for (double v : value(a).data) s += v;
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

Var Tape::mean(Var a) {
    const Tensor& av = value(a);
    if (av.numel() == 0) fail("tape", "mean of empty tensor");
    Node n;
    n.op = Op::kMean;
    n.in0 = a.id;
    double s = 0.0;
    for (double v : av.data) s += v;
    n.value = Tensor::scalar(s / static_cast<double>(av.numel()));
    return push(std::move(n));
}

void Tape::backward(Var loss) {
    check(loss);
    if (node(loss).value.numel() != 1)
        fail("tape", "backward needs a scalar loss, got ", shape_str(node(loss).value));
    for (int32_t i = 0; i <= loss.id; ++i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        n.grad = Tensor::zeros(n.value.shape);
    }
    nodes_[static_cast<size_t>(loss.id)].grad.at(0) = 1.0;
    for (int32_t i = loss.id; i >= 0; --i) backward_node(i);
}

void Tape::backward_node(int32_t idx) {
    Node& n = nodes_[static_cast<size_t>(idx)];
    const Tensor& g = n.grad;
    auto in = [&](int32_t id) -> Node& { return nodes_[static_cast<size_t>(id)]; };

    switch (n.op) {
        case Op::kConstant:
            break;
        case Op::kParam:
            for (size_t i = 0; i < g.data.size(); ++i) n.param->grad.data[i] += g.data[i];
            break;
        case Op::kGatherRows: {
            int64_t cols = n.value.shape[1];
            for (size_t r = 0; r < n.ids.size(); ++r) {
                double* dst = n.param->grad.data.data() + static_cast<int64_t>(n.ids[r]) * cols;
                const double* src = g.data.data() + static_cast<int64_t>(r) * cols;
                for (int64_t j = 0; j < cols; ++j) dst[j] += src[j];
            }
            break;
        }
        case Op::kMatmul: {
            Node& a = in(n.in0);
            Node& b = in(n.in1);
            if (b.value.rank() == 1) {
                add_outer(a.grad, g, b.value);
                add_matvec_t(b.grad, a.value, g);
            } else {
                add_matmul_nt(a.grad, g, b.value);
                add_matmul_tn(b.grad, a.value, g);
            }
            break;
        }
        case Op::kMatvecT: {
            // c = A^T w: dA += w (x) dc, dw += A dc
            Node& a = in(n.in0);
            Node& w = in(n.in1);
            add_outer(a.grad, w.value, g);
            Tensor t = matmul_serial(a.value, g);
            for (size_t i = 0; i < w.grad.data.size(); ++i) w.grad.data[i] += t.data[i];
            break;
        }
        case Op::kAdd: {
            Node& a = in(n.in0);
            Node& b = in(n.in1);
            for (size_t i = 0; i < g.data.size(); ++i) {
                a.grad.data[i] += g.data[i];
                b.grad.data[i] += g.data[i];
            }
            break;
        }
        case Op::kSub: {
            Node& a = in(n.in0);
            Node& b = in(n.in1);
            for (size_t i = 0; i < g.data.size(); ++i) {
                a.grad.data[i] += g.data[i];
                b.grad.data[i] -= g.data[i];
            }
            break;
        }
        case Op::kMul: {
            Node& a = in(n.in0);
            Node& b = in(n.in1);
            for (size_t i = 0; i < g.data.size(); ++i) {
                a.grad.data[i] += g.data[i] * b.value.data[i];
                b.grad.data[i] += g.data[i] * a.value.data[i];
            }
            break;
        }
        case Op::kScale: {
            Node& a = in(n.in0);
            for (size_t i = 0; i < g.data.size(); ++i) a.grad.data[i] += n.scalar * g.data[i];
            break;
        }
        case Op::kActivation: {
            Node& a = in(n.in0);
            for (size_t i = 0; i < g.data.size(); ++i) {
                double y = n.value.data[i];
                double d = 0.0;
                switch (n.act) {
                    case Activation::kTanh: d = 1.0 - y * y; break;
                    case Activation::kSigmoid: d = y * (1.0 - y); break;
                    case Activation::kRelu: d = a.value.data[i] > 0.0 ? 1.0 : 0.0; break;
                    case Activation::kIdentity: d = 1.0; break;
                }
                a.grad.data[i] += d * g.data[i];
            }
            break;
        }
        case Op::kSoftmax: {
            Node& a = in(n.in0);
            double dot = 0.0;
            for (size_t i = 0; i < g.data.size(); ++i) dot += g.data[i] * n.value.data[i];
            for (size_t i = 0; i < g.data.size(); ++i)
                a.grad.data[i] += n.value.data[i] * (g.data[i] - dot);
            break;
        }
        case Op::kCrossEntropy: {
            // d loss / d logits = softmax(logits) - onehot(label)
            Node& a = in(n.in0);
            double gs = g.at(0);
            double mx = *std::max_element(a.value.data.begin(), a.value.data.end());
            double sum = 0.0;
            for (double v : a.value.data) sum += std::exp(v - mx);
            for (size_t i = 0; i < a.value.data.size(); ++i) {
                double p = std::exp(a.value.data[i] - mx) / sum;
                double onehot = static_cast<int64_t>(i) == n.i0 ? 1.0 : 0.0;
                a.grad.data[i] += gs * (p - onehot);
            }
            break;
        }
        case Op::kConcat: {
            Node& a = in(n.in0);
            Node& b = in(n.in1);
            int64_t na = a.value.numel();
            for (int64_t i = 0; i < na; ++i) a.grad.at(i) += g.at(i);
            for (int64_t i = 0; i < b.value.numel(); ++i) b.grad.at(i) += g.at(na + i);
            break;
        }
        case Op::kSlice: {
            Node& a = in(n.in0);
            for (int64_t i = 0; i < n.i1; ++i) a.grad.at(n.i0 + i) += g.at(i);
            break;
        }
        case Op::kRow: {
            Node& a = in(n.in0);
            int64_t cols = a.value.shape[1];
            double* dst = a.grad.data.data() + n.i0 * cols;
            for (int64_t j = 0; j < cols; ++j) dst[j] += g.at(j);
            break;
        }
        case Op::kSum: {
            Node& a = in(n.in0);
            double gs = g.at(0);
            for (double& v : a.grad.data) v += gs;
            break;
        }
        case Op::kMean: {
            Node& a = in(n.in0);
            double gs = g.at(0) / static_cast<double>(a.value.numel());
            for (double& v : a.grad.data) v += gs;
            break;
        }
    }
}

}  // namespace pmem
