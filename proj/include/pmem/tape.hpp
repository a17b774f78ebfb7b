#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pmem/tensor.hpp"

namespace pmem {

// Trainable array. value and grad always have identical shape; grad is
// accumulated by Tape::backward and cleared only by zero_grad.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string name_, Tensor value_)
        : name(std::move(name_)), value(std::move(value_)), grad(Tensor::zeros(value.shape)) {}

    void zero_grad() { grad.fill(0.0); }
    int64_t numel() const { return value.numel(); }
};

enum class Activation { kTanh, kSigmoid, kRelu, kIdentity };

// Handle into a Tape. Valid only for the tape that produced it.
struct Var {
    int32_t id = -1;
};

// Reverse-mode autodiff over a linear record of operations. One tape per
// forward pass; clear() drops the record but keeps allocation capacity.
// backward(loss) accumulates into the grad field of every Parameter that
// participated. Repeated backward calls without zero_grad accumulate.
class Tape {
public:
    Var constant(Tensor t);
    Var param(Parameter& p);

    // rows of table.value selected by ids; duplicates accumulate gradient
    Var gather_rows(Parameter& table, std::vector<int32_t> ids);

    Var matmul(Var a, Var b);    // [m x k] * ([k x n] | [k])
    Var matvec_t(Var a, Var w);  // A^T w for A [n x d], w [n] -> [d]
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise
    Var scale(Var a, double s);
    Var activation(Var a, Activation kind);
    Var softmax(Var a);                    // rank-1, max-subtracted
    Var cross_entropy(Var logits, int64_t label);  // -log softmax(logits)[label], [1]
    Var concat(Var a, Var b);              // rank-1
    Var slice(Var a, int64_t offset, int64_t len);  // rank-1
    Var row(Var a, int64_t i);             // rank-2 -> rank-1
    Var sum(Var a);                        // -> [1]
    Var mean(Var a);                       // -> [1]

    void backward(Var loss);

    const Tensor& value(Var v) const;
    const Tensor& grad(Var v) const;  // valid after backward for nodes it reached
    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    enum class Op {
        kConstant,
        kParam,
        kGatherRows,
        kMatmul,
        kMatvecT,
        kAdd,
        kSub,
        kMul,
        kScale,
        kActivation,
        kSoftmax,
        kCrossEntropy,
        kConcat,
        kSlice,
        kRow,
        kSum,
        kMean,
    };

    struct Node {
        Op op;
        int32_t in0 = -1;
        int32_t in1 = -1;
        Tensor value;
        Tensor grad;
        Parameter* param = nullptr;
        std::vector<int32_t> ids;
        int64_t i0 = 0, i1 = 0;
        double scalar = 0.0;
        Activation act = Activation::kIdentity;
    };

    Var push(Node n);
    const Node& node(Var v) const;
    void check(Var v) const;
    void backward_node(int32_t i);

    std::vector<Node> nodes_;
};

}  // namespace pmem
