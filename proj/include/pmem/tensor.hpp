#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pmem/common.hpp"

namespace pmem {

// Dense row-major tensor of doubles. The model only ever needs rank 1 and 2;
// higher ranks are rejected at construction.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int64_t> shape_, std::vector<double> data_);

    static Tensor zeros(const std::vector<int64_t>& shape);
    static Tensor full(const std::vector<int64_t>& shape, double v);
    static Tensor vec(std::vector<double> v);
    static Tensor scalar(double v);
    static Tensor matrix(int64_t r, int64_t c, std::vector<double> v);

    int64_t rank() const { return static_cast<int64_t>(shape.size()); }
    int64_t numel() const;
    int64_t rows() const;
    int64_t cols() const;

    double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return data[static_cast<size_t>(i)]; }
    double& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols() + j)]; }
    double at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols() + j)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
    void fill(double v);
};

std::string shape_str(const std::vector<int64_t>& shape);
std::string shape_str(const Tensor& t);

// C = A * B for A [m x k] with B either [k x n] or a rank-1 [k] vector.
// matmul_serial is the reference kernel; matmul additionally parallelizes
// over output rows when the work is large enough. Both produce bitwise
// identical results because each output element is computed by the same
// scalar loop.
Tensor matmul_serial(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);

// out += dc (x) x, the rank-1 outer product; shapes [m], [k] -> [m x k]
void add_outer(Tensor& out, const Tensor& dc, const Tensor& x);

// out += A^T * dc for A [m x k], dc [m]; out is rank-1 [k]
void add_matvec_t(Tensor& out, const Tensor& a, const Tensor& dc);

// dA += dC * B^T and dB += A^T * dC for the rank-2 case
void add_matmul_nt(Tensor& da, const Tensor& dc, const Tensor& b);
void add_matmul_tn(Tensor& db, const Tensor& a, const Tensor& dc);

}  // namespace pmem
