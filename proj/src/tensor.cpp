#include "pmem/tensor.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pmem {

namespace {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) fail("shape", "negative dimension in ", shape_str(shape));
        n *= d;
    }
    return n;
}

void check_rank(const std::vector<int64_t>& shape) {
    if (shape.empty() || shape.size() > 2)
        fail("shape", "only rank 1 and 2 tensors are supported, got ", shape_str(shape));
}

}  // namespace

Tensor::Tensor(std::vector<int64_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    check_rank(shape);
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        fail("shape", "data size ", data.size(), " does not match shape ", shape_str(shape));
}

Tensor Tensor::zeros(const std::vector<int64_t>& shape) {
    check_rank(shape);
    return Tensor(shape, std::vector<double>(static_cast<size_t>(shape_numel(shape)), 0.0));
}

Tensor Tensor::full(const std::vector<int64_t>& shape, double v) {
    check_rank(shape);
    return Tensor(shape, std::vector<double>(static_cast<size_t>(shape_numel(shape)), v));
}

Tensor Tensor::vec(std::vector<double> v) {
    int64_t n = static_cast<int64_t>(v.size());
    return Tensor({n}, std::move(v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::matrix(int64_t r, int64_t c, std::vector<double> v) {
    return Tensor({r, c}, std::move(v));
}

int64_t Tensor::numel() const { return static_cast<int64_t>(data.size()); }

int64_t Tensor::rows() const {
    if (rank() != 2) fail("shape", "rows() on rank-", rank(), " tensor");
    return shape[0];
}

int64_t Tensor::cols() const {
    if (rank() != 2) fail("shape", "cols() on rank-", rank(), " tensor");
    return shape[1];
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(double v) {
    for (double& x : data) x = v;
}

std::string shape_str(const std::vector<int64_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::string shape_str(const Tensor& t) { return shape_str(t.shape); }

namespace {

// Shared scalar kernel: one output row of C = A * B. Keeping a single kernel
// guarantees the serial and parallel paths agree bitwise.
inline void matmul_row(const double* a_row, const double* b, double* c_row, int64_t k,
                       int64_t n) {
    for (int64_t j = 0; j < n; ++j) c_row[j] = 0.0;
    for (int64_t kk = 0; kk < k; ++kk) {
        double av = a_row[kk];
        const double* b_row = b + kk * n;
        for (int64_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
    }
}

inline void matvec_row(const double* a_row, const double* x, double* out, int64_t k) {
    double acc = 0.0;
    for (int64_t kk = 0; kk < k; ++kk) acc += a_row[kk] * x[kk];
    *out = acc;
}

struct MatmulDims {
    int64_t m, k, n;
    bool vec_rhs;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2) fail("shape", "matmul lhs must be rank 2, got ", shape_str(a));
    MatmulDims d{};
    d.m = a.shape[0];
    d.k = a.shape[1];
    if (b.rank() == 1) {
        d.n = 1;
        d.vec_rhs = true;
        if (b.shape[0] != d.k)
            fail("shape", "matmul mismatch ", shape_str(a), " * ", shape_str(b));
    } else {
        d.n = b.shape[1];
        d.vec_rhs = false;
        if (b.shape[0] != d.k)
            fail("shape", "matmul mismatch ", shape_str(a), " * ", shape_str(b));
    }
    return d;
}

Tensor matmul_impl(const Tensor& a, const Tensor& b, bool allow_parallel) {
    MatmulDims d = matmul_dims(a, b);
    Tensor c = d.vec_rhs ? Tensor::zeros({d.m}) : Tensor::zeros({d.m, d.n});
    const double* ap = a.data.data();
    const double* bp = b.data.data();
    double* cp = c.data.data();

#ifdef _OPENMP
    // Row partitioning only; every element is still produced by matmul_row,
    // so thread count cannot change the result.
    bool parallel = allow_parallel && d.m * d.k * d.n >= (1 << 16) && omp_get_max_threads() > 1;
    if (parallel) {
        if (d.vec_rhs) {
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < d.m; ++i) matvec_row(ap + i * d.k, bp, cp + i, d.k);
        } else {
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < d.m; ++i)
                matmul_row(ap + i * d.k, bp, cp + i * d.n, d.k, d.n);
        }
        return c;
    }
#else
    (void)allow_parallel;
#endif
    if (d.vec_rhs) {
        for (int64_t i = 0; i < d.m; ++i) matvec_row(ap + i * d.k, bp, cp + i, d.k);
    } else {
        for (int64_t i = 0; i < d.m; ++i) matmul_row(ap + i * d.k, bp, cp + i * d.n, d.k, d.n);
    }
    return c;
}

}  // namespace

Tensor matmul_serial(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, false); }

Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, true); }

void add_outer(Tensor& out, const Tensor& dc, const Tensor& x) {
    if (dc.rank() != 1 || x.rank() != 1 || out.rank() != 2 || out.shape[0] != dc.shape[0] ||
        out.shape[1] != x.shape[0])
        fail("shape", "add_outer mismatch ", shape_str(out), " += ", shape_str(dc), " (x) ",
             shape_str(x));
    int64_t m = dc.shape[0], k = x.shape[0];
    for (int64_t i = 0; i < m; ++i) {
        double g = dc.at(i);
        double* row = out.data.data() + i * k;
        const double* xp = x.data.data();
        for (int64_t j = 0; j < k; ++j) row[j] += g * xp[j];
    }
}

void add_matvec_t(Tensor& out, const Tensor& a, const Tensor& dc) {
    if (a.rank() != 2 || dc.rank() != 1 || out.rank() != 1 || a.shape[0] != dc.shape[0] ||
        a.shape[1] != out.shape[0])
        fail("shape", "add_matvec_t mismatch ", shape_str(a), "^T * ", shape_str(dc));
    int64_t m = a.shape[0], k = a.shape[1];
    for (int64_t i = 0; i < m; ++i) {
        double g = dc.at(i);
        const double* row = a.data.data() + i * k;
        double* op = out.data.data();
        for (int64_t j = 0; j < k; ++j) op[j] += g * row[j];
    }
}

void add_matmul_nt(Tensor& da, const Tensor& dc, const Tensor& b) {
    if (da.rank() != 2 || dc.rank() != 2 || b.rank() != 2)
        fail("shape", "add_matmul_nt needs rank-2 operands");
    int64_t m = dc.shape[0], n = dc.shape[1], k = b.shape[0];
    if (b.shape[1] != n || da.shape[0] != m || da.shape[1] != k)
        fail("shape", "add_matmul_nt mismatch");
    for (int64_t i = 0; i < m; ++i)
        for (int64_t kk = 0; kk < k; ++kk) {
            const double* dcr = dc.data.data() + i * n;
            const double* br = b.data.data() + kk * n;
            double acc = 0.0;
            for (int64_t j = 0; j < n; ++j) acc += dcr[j] * br[j];
            da.at(i, kk) += acc;
        }
}

void add_matmul_tn(Tensor& db, const Tensor& a, const Tensor& dc) {
    if (db.rank() != 2 || a.rank() != 2 || dc.rank() != 2)
        fail("shape", "add_matmul_tn needs rank-2 operands");
    int64_t m = a.shape[0], k = a.shape[1], n = dc.shape[1];
    if (dc.shape[0] != m || db.shape[0] != k || db.shape[1] != n)
        fail("shape", "add_matmul_tn mismatch");
    for (int64_t i = 0; i < m; ++i) {
        const double* ar = a.data.data() + i * k;
        const double* dcr = dc.data.data() + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            double av = ar[kk];
            double* dbr = db.data.data() + kk * n;
            for (int64_t j = 0; j < n; ++j) dbr[j] += av * dcr[j];
        }
    }
}

}  // namespace pmem
