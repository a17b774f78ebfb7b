#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pmem/rng.hpp"
#include "pmem/tensor.hpp"

using namespace pmem;

namespace {

// Independent reference: textbook triple loop, no shared code with matmul.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    int64_t m = a.shape[0], k = a.shape[1];
    int64_t n = b.rank() == 2 ? b.shape[1] : 1;
    Tensor c = b.rank() == 2 ? Tensor::zeros({m, n}) : Tensor::zeros({m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (int64_t p = 0; p < k; ++p)
                s += a.data[size_t(i * k + p)] *
                     (b.rank() == 2 ? b.data[size_t(p * n + j)] : b.data[size_t(p)]);
            c.data[size_t(i * n + j)] = s;
        }
    return c;
}

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.data) v = rng.normal();
    return t;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return false;
    for (size_t i = 0; i < a.data.size(); ++i)
        if (a.data[i] != b.data[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("constructors and indexing") {
    Tensor z = Tensor::zeros({2, 3});
    CHECK(z.rank() == 2);
    CHECK(z.numel() == 6);
    CHECK(z.rows() == 2);
    CHECK(z.cols() == 3);
    for (double v : z.data) CHECK(v == 0.0);

    Tensor f = Tensor::full({4}, 2.5);
    CHECK(f.rank() == 1);
    for (double v : f.data) CHECK(v == 2.5);

    Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
    CHECK(m.at(0, 0) == 1);
    CHECK(m.at(0, 1) == 2);  // row-major
    CHECK(m.at(1, 0) == 3);
    CHECK(m.at(1, 1) == 4);
    m.at(1, 1) = 9;
    CHECK(m.data[3] == 9);

    Tensor v = Tensor::vec({7, 8});
    CHECK(v.rank() == 1);
    CHECK(v.at(1) == 8);

    Tensor s = Tensor::scalar(3.0);
    CHECK(s.numel() == 1);

    CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), Error);           // size mismatch
    CHECK_THROWS_AS(Tensor({2, 2, 2}, std::vector<double>(8, 0.0)), Error);  // rank 3
}

TEST_CASE("all_finite flags inf and nan") {
    Tensor t = Tensor::vec({1, 2, 3});
    CHECK(t.all_finite());
    t.at(1) = std::numeric_limits<double>::infinity();
    CHECK(!t.all_finite());
    t.at(1) = std::nan("");
    CHECK(!t.all_finite());
}

TEST_CASE("matmul hand oracle") {
    // [[1,2],[3,4]] * [1,1]^T = [3,7]
    Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
    Tensor v = Tensor::vec({1, 1});
    Tensor out = matmul(a, v);
    REQUIRE(out.rank() == 1);
    CHECK(out.at(0) == 3.0);
    CHECK(out.at(1) == 7.0);

    Tensor b = Tensor::matrix(2, 1, {1, 1});
    Tensor out2 = matmul(a, b);
    REQUIRE(out2.rank() == 2);
    CHECK(out2.at(0, 0) == 3.0);
    CHECK(out2.at(1, 0) == 7.0);
}

TEST_CASE("matmul matches the triple-loop reference on random inputs") {
    Rng rng(7);
    for (auto [m, k, n] : {std::tuple<int64_t, int64_t, int64_t>{3, 4, 5},
                           {1, 7, 2},
                           {8, 8, 8},
                           {17, 3, 13}}) {
        Tensor a = random_tensor({m, k}, rng);
        Tensor b = random_tensor({k, n}, rng);
        Tensor got = matmul(a, b);
        Tensor want = naive_matmul(a, b);
        REQUIRE(got.shape == want.shape);
        for (int64_t i = 0; i < got.numel(); ++i)
            CHECK(got.data[size_t(i)] == doctest::Approx(want.data[size_t(i)]).epsilon(1e-12));

        Tensor x = random_tensor({k}, rng);
        Tensor gv = matmul(a, x);
        Tensor wv = naive_matmul(a, x);
        for (int64_t i = 0; i < gv.numel(); ++i)
            CHECK(gv.data[size_t(i)] == doctest::Approx(wv.data[size_t(i)]).epsilon(1e-12));
    }
}

TEST_CASE("parallel and serial matmul are bitwise identical") {
    Rng rng(11);
    Tensor a = random_tensor({64, 48}, rng);
    Tensor b = random_tensor({48, 80}, rng);
    CHECK(bitwise_equal(matmul(a, b), matmul_serial(a, b)));
    Tensor v = random_tensor({48}, rng);
    CHECK(bitwise_equal(matmul(a, v), matmul_serial(a, v)));
}

TEST_CASE("matmul rejects mismatched shapes") {
    Tensor a = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(matmul(a, Tensor::zeros({2, 2})), Error);
    CHECK_THROWS_AS(matmul(a, Tensor::zeros({4})), Error);
    CHECK_THROWS_AS(matmul(Tensor::zeros({3}), a), Error);
}

TEST_CASE("add_outer accumulates dc x^T") {
    Tensor out = Tensor::full({2, 3}, 1.0);
    Tensor dc = Tensor::vec({2, 3});
    Tensor x = Tensor::vec({1, 10, 100});
    add_outer(out, dc, x);
    CHECK(out.at(0, 0) == 1 + 2 * 1);
    CHECK(out.at(0, 1) == 1 + 2 * 10);
    CHECK(out.at(0, 2) == 1 + 2 * 100);
    CHECK(out.at(1, 0) == 1 + 3 * 1);
    CHECK(out.at(1, 2) == 1 + 3 * 100);
}

TEST_CASE("add_matvec_t accumulates A^T dc") {
    Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    Tensor dc = Tensor::vec({10, 1});
    Tensor out = Tensor::zeros({3});
    add_matvec_t(out, a, dc);
    CHECK(out.at(0) == 1 * 10 + 4 * 1);
    CHECK(out.at(1) == 2 * 10 + 5 * 1);
    CHECK(out.at(2) == 3 * 10 + 6 * 1);
}

TEST_CASE("add_matmul_nt and add_matmul_tn match triple-loop references") {
    Rng rng(3);
    int64_t m = 4, k = 5, n = 6;
    Tensor a = random_tensor({m, k}, rng);
    Tensor b = random_tensor({k, n}, rng);
    Tensor dc = random_tensor({m, n}, rng);

    Tensor da = Tensor::zeros({m, k});
    add_matmul_nt(da, dc, b);  // dA += dC B^T
    for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (int64_t j = 0; j < n; ++j) s += dc.at(i, j) * b.at(p, j);
            CHECK(da.at(i, p) == doctest::Approx(s).epsilon(1e-12));
        }

    Tensor db = Tensor::zeros({k, n});
    add_matmul_tn(db, a, dc);  // dB += A^T dC
    for (int64_t p = 0; p < k; ++p)
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (int64_t i = 0; i < m; ++i) s += a.at(i, p) * dc.at(i, j);
            CHECK(db.at(p, j) == doctest::Approx(s).epsilon(1e-12));
        }
}
