// Compares the OpenMP kernels against their serial reference twins: same
// results bitwise (by construction: identical per-row scalar kernels), wall
// time side by side.

#include <chrono>
#include <cstdint>
#include <iomanip>
#include <iostream>
#include <string>

#include "pmem/rng.hpp"
#include "pmem/tensor.hpp"
#include "pmem/theory.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

pmem::Tensor random_matrix(int64_t r, int64_t c, pmem::Rng& rng) {
    pmem::Tensor t = pmem::Tensor::zeros({r, c});
    for (double& v : t.data) v = rng.normal();
    return t;
}

bool bitwise_equal(const pmem::Tensor& a, const pmem::Tensor& b) {
    if (a.shape != b.shape) return false;
    for (size_t i = 0; i < a.data.size(); ++i)
        if (a.data[i] != b.data[i]) return false;
    return true;
}

void bench_matmul(int64_t m, int64_t k, int64_t n, int reps) {
    pmem::Rng rng(42);
    pmem::Tensor a = random_matrix(m, k, rng);
    pmem::Tensor b = random_matrix(k, n, rng);

    pmem::Tensor serial = pmem::matmul_serial(a, b);  // warm-up + reference
    pmem::Tensor parallel = pmem::matmul(a, b);
    bool same = bitwise_equal(serial, parallel);

    Clock::time_point t0 = Clock::now();
    for (int r = 0; r < reps; ++r) serial = pmem::matmul_serial(a, b);
    double ts = seconds_since(t0) / reps;

    t0 = Clock::now();
    for (int r = 0; r < reps; ++r) parallel = pmem::matmul(a, b);
    double tp = seconds_since(t0) / reps;

    double gflop = 2.0 * static_cast<double>(m) * k * n / 1e9;
    std::cout << "matmul " << m << "x" << k << " * " << k << "x" << n << "  serial "
              << std::fixed << std::setprecision(4) << ts * 1e3 << " ms (" << gflop / ts
              << " GFlop/s)  parallel " << tp * 1e3 << " ms (" << gflop / tp
              << " GFlop/s)  speedup " << std::setprecision(2) << ts / tp << "x  bitwise "
              << (same ? "equal" : "DIFFERENT") << "\n";
    std::cout.unsetf(std::ios::fixed);
}

void bench_verifier(int64_t trials) {
    pmem::SimulationConfig cfg;
    cfg.trials = trials;
    cfg.seed = 7;

    Clock::time_point t0 = Clock::now();
    pmem::VerifierReport serial = pmem::verify_theorem(cfg, /*force_serial=*/true);
    double ts = seconds_since(t0);

    t0 = Clock::now();
    pmem::VerifierReport parallel = pmem::verify_theorem(cfg, /*force_serial=*/false);
    double tp = seconds_since(t0);

    bool same = serial.mc_state_msd == parallel.mc_state_msd &&
                serial.mc_mem_msd == parallel.mc_mem_msd &&
                serial.var_delta_c_cond == parallel.var_delta_c_cond;
    std::cout << "verifier " << trials << " trials  serial " << std::fixed
              << std::setprecision(3) << ts << " s  parallel " << tp << " s  speedup "
              << std::setprecision(2) << ts / tp << "x  bitwise "
              << (same ? "equal" : "DIFFERENT") << "\n";
    std::cout.unsetf(std::ios::fixed);
}

}  // namespace

int main(int argc, char** argv) {
    int64_t trials = 100000;
    if (argc > 1) trials = std::stoll(argv[1]);
#ifdef _OPENMP
    std::cout << "OpenMP threads: " << omp_get_max_threads() << "\n";
#else
    std::cout << "OpenMP not enabled\n";
#endif
    bench_matmul(64, 64, 64, 50);
    bench_matmul(256, 256, 256, 10);
    bench_matmul(512, 512, 512, 3);
    bench_verifier(trials);
    return 0;
}
