// Times the OpenMP kernels against their serial reference implementations
// and checks that both paths agree bit-for-bit.

#include <chrono>
#include <cstdio>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "moi/kernels.hpp"
#include "moi/rng.hpp"

using moi::Matrix;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, moi::Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.normal();
    return m;
}

template <typename F>
double time_ms(F&& f, int reps) {
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) f();
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

bool bit_equal(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols &&
           std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (compiled without OpenMP)\n");
#endif
    std::printf("%-12s %8s %12s %12s %8s %6s\n", "kernel", "size", "serial_ms",
                "parallel_ms", "speedup", "equal");

    moi::Rng rng(42);
    for (std::size_t n : {128, 256, 512, 1024}) {
        Matrix a = random_matrix(n, n, rng);
        Matrix b = random_matrix(n, n, rng);
        const int reps = n <= 256 ? 20 : 5;

        Matrix out_serial, out_parallel;
        const double t_serial = time_ms([&] { out_serial = moi::serial::matmul(a, b); }, reps);
        const double t_parallel = time_ms([&] { out_parallel = moi::matmul(a, b); }, reps);
        std::printf("%-12s %8zu %12.3f %12.3f %7.2fx %6s\n", "matmul", n, t_serial,
                    t_parallel, t_serial / t_parallel,
                    bit_equal(out_serial, out_parallel) ? "yes" : "NO");
    }

    for (std::size_t n : {512, 2048}) {
        Matrix a = random_matrix(n, n, rng);
        Matrix gamma(1, n, 1.0), beta(1, n, 0.0);
        const int reps = 20;

        Matrix g_serial, g_parallel;
        double t_serial = time_ms([&] { g_serial = moi::serial::gelu(a); }, reps);
        double t_parallel = time_ms([&] { g_parallel = moi::gelu(a); }, reps);
        std::printf("%-12s %8zu %12.3f %12.3f %7.2fx %6s\n", "gelu", n, t_serial,
                    t_parallel, t_serial / t_parallel,
                    bit_equal(g_serial, g_parallel) ? "yes" : "NO");

        Matrix l_serial, l_parallel;
        t_serial = time_ms([&] { l_serial = moi::serial::layernorm(a, gamma, beta); }, reps);
        t_parallel = time_ms([&] { l_parallel = moi::layernorm(a, gamma, beta); }, reps);
        std::printf("%-12s %8zu %12.3f %12.3f %7.2fx %6s\n", "layernorm", n, t_serial,
                    t_parallel, t_serial / t_parallel,
                    bit_equal(l_serial, l_parallel) ? "yes" : "NO");
    }
    return 0;
}
