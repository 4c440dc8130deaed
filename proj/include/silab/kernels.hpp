#pragma once

#include <cstddef>
#include <string>

// Dense double-precision kernels used by the tensor engine and the
// optimizers. Every kernel has a scalar reference implementation and,
// on x86-64 with AVX2, a vectorized variant selected once at startup.
// The two are equivalence-tested in tests/test_kernels.cpp.
namespace silab::kernels {

struct Ops {
    // out = sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // x[i] *= alpha
    void (*scale)(double alpha, double* x, std::size_t n);
    // out[i] = max(x[i], 0)
    void (*relu)(const double* x, double* out, std::size_t n);
    // dx[i] += g[i] * (x[i] > 0)
    void (*relu_backward)(const double* x, const double* g, double* dx, std::size_t n);
    double (*sum)(const double* x, std::size_t n);
    double (*sq_norm)(const double* x, std::size_t n);
    // c[m x n] += a[m x k] * b[k x n], row-major
    void (*matmul_acc)(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n);
    // c[m x n] += a[m x k] * b[n x k]^T
    void (*matmul_nt_acc)(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t k, std::size_t n);
    // c[k x n] += a[m x k]^T * b[m x n]
    void (*matmul_tn_acc)(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t k, std::size_t n);
};

extern const Ops kScalar;
#ifdef SILAB_BUILD_AVX2
extern const Ops kAvx2;
#endif

// Active implementation, chosen from CPUID at first use.
const Ops& active();
const std::string& active_name();

// Force a specific backend ("scalar" or "avx2"); used by tests.
bool set_active(const std::string& name);

}  // namespace silab::kernels
