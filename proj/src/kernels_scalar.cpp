#include "silab/kernels.hpp"

namespace silab::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double alpha, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void relu_scalar(const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_scalar(const double* x, const double* g, double* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] > 0.0) dx[i] += g[i];
}

double sum_scalar(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double sq_norm_scalar(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

void matmul_acc_scalar(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = b + p * n;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void matmul_nt_acc_scalar(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            c[i * n + j] += dot_scalar(a + i * k, b + j * k, k);
        }
    }
}

void matmul_tn_acc_scalar(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = arow[p];
            if (aip == 0.0) continue;
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

}  // namespace

const Ops kScalar = {
    dot_scalar,       axpy_scalar,      scale_scalar,
    relu_scalar,      relu_backward_scalar,
    sum_scalar,       sq_norm_scalar,
    matmul_acc_scalar, matmul_nt_acc_scalar, matmul_tn_acc_scalar,
};

}  // namespace silab::kernels
