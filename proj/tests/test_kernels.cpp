#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "silab/kernels.hpp"

using namespace silab;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = normal(rng);
    return v;
}

bool close(double a, double b, double tol = 1e-12) {
    return std::abs(a - b) <= tol * (std::abs(a) + std::abs(b) + 1.0);
}

bool close_vec(const std::vector<double>& a, const std::vector<double>& b,
               double tol = 1e-12) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!close(a[i], b[i], tol)) return false;
    return true;
}

}  // namespace

TEST_CASE("scalar kernels: reference semantics") {
    const auto& K = kernels::kScalar;
    std::vector<double> a{1.0, -2.0, 3.0}, b{4.0, 5.0, -6.0};
    CHECK(K.dot(a.data(), b.data(), 3) == doctest::Approx(1 * 4 - 2 * 5 - 3 * 6));
    CHECK(K.sum(a.data(), 3) == doctest::Approx(2.0));
    CHECK(K.sq_norm(a.data(), 3) == doctest::Approx(14.0));

    std::vector<double> y{1.0, 1.0, 1.0};
    K.axpy(2.0, a.data(), y.data(), 3);
    CHECK(close_vec(y, {3.0, -3.0, 7.0}));
    K.scale(0.5, y.data(), 3);
    CHECK(close_vec(y, {1.5, -1.5, 3.5}));

    std::vector<double> r(3);
    K.relu(a.data(), r.data(), 3);
    CHECK(close_vec(r, {1.0, 0.0, 3.0}));
    std::vector<double> dx(3, 0.0), g{10.0, 20.0, 30.0};
    K.relu_backward(a.data(), g.data(), dx.data(), 3);
    CHECK(close_vec(dx, {10.0, 0.0, 30.0}));
}

TEST_CASE("scalar kernels: matmul variants agree with naive loops") {
    std::mt19937_64 rng(1);
    const std::size_t m = 5, k = 7, n = 3;
    auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
    auto bt = std::vector<double>(n * k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];

    std::vector<double> want(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j)
                want[i * n + j] += a[i * k + p] * b[p * n + j];

    const auto& K = kernels::kScalar;
    std::vector<double> got(m * n, 0.0);
    K.matmul_acc(a.data(), b.data(), got.data(), m, k, n);
    CHECK(close_vec(got, want));

    got.assign(m * n, 0.0);
    K.matmul_nt_acc(a.data(), bt.data(), got.data(), m, k, n);
    CHECK(close_vec(got, want));

    // c[k x n] += a^T b with a [m x k]
    std::vector<double> at_b(k * n, 0.0), want_tn(k * n, 0.0);
    auto b2 = random_vec(m * n, rng);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j)
                want_tn[p * n + j] += a[i * k + p] * b2[i * n + j];
    K.matmul_tn_acc(a.data(), b2.data(), at_b.data(), m, k, n);
    CHECK(close_vec(at_b, want_tn));
}

TEST_CASE("vector backend matches the scalar reference on every op") {
    if (!kernels::set_active("avx2")) {
        MESSAGE("no vector backend on this cpu; scalar-only build");
        return;
    }
    std::mt19937_64 rng(2);
    for (std::size_t n : {1, 2, 3, 4, 7, 8, 31, 64, 257, 1000}) {
        auto a = random_vec(n, rng), b = random_vec(n, rng);
        const auto& S = kernels::kScalar;
        const auto& V = kernels::active();

        CHECK(close(S.dot(a.data(), b.data(), n), V.dot(a.data(), b.data(), n)));
        CHECK(close(S.sum(a.data(), n), V.sum(a.data(), n)));
        CHECK(close(S.sq_norm(a.data(), n), V.sq_norm(a.data(), n)));

        auto y1 = b, y2 = b;
        S.axpy(1.7, a.data(), y1.data(), n);
        V.axpy(1.7, a.data(), y2.data(), n);
        CHECK(close_vec(y1, y2));

        y1 = a; y2 = a;
        S.scale(-0.3, y1.data(), n);
        V.scale(-0.3, y2.data(), n);
        CHECK(close_vec(y1, y2));

        std::vector<double> r1(n), r2(n);
        S.relu(a.data(), r1.data(), n);
        V.relu(a.data(), r2.data(), n);
        CHECK(close_vec(r1, r2));

        std::vector<double> d1(n, 0.1), d2(n, 0.1);
        S.relu_backward(a.data(), b.data(), d1.data(), n);
        V.relu_backward(a.data(), b.data(), d2.data(), n);
        CHECK(close_vec(d1, d2));
    }

    for (auto [m, k, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1},
                           {2, 3, 4}, {5, 8, 5}, {7, 13, 11}, {16, 16, 16}}) {
        auto a = random_vec(m * k, rng);
        auto b = random_vec(k * n, rng);
        auto bnt = random_vec(n * k, rng);
        auto btn = random_vec(m * n, rng);
        const auto& S = kernels::kScalar;
        const auto& V = kernels::active();

        std::vector<double> c1(m * n, 0.5), c2(m * n, 0.5);
        S.matmul_acc(a.data(), b.data(), c1.data(), m, k, n);
        V.matmul_acc(a.data(), b.data(), c2.data(), m, k, n);
        CHECK(close_vec(c1, c2));

        c1.assign(m * n, -0.25); c2.assign(m * n, -0.25);
        S.matmul_nt_acc(a.data(), bnt.data(), c1.data(), m, k, n);
        V.matmul_nt_acc(a.data(), bnt.data(), c2.data(), m, k, n);
        CHECK(close_vec(c1, c2));

        std::vector<double> t1(k * n, 0.0), t2(k * n, 0.0);
        S.matmul_tn_acc(a.data(), btn.data(), t1.data(), m, k, n);
        V.matmul_tn_acc(a.data(), btn.data(), t2.data(), m, k, n);
        CHECK(close_vec(t1, t2));
    }
    CHECK(kernels::active_name() == "avx2");
}

TEST_CASE("backend selection is explicit and reversible") {
    const std::string before = kernels::active_name();
    CHECK(kernels::set_active("scalar"));
    CHECK(kernels::active_name() == "scalar");
    CHECK_FALSE(kernels::set_active("not-a-backend"));
    kernels::set_active(before);
}
